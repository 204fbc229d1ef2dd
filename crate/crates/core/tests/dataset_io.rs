use std::fs;

use ruleforce::ingest::{DigitPools, RawDigitImage};
use ruleforce::rules::verify;
use ruleforce::synth::{
    blockout_split, digit_band, hard_split, load_dataset, save_dataset, synthesize_dataset,
    verify_dataset, PerturbationKind, SplitCounts, SynthError, HEIGHT,
};
use ruleforce::RuleId;

/// Two images per digit, each a distinct flat shade.
fn shade_pools() -> DigitPools {
    let mut pools = DigitPools::new("shades");
    for d in 0..10u8 {
        for copy in 0..2u8 {
            pools.pools[d as usize].push(RawDigitImage::filled(20 * d + copy + 1));
        }
    }
    pools
}

fn counts() -> SplitCounts {
    SplitCounts {
        train: 30,
        val: 10,
        test: 12,
    }
}

#[test]
fn synthesis_is_seeded_and_conforming() {
    let pools = shade_pools();
    for rule in RuleId::ALL {
        let a = synthesize_dataset(rule, &pools, 7, counts()).unwrap();
        let b = synthesize_dataset(rule, &pools, 7, counts()).unwrap();
        let c = synthesize_dataset(rule, &pools, 8, counts()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.manifest.content_hash, c.manifest.content_hash);
        assert_eq!(a.manifest.content_hash.len(), 64);
        assert!(verify_dataset(&a).all_conform());
        assert_eq!(a.train.len(), 30);
        if rule == RuleId::Rule3 {
            assert!(a.train.iter().all(|e| e.label.digit(0).value() != 0));
        }
        assert!(a.train.iter().all(|e| verify(rule, &e.label)));
    }
}

#[test]
fn round_trip_with_perturbations() {
    let pools = shade_pools();
    let mut hard = DigitPools::new("hard");
    hard.pools[5].push(RawDigitImage::filled(255));
    let mut ds = synthesize_dataset(RuleId::Rule2, &pools, 3, counts()).unwrap();
    let blocked = blockout_split(&ds.test, 9);
    for (b, e) in blocked.iter().zip(&ds.test) {
        assert_eq!(b.label, e.label);
        let dark_slots = (0..5)
            .filter(|&k| {
                let (lo, hi) = digit_band(k);
                (0..HEIGHT).all(|r| (lo..hi).all(|c| b.image.get(r, c) == 0.0))
            })
            .count();
        assert!(dark_slots >= 1);
    }
    ds.attach_perturbation(PerturbationKind::Blockout, 9, blocked, None);

    // only labels containing a 5 can take a hard image
    let with_five: Vec<_> = ds.test.iter().filter(|e| e.label.values().contains(&5)).cloned().collect();
    if !with_five.is_empty() {
        let hardened = hard_split(&with_five, &pools, &hard, 4).unwrap();
        ds.attach_perturbation(PerturbationKind::Hard, 4, hardened, Some("toy".into()));
    }
    let without_five = ds.test.iter().find(|e| !e.label.values().contains(&5)).unwrap();
    assert!(matches!(
        hard_split(std::slice::from_ref(without_five), &pools, &hard, 4),
        Err(SynthError::NoHardDigitAvailable(_))
    ));

    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert!(verify_dataset(&back).all_conform());

    // tampering with a stored image is detected through the hash
    let images = dir.path().join("val/images.bin");
    let mut bytes = fs::read(&images).unwrap();
    bytes[100] ^= 1;
    fs::write(&images, bytes).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(SynthError::HashMismatch { .. })));
}

#[test]
fn malformed_splits_are_rejected() {
    let ds = synthesize_dataset(RuleId::Rule1, &shade_pools(), 1, counts()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let labels = dir.path().join("test/labels.txt");
    let text = fs::read_to_string(&labels).unwrap();
    fs::write(&labels, text.replacen(char::is_numeric, "x", 1)).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(SynthError::Format { .. })));

    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let images = dir.path().join("train/images.bin");
    let bytes = fs::read(&images).unwrap();
    fs::write(&images, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(SynthError::Format { .. })));
}

#[test]
fn empty_pools_and_counts_rejected() {
    let mut pools = shade_pools();
    assert!(matches!(
        synthesize_dataset(RuleId::Rule1, &pools, 1, SplitCounts { train: 0, ..counts() }),
        Err(SynthError::EmptySplit)
    ));
    pools.pools[3].clear();
    assert!(matches!(
        synthesize_dataset(RuleId::Rule1, &pools, 1, counts()),
        Err(SynthError::EmptyPool(_))
    ));
}
