//! On-disk dataset layout:
//!
//! ```text
//! manifest.json
//! train/images.bin   raw rows of 28*112 bytes, one image after another
//! train/labels.txt   one five-digit label per line
//! val/ test/         same layout
//! test_blockout/ test_hard/   optional perturbed copies of test/
//! ```

use std::fs;
use std::path::Path;

use super::{
    hash_splits, serialize_split, Dataset, DatasetManifest, GrayImage, SequenceExample, SynthError,
    HEIGHT, WIDTH,
};
use crate::rules::{verify, DigitString, RuleId};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> SynthError {
    SynthError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn save_split(dir: &Path, name: &str, examples: &[SequenceExample]) -> Result<(), SynthError> {
    let split_dir = dir.join(name);
    fs::create_dir_all(&split_dir).map_err(io_err(&split_dir))?;
    let (images, labels) = serialize_split(examples);
    let images_path = split_dir.join("images.bin");
    fs::write(&images_path, images).map_err(io_err(&images_path))?;
    let labels_path = split_dir.join("labels.txt");
    fs::write(&labels_path, labels).map_err(io_err(&labels_path))?;
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<(), SynthError> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, SynthError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_split(dir, "train", &dataset.train)?;
    save_split(dir, "val", &dataset.val)?;
    save_split(dir, "test", &dataset.test)?;
    if let Some(split) = &dataset.test_blockout {
        save_split(dir, "test_blockout", split)?;
    }
    if let Some(split) = &dataset.test_hard {
        save_split(dir, "test_hard", split)?;
    }
    write_manifest(dir, &dataset.manifest)
}

/// Reads one split. Labels are parsed but not checked against `rule`.
pub fn load_split(dir: &Path, name: &str, rule: RuleId) -> Result<Vec<SequenceExample>, SynthError> {
    let split_dir = dir.join(name);
    let images_path = split_dir.join("images.bin");
    let labels_path = split_dir.join("labels.txt");
    let images = fs::read(&images_path).map_err(io_err(&images_path))?;
    let labels = fs::read_to_string(&labels_path).map_err(io_err(&labels_path))?;
    let labels: Vec<DigitString> = labels
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.parse()
                .map_err(|e| format_err(&labels_path, format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<_, _>>()?;
    if images.len() != labels.len() * HEIGHT * WIDTH {
        return Err(format_err(
            &images_path,
            format!("{} bytes for {} labels", images.len(), labels.len()),
        ));
    }
    Ok(images
        .chunks_exact(HEIGHT * WIDTH)
        .zip(labels)
        .map(|(bytes, label)| SequenceExample {
            image: GrayImage::from_bytes(bytes).expect("chunk has image size"),
            label,
            rule,
        })
        .collect())
}

/// Loads a dataset directory and checks the base splits against the
/// manifest's hash and counts.
pub fn load_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let manifest = read_manifest(dir)?;
    let rule = manifest.rule;
    let train = load_split(dir, "train", rule)?;
    let val = load_split(dir, "val", rule)?;
    let test = load_split(dir, "test", rule)?;
    let counts = (train.len(), val.len(), test.len());
    let expected = (manifest.counts.train, manifest.counts.val, manifest.counts.test);
    if counts != expected {
        return Err(format_err(
            dir,
            format!("split sizes {counts:?} differ from manifest {expected:?}"),
        ));
    }
    let actual = hash_splits([train.as_slice(), &val, &test]);
    if actual != manifest.content_hash {
        return Err(SynthError::HashMismatch {
            expected: manifest.content_hash.clone(),
            actual,
        });
    }
    let optional = |name: &str| -> Result<Option<Vec<SequenceExample>>, SynthError> {
        if dir.join(name).is_dir() {
            load_split(dir, name, rule).map(Some)
        } else {
            Ok(None)
        }
    };
    let test_blockout = optional("test_blockout")?;
    let test_hard = optional("test_hard")?;
    for record in &manifest.perturbations {
        let split = match record.split.as_str() {
            "test_blockout" => test_blockout.as_deref(),
            "test_hard" => test_hard.as_deref(),
            _ => None,
        };
        if let Some(split) = split {
            let actual = hash_splits([split]);
            if actual != record.content_hash {
                return Err(SynthError::HashMismatch {
                    expected: record.content_hash.clone(),
                    actual,
                });
            }
        }
    }
    Ok(Dataset {
        manifest,
        train,
        val,
        test,
        test_blockout,
        test_hard,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    /// (split name, examples, conforming labels)
    pub splits: Vec<(String, usize, usize)>,
}

impl VerifyReport {
    pub fn all_conform(&self) -> bool {
        self.splits.iter().all(|(_, n, ok)| n == ok)
    }
}

/// Rule compliance of every label in every split present.
pub fn verify_dataset(dataset: &Dataset) -> VerifyReport {
    let rule = dataset.manifest.rule;
    let splits = ["train", "val", "test", "test_blockout", "test_hard"]
        .into_iter()
        .filter_map(|name| dataset.split(name).map(|s| (name, s)))
        .map(|(name, split)| {
            let ok = split.iter().filter(|e| verify(rule, &e.label)).count();
            (name.to_string(), split.len(), ok)
        })
        .collect();
    VerifyReport { splits }
}
