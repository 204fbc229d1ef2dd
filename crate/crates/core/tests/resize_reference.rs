//! Strip resampling against a direct, unwindowed reference written in f64.

use ruleforce::ingest::RawDigitImage;
use ruleforce::synth::{concat_and_resize, GrayImage, HEIGHT, STRIP_WIDTH, WIDTH};

/// Each output column is a normalized triangle-weighted average of every
/// source column, with the triangle's half-width equal to the shrink factor.
fn reference_resize(strip: &[[f64; STRIP_WIDTH]; HEIGHT]) -> Vec<f64> {
    let scale = STRIP_WIDTH as f64 / WIDTH as f64;
    let mut out = vec![0.0; HEIGHT * WIDTH];
    for x in 0..WIDTH {
        let center = (x as f64 + 0.5) * scale;
        let w: Vec<f64> = (0..STRIP_WIDTH)
            .map(|j| (1.0 - ((j as f64 + 0.5 - center) / scale).abs()).max(0.0))
            .collect();
        let total: f64 = w.iter().sum();
        for row in 0..HEIGHT {
            out[row * WIDTH + x] = (0..STRIP_WIDTH).map(|j| w[j] * strip[row][j]).sum::<f64>() / total;
        }
    }
    out
}

fn parts_from(pixel: impl Fn(usize, usize, usize) -> u8) -> [RawDigitImage; 5] {
    std::array::from_fn(|k| {
        let mut px = [0u8; 784];
        for r in 0..28 {
            for c in 0..28 {
                px[r * 28 + c] = pixel(k, r, c);
            }
        }
        RawDigitImage::new(px)
    })
}

fn strip_of(parts: &[RawDigitImage; 5]) -> [[f64; STRIP_WIDTH]; HEIGHT] {
    let mut strip = [[0.0; STRIP_WIDTH]; HEIGHT];
    for (k, part) in parts.iter().enumerate() {
        for r in 0..28 {
            for c in 0..28 {
                strip[r][k * 28 + c] = part.get(r, c) as f64 / 255.0;
            }
        }
    }
    strip
}

fn resize(parts: &[RawDigitImage; 5]) -> GrayImage {
    concat_and_resize([&parts[0], &parts[1], &parts[2], &parts[3], &parts[4]])
}

#[test]
fn matches_reference_on_textured_input() {
    let parts = parts_from(|k, r, c| ((k * 53 + r * 29 + c * 71 + r * c) % 256) as u8);
    let got = resize(&parts);
    let expected = reference_resize(&strip_of(&parts));
    for (g, e) in got.pixels().iter().zip(&expected) {
        assert!((*g as f64 - e).abs() < 1e-5, "{g} vs {e}");
    }
}

#[test]
fn single_pixel_stays_in_its_band() {
    let ratio = WIDTH as f64 / STRIP_WIDTH as f64;
    let mut mass_sum = 0.0;
    for k in 0..5 {
        for c in 0..28 {
            let parts = parts_from(|kk, r, cc| if kk == k && r == 13 && cc == c { 255 } else { 0 });
            let got = resize(&parts);
            let expected = reference_resize(&strip_of(&parts));
            let mut mass = 0.0;
            for x in 0..WIDTH {
                for r in 0..HEIGHT {
                    let v = got.get(r, x) as f64;
                    assert!((v - expected[r * WIDTH + x]).abs() < 1e-6);
                    if v > 0.0 {
                        assert_eq!(r, 13);
                        // the source column's footprint, widened by the filter
                        let src = (k * 28 + c) as f64 + 0.5;
                        assert!(((x as f64 + 0.5) / ratio - src).abs() < 1.0 / ratio);
                    }
                    mass += v;
                }
            }
            // per-column normalization lets single columns gain or lose up
            // to 1/16 of their share; interior columns sit within 1/24
            assert!(mass > ratio * 0.9375 - 1e-6 && mass < ratio * (1.0 + 1.0 / 24.0) + 1e-6, "{k},{c}: {mass}");
            mass_sum += mass;
        }
    }
    // summed over every source column the mass is exactly the width ratio
    assert!((mass_sum / STRIP_WIDTH as f64 - ratio).abs() < 1e-5);
}

#[test]
fn digit_like_mass_preserved_within_one_percent() {
    // a filled disk in every slot
    let parts = parts_from(|k, r, c| {
        let (dr, dc) = (r as f64 - 13.5, c as f64 - 13.5 + k as f64 * 0.3);
        if dr * dr + dc * dc < 64.0 { 255 } else { 0 }
    });
    let input: f64 = strip_of(&parts).iter().flatten().sum();
    let output = resize(&parts).sum();
    let ratio = WIDTH as f64 / STRIP_WIDTH as f64;
    assert!((output / (input * ratio) - 1.0).abs() < 0.01, "{output} vs {}", input * ratio);
}
