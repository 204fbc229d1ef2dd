//! IDX (MNIST distribution format) parsing.
//!
//! Image files: big-endian `u32` magic 2051, count, rows, cols, then
//! `count * rows * cols` bytes. Label files: magic 2049, count, then `count`
//! bytes. Only 28x28 images are accepted.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::rules::Digit;
use crate::NUM_CLASSES;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bad magic number {found} (expected {expected})")]
    BadMagic { found: u32, expected: u32 },
    #[error("file is {actual} bytes, header implies {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("images are {rows}x{cols}, only 28x28 is supported")]
    BadShape { rows: u32, cols: u32 },
    #[error("label byte {value} at index {index} is not a digit")]
    BadLabel { index: usize, value: u8 },
    #[error("{images} images but {labels} labels")]
    LengthMismatch { images: usize, labels: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A 28x28 grayscale source digit, 0 = background, 255 = full ink.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawDigitImage {
    pixels: Box<[u8; PIXELS]>,
}

impl RawDigitImage {
    pub fn new(pixels: [u8; PIXELS]) -> Self {
        Self {
            pixels: Box::new(pixels),
        }
    }

    pub fn from_slice(pixels: &[u8]) -> Option<Self> {
        let arr: [u8; PIXELS] = pixels.try_into().ok()?;
        Some(Self::new(arr))
    }

    pub fn filled(value: u8) -> Self {
        Self::new([value; PIXELS])
    }

    pub fn pixels(&self) -> &[u8; PIXELS] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }
}

/// Source images bucketed by digit class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DigitPools {
    pub pools: [Vec<RawDigitImage>; NUM_CLASSES],
    pub source_tag: String,
}

impl DigitPools {
    pub fn new(source_tag: impl Into<String>) -> Self {
        Self {
            pools: Default::default(),
            source_tag: source_tag.into(),
        }
    }

    pub fn pool(&self, d: Digit) -> &[RawDigitImage] {
        &self.pools[d.value() as usize]
    }

    pub fn total(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> [usize; NUM_CLASSES] {
        std::array::from_fn(|d| self.pools[d].len())
    }

    /// First empty class, if any.
    pub fn first_empty(&self) -> Option<Digit> {
        Digit::all().find(|&d| self.pool(d).is_empty())
    }
}

fn be_u32(bytes: &[u8], word: usize) -> u32 {
    let at = word * 4;
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_magic(bytes: &[u8], header_len: usize, expected: u32) -> Result<(), IngestError> {
    if bytes.len() < 4 {
        return Err(IngestError::Truncated {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(IngestError::BadMagic { found, expected });
    }
    if bytes.len() < header_len {
        return Err(IngestError::Truncated {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawDigitImage>, IngestError> {
    check_magic(bytes, 16, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 1) as usize;
    let rows = be_u32(bytes, 2);
    let cols = be_u32(bytes, 3);
    if rows as usize != SIDE || cols as usize != SIDE {
        return Err(IngestError::BadShape { rows, cols });
    }
    let expected = 16 + count * PIXELS;
    if bytes.len() != expected {
        return Err(IngestError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes[16..]
        .chunks_exact(PIXELS)
        .map(|chunk| RawDigitImage::from_slice(chunk).expect("chunk is 784 bytes"))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<Digit>, IngestError> {
    check_magic(bytes, 8, LABEL_MAGIC)?;
    let count = be_u32(bytes, 1) as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(IngestError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    bytes[8..]
        .iter()
        .enumerate()
        .map(|(index, &value)| Digit::new(value).map_err(|_| IngestError::BadLabel { index, value }))
        .collect()
}

/// Buckets images by label, keeping input order within each class.
pub fn build_pools(
    images: Vec<RawDigitImage>,
    labels: &[Digit],
    source_tag: impl Into<String>,
) -> Result<DigitPools, IngestError> {
    if images.len() != labels.len() {
        return Err(IngestError::LengthMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let mut pools = DigitPools::new(source_tag);
    for (image, label) in images.into_iter().zip(labels) {
        pools.pools[label.value() as usize].push(image);
    }
    Ok(pools)
}

/// Which half of the MNIST distribution to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads `{train,t10k}-{images-idx3,labels-idx1}-ubyte` from `dir`.
pub fn load_mnist_pools(dir: &Path, split: MnistSplit) -> Result<DigitPools, IngestError> {
    let prefix = split.prefix();
    let images = parse_idx_images(&read(&dir.join(format!("{prefix}-images-idx3-ubyte")))?)?;
    let labels = parse_idx_labels(&read(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?)?;
    build_pools(images, &labels, format!("mnist-{prefix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(words: &[u32]) -> Vec<u8> {
        words.iter().flat_map(|w| w.to_be_bytes()).collect()
    }

    #[test]
    fn single_blank_image() {
        let mut bytes = header(&[2051, 1, 28, 28]);
        bytes.extend(std::iter::repeat_n(0u8, 784));
        let images = parse_idx_images(&bytes).unwrap();
        assert_eq!(images.len(), 1);
        assert!(images[0].pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn image_errors() {
        let mut bytes = header(&[2049, 1, 28, 28]);
        bytes.extend(std::iter::repeat_n(0u8, 784));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(IngestError::BadMagic { found: 2049, .. })
        ));

        let mut bytes = header(&[2051, 2, 28, 28]);
        bytes.extend(std::iter::repeat_n(0u8, 784));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(IngestError::Truncated { expected: 1584, actual: 800 })
        ));

        let bytes = header(&[2051, 0, 32, 32]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(IngestError::BadShape { rows: 32, cols: 32 })
        ));

        assert!(matches!(
            parse_idx_images(&[0, 0]),
            Err(IngestError::Truncated { .. })
        ));
    }

    #[test]
    fn labels() {
        let mut bytes = header(&[2049, 3]);
        bytes.extend([0, 5, 9]);
        let labels: Vec<u8> = parse_idx_labels(&bytes)
            .unwrap()
            .into_iter()
            .map(Digit::value)
            .collect();
        assert_eq!(labels, vec![0, 5, 9]);

        let bytes = header(&[2051, 0, 28, 28]);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(IngestError::BadMagic { found: 2051, .. })
        ));

        let mut bytes = header(&[2049, 1]);
        bytes.push(12);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(IngestError::BadLabel { index: 0, value: 12 })
        ));

        let bytes = header(&[2049, 2]);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(IngestError::Truncated { .. })
        ));
    }

    #[test]
    fn pools() {
        let seven = Digit::new(7).unwrap();
        let pools = build_pools(vec![RawDigitImage::filled(3)], &[seven], "t").unwrap();
        assert_eq!(pools.pool(seven).len(), 1);
        assert_eq!(pools.total(), 1);
        assert_eq!(pools.first_empty(), Some(Digit::new(0).unwrap()));

        let empty = build_pools(vec![], &[], "t").unwrap();
        assert!(empty.pools.iter().all(Vec::is_empty));

        assert!(matches!(
            build_pools(vec![RawDigitImage::filled(0)], &[], "t"),
            Err(IngestError::LengthMismatch { images: 1, labels: 0 })
        ));
    }

    #[test]
    fn pools_keep_order_and_partition() {
        let labels: Vec<Digit> = [3u8, 1, 3, 0, 1, 3]
            .iter()
            .map(|&d| Digit::new(d).unwrap())
            .collect();
        let images: Vec<RawDigitImage> = (0..6).map(|i| RawDigitImage::filled(i as u8)).collect();
        let pools = build_pools(images, &labels, "t").unwrap();
        let three: Vec<u8> = pools.pools[3].iter().map(|im| im.get(0, 0)).collect();
        assert_eq!(three, vec![0, 2, 5]);
        assert_eq!(pools.total(), 6);
    }
}
