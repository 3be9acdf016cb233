//! IDX image and label files (big-endian headers, unsigned byte payloads).

use std::path::{Path, PathBuf};

use metaopt_core::optimizee::Dataset;
use metaopt_core::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("cannot read {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{path}: wrong magic number {found:#010x}, expected {expected:#010x}")]
    WrongMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated, need {expected} bytes but the file has {found}")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} is not below the class count {n_classes}")]
    LabelOutOfRange { path: PathBuf, label: usize, n_classes: usize },
    #[error("{path}: file holds no examples")]
    Empty { path: PathBuf },
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|cause| IdxError::Io { path: path.to_owned(), cause })
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, IdxError> {
    let need = 4 * (1 + dims);
    if bytes.len() < need {
        return Err(IdxError::Truncated { path: path.to_owned(), expected: need, found: bytes.len() });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(IdxError::WrongMagic { path: path.to_owned(), expected: magic, found: word(0) });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

/// Pixel bytes scaled to `[0, 1]`, one row per image.
pub fn read_images(path: &Path, limit: Option<usize>) -> Result<Matrix, IdxError> {
    let bytes = read(path)?;
    let dims = header(path, &bytes, IMAGE_MAGIC, 3)?;
    let (n, width) = (dims[0], dims[1] * dims[2]);
    let body = &bytes[16..];
    if body.len() < n * width {
        return Err(IdxError::Truncated { path: path.to_owned(), expected: 16 + n * width, found: bytes.len() });
    }
    let k = limit.map_or(n, |l| l.min(n));
    let data = body[..k * width].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Matrix::from_vec(k, width, data))
}

pub fn read_labels(path: &Path, limit: Option<usize>) -> Result<Vec<usize>, IdxError> {
    let bytes = read(path)?;
    let n = header(path, &bytes, LABEL_MAGIC, 1)?[0];
    let body = &bytes[8..];
    if body.len() < n {
        return Err(IdxError::Truncated { path: path.to_owned(), expected: 8 + n, found: bytes.len() });
    }
    let k = limit.map_or(n, |l| l.min(n));
    Ok(body[..k].iter().map(|&b| usize::from(b)).collect())
}

/// Pairs images with labels by index, keeping the first `limit` of each.
/// The class count defaults to one past the largest label.
pub fn load_idx(
    images: &Path,
    labels: &Path,
    limit: Option<usize>,
    n_classes: Option<usize>,
) -> Result<Dataset, IdxError> {
    let x = read_images(images, limit)?;
    let y = read_labels(labels, limit)?;
    if x.rows() != y.len() {
        return Err(IdxError::CountMismatch { images: x.rows(), labels: y.len() });
    }
    let Some(&max) = y.iter().max() else {
        return Err(IdxError::Empty { path: labels.to_owned() });
    };
    let n_classes = n_classes.unwrap_or(max + 1);
    if max >= n_classes {
        return Err(IdxError::LabelOutOfRange { path: labels.to_owned(), label: max, n_classes });
    }
    Ok(Dataset::new(x, y, n_classes).expect("validated above"))
}

/// Serializes images in IDX form; used to build fixtures.
pub fn encode_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for w in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
