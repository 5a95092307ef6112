//! IDX (MNIST) file loading. All header fields are big-endian u32.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

const NUM_CLASSES: usize = 10;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("truncated {what} header")))
}

/// Parses an images file into rows scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("bad images magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let pixels = rows * cols;
    let body = &bytes[16..];
    let need = count
        .checked_mul(pixels)
        .ok_or_else(|| Error::Format("images header overflows".into()))?;
    if body.len() < need {
        return Err(Error::Format(format!(
            "images file truncated: header promises {need} pixel bytes, found {}",
            body.len()
        )));
    }
    Ok(body[..need]
        .chunks_exact(pixels.max(1))
        .take(count)
        .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("bad labels magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format(format!(
            "labels file truncated: header promises {count} labels, found {}",
            body.len()
        )));
    }
    body[..count]
        .iter()
        .map(|&y| {
            let y = usize::from(y);
            if y < NUM_CLASSES {
                Ok(y)
            } else {
                Err(Error::Format(format!("label {y} outside 0-9")))
            }
        })
        .collect()
}

/// Loads an images/labels file pair as a 10-class dataset.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Dataset::classification(images, labels, NUM_CLASSES)
}
