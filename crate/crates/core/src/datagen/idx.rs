//! Reader and writer for the IDX image/label format (big-endian u32 header).

use std::fs;
use std::path::Path;

use super::NoisyDataset;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset, format!("truncated header while reading {what}")))
}

/// Parsed image file: count, rows, cols and raw pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(0, format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(4, "image dimensions overflow"))?;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::format(
            bytes.len(),
            format!("truncated pixel data: expected {need} bytes, found {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(Error::format(16 + need, "trailing bytes after pixel data"));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(0, format!("bad label magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::format(
            8 + body.len().min(count),
            format!("expected {count} labels, found {}", body.len()),
        ));
    }
    Ok(body.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx(images_path: &Path, labels_path: &Path, images: &IdxImages, labels: &[u8]) -> Result<()> {
    fs::write(images_path, encode_images(images)).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, encode_labels(labels)).map_err(|e| Error::io(labels_path, e))
}

/// Loads an image/label pair as a clean dataset with pixels scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<NoisyDataset> {
    let img_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let images = parse_images(&img_bytes)?;
    let labels = parse_labels(&lbl_bytes)?;
    if labels.len() != images.count {
        return Err(Error::format(
            4,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let dim = images.rows * images.cols;
    let features = Tensor::matrix(
        images.count,
        dim,
        images.pixels.iter().map(|&b| b as f64 / 255.0).collect(),
    )?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    let name = images_path
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    NoisyDataset::clean(name, features, labels, num_classes)
}
