//! IDX image/label ingestion (the classic big-endian u8 image format).

use std::io::Read;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Dataset, LabeledExample, Provenance};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Idx {
            offset: bytes.len() as u64,
            message: format!("truncated while reading {what}"),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an images/labels IDX pair into a dataset of `[0, 1]`-scaled pixels.
///
/// Image payloads must carry magic `0x00000803` (count, rows, cols, then
/// `count*rows*cols` u8 pixels) and label payloads magic `0x00000801`; counts
/// must agree. The label alphabet is `max(label) + 1`. Malformed input is
/// reported with the byte offset of the problem.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut images = Vec::new();
    std::fs::File::open(images_path)?.read_to_end(&mut images)?;
    let mut labels = Vec::new();
    std::fs::File::open(labels_path)?.read_to_end(&mut labels)?;

    let magic = read_u32_be(&images, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx {
            offset: 0,
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        });
    }
    let count = read_u32_be(&images, 4, "image count")? as usize;
    let rows = read_u32_be(&images, 8, "image rows")? as usize;
    let cols = read_u32_be(&images, 12, "image cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Idx {
            offset: 8,
            message: format!("degenerate image dimensions {rows}x{cols}"),
        });
    }
    let pixel_bytes = count
        .checked_mul(rows * cols)
        .ok_or_else(|| Error::Idx {
            offset: 4,
            message: "image payload size overflows".into(),
        })?;
    if images.len() != 16 + pixel_bytes {
        return Err(Error::Idx {
            offset: images.len() as u64,
            message: format!(
                "image payload is {} bytes, expected {}",
                images.len() - 16.min(images.len()),
                pixel_bytes
            ),
        });
    }

    let lmagic = read_u32_be(&labels, 0, "label magic")?;
    if lmagic != LABEL_MAGIC {
        return Err(Error::Idx {
            offset: 0,
            message: format!("bad label magic 0x{lmagic:08x}, expected 0x{LABEL_MAGIC:08x}"),
        });
    }
    let lcount = read_u32_be(&labels, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::Idx {
            offset: 4,
            message: format!("{count} images but {lcount} labels"),
        });
    }
    if labels.len() != 8 + lcount {
        return Err(Error::Idx {
            offset: labels.len() as u64,
            message: format!(
                "label payload is {} bytes, expected {lcount}",
                labels.len().saturating_sub(8)
            ),
        });
    }

    let dim = rows * cols;
    let mut examples = Vec::with_capacity(count);
    let mut max_label = 0u8;
    for i in 0..count {
        let label = labels[8 + i];
        max_label = max_label.max(label);
        let start = 16 + i * dim;
        let features: Vec<f64> = images[start..start + dim]
            .iter()
            .map(|&p| f64::from(p) / 255.0)
            .collect();
        examples.push(LabeledExample {
            features,
            label: label as usize,
            provenance: Provenance::Clean,
        });
    }

    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let ds = Dataset {
        name,
        num_classes: (usize::from(max_label) + 1).max(2),
        examples,
    };
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset back out as an IDX pair.
///
/// Features are interpreted as `[0, 1]` pixel intensities and quantized with
/// `round(255 * x)`; the feature dimension must be a square (`rows == cols`).
/// A dataset loaded by [`load_idx`] round-trips byte-identically.
pub fn save_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    dataset.validate()?;
    let dim = dataset.feature_dim();
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::InvalidArgument(format!(
            "save_idx needs a square feature dimension, got {dim}"
        )));
    }
    if dataset.num_classes > 256 {
        return Err(Error::InvalidArgument(
            "save_idx labels must fit in a byte".into(),
        ));
    }

    let mut images: Vec<u8> = Vec::with_capacity(16 + dataset.len() * dim);
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    images.extend_from_slice(&(side as u32).to_be_bytes());
    images.extend_from_slice(&(side as u32).to_be_bytes());
    let mut labels: Vec<u8> = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for e in &dataset.examples {
        for &f in &e.features {
            images.push((f * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        labels.push(e.label as u8);
    }
    std::fs::File::create(images_path)?.write_all(&images)?;
    std::fs::File::create(labels_path)?.write_all(&labels)?;
    Ok(())
}
