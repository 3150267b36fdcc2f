//! On-disk dataset cache: a small binary container plus a CSV provenance dump.

use std::io::Read;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, LabeledExample, Provenance};

const MAGIC: &[u8; 4] = b"BNDS";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    name: String,
    num_classes: usize,
    feature_dim: usize,
    labels: Vec<usize>,
    provenance: Vec<Provenance>,
}

/// Serialize a dataset to `path`.
///
/// Layout: `b"BNDS"`, u32-LE version, u32-LE header length, the JSON header
/// (name, class count, feature dimension, labels, provenance), then all
/// features as little-endian f64 in example order. Loading and re-saving
/// reproduces the file byte for byte.
pub fn save_cache(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let header = CacheHeader {
        name: dataset.name.clone(),
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim(),
        labels: dataset.examples.iter().map(|e| e.label).collect(),
        provenance: dataset.examples.iter().map(|e| e.provenance.clone()).collect(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(12 + header_json.len() + dataset.len() * dataset.feature_dim() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for e in &dataset.examples {
        for &f in &e.features {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Load a dataset previously written by [`save_cache`].
pub fn load_cache(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Cache("missing BNDS magic".into()));
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(Error::Cache(format!(
            "unsupported cache version {version}, expected {VERSION}"
        )));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let body_start = 12 + header_len;
    if bytes.len() < body_start {
        return Err(Error::Cache("truncated header".into()));
    }
    let header: CacheHeader = serde_json::from_slice(&bytes[12..body_start])
        .map_err(|e| Error::Cache(format!("bad header: {e}")))?;

    let n = header.labels.len();
    if header.provenance.len() != n {
        return Err(Error::Cache(format!(
            "{n} labels but {} provenance entries",
            header.provenance.len()
        )));
    }
    let expected = n * header.feature_dim * 8;
    let body = &bytes[body_start..];
    if body.len() != expected {
        return Err(Error::Cache(format!(
            "feature payload is {} bytes, expected {expected}",
            body.len()
        )));
    }

    let mut examples = Vec::with_capacity(n);
    for (i, (label, provenance)) in header
        .labels
        .into_iter()
        .zip(header.provenance.into_iter())
        .enumerate()
    {
        let start = i * header.feature_dim * 8;
        let features = body[start..start + header.feature_dim * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        examples.push(LabeledExample {
            features,
            label,
            provenance,
        });
    }
    let ds = Dataset {
        name: header.name,
        num_classes: header.num_classes,
        examples,
    };
    ds.validate().map_err(|e| Error::Cache(format!("invalid dataset in cache: {e}")))?;
    Ok(ds)
}

/// Flatten per-example provenance into CSV for inspection alongside a run.
///
/// Columns: `index,label,provenance,original_label,ood_source`; the last two
/// are empty for rows they don't apply to.
pub fn provenance_csv(dataset: &Dataset) -> String {
    let mut out = String::from("index,label,provenance,original_label,ood_source\n");
    for (i, e) in dataset.examples.iter().enumerate() {
        match &e.provenance {
            Provenance::Clean => {
                out.push_str(&format!("{i},{},clean,,\n", e.label));
            }
            Provenance::FlippedLabel { original } => {
                out.push_str(&format!("{i},{},flipped_label,{original},\n", e.label));
            }
            Provenance::InjectedOod { source } => {
                out.push_str(&format!("{i},{},injected_ood,,{source}\n", e.label));
            }
        }
    }
    out
}
