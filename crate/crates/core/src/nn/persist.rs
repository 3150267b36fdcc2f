//! Model persistence: a flat little-endian f64 blob plus a JSON sidecar
//! describing the architecture.

use std::io::Read;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::batchnorm::BatchNormLayer;
use super::{DenseLayer, Layer, Mode, Network};
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LayerDesc {
    Dense { inputs: usize, outputs: usize },
    BatchNorm { channels: usize, eps: f64, momentum: f64 },
    Relu,
    SoftmaxCrossEntropy,
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar {
    format: String,
    version: u32,
    layers: Vec<LayerDesc>,
    param_count: usize,
}

/// Number of f64 values the blob stores for one layer. Unlike the trainable
/// parameter count, normalization layers also persist their running stats.
fn blob_len(layer: &Layer) -> usize {
    match layer {
        Layer::Dense(d) => d.weights.data().len() + d.bias.len(),
        Layer::BatchNorm(bn) => 4 * bn.channels(),
        Layer::Relu | Layer::SoftmaxCrossEntropyHead => 0,
    }
}

/// Write `net` as `<path>` (raw f64 blob) plus `<path>.json` (architecture).
///
/// Blob order per layer: dense weights row-major then bias; normalization
/// gamma, beta, running mean, running variance. Everything little-endian.
pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let layers: Vec<LayerDesc> = net
        .layers
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerDesc::Dense {
                inputs: d.weights.cols(),
                outputs: d.weights.rows(),
            },
            Layer::BatchNorm(bn) => LayerDesc::BatchNorm {
                channels: bn.channels(),
                eps: bn.eps,
                momentum: bn.momentum,
            },
            Layer::Relu => LayerDesc::Relu,
            Layer::SoftmaxCrossEntropyHead => LayerDesc::SoftmaxCrossEntropy,
        })
        .collect();
    let sidecar = ModelSidecar {
        format: "bnmemo-model".into(),
        version: 1,
        layers,
        param_count: net.param_count(),
    };
    let sidecar_json = serde_json::to_string_pretty(&serde_json::to_value(&sidecar)?)?;

    let total: usize = net.layers.iter().map(blob_len).sum();
    let mut blob = Vec::with_capacity(total * 8);
    for layer in &net.layers {
        match layer {
            Layer::Dense(d) => {
                for &w in d.weights.data() {
                    blob.extend_from_slice(&w.to_le_bytes());
                }
                for &b in &d.bias {
                    blob.extend_from_slice(&b.to_le_bytes());
                }
            }
            Layer::BatchNorm(bn) => {
                for seq in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    for &v in seq {
                        blob.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            Layer::Relu | Layer::SoftmaxCrossEntropyHead => {}
        }
    }

    std::fs::File::create(path)?.write_all(&blob)?;
    std::fs::write(sidecar_path(path), sidecar_json)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Reload a model saved by [`save_model`]. The returned network is in
/// inference mode.
pub fn load_model(path: &Path) -> Result<Network> {
    let sidecar_text = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: ModelSidecar =
        serde_json::from_str(&sidecar_text).map_err(|e| Error::Model(format!("bad sidecar: {e}")))?;
    if sidecar.format != "bnmemo-model" {
        return Err(Error::Model(format!(
            "unrecognized model format {:?}",
            sidecar.format
        )));
    }
    if sidecar.version != 1 {
        return Err(Error::Model(format!(
            "unsupported model version {}",
            sidecar.version
        )));
    }

    let mut blob = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut blob)?;
    if blob.len() % 8 != 0 {
        return Err(Error::Model(format!(
            "parameter blob length {} is not a multiple of 8",
            blob.len()
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();

    let mut layers = Vec::with_capacity(sidecar.layers.len());
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[f64]> {
        if cursor + n > values.len() {
            return Err(Error::Model(format!(
                "parameter blob ends at {} values, needed {}",
                values.len(),
                cursor + n
            )));
        }
        let out = &values[cursor..cursor + n];
        cursor += n;
        Ok(out)
    };
    for desc in &sidecar.layers {
        match *desc {
            LayerDesc::Dense { inputs, outputs } => {
                let weights =
                    Tensor::from_vec(&[outputs, inputs], take(inputs * outputs)?.to_vec())?;
                let bias = take(outputs)?.to_vec();
                layers.push(Layer::Dense(DenseLayer { weights, bias }));
            }
            LayerDesc::BatchNorm { channels, eps, momentum } => {
                let mut bn = BatchNormLayer::new(channels);
                bn.eps = eps;
                bn.momentum = momentum;
                bn.gamma = take(channels)?.to_vec();
                bn.beta = take(channels)?.to_vec();
                bn.running_mean = take(channels)?.to_vec();
                bn.running_var = take(channels)?.to_vec();
                layers.push(Layer::BatchNorm(bn));
            }
            LayerDesc::Relu => layers.push(Layer::Relu),
            LayerDesc::SoftmaxCrossEntropy => layers.push(Layer::SoftmaxCrossEntropyHead),
        }
    }
    if cursor != values.len() {
        return Err(Error::Model(format!(
            "parameter blob has {} values but the architecture consumes {cursor}",
            values.len()
        )));
    }

    let mut net = Network::new(layers)?;
    if net.param_count() != sidecar.param_count {
        return Err(Error::Model(format!(
            "sidecar declares {} trainable parameters, model has {}",
            sidecar.param_count,
            net.param_count()
        )));
    }
    net.set_mode(Mode::Eval);
    Ok(net)
}
