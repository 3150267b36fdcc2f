//! Run manifests: a JSON record of exactly what a subcommand ran — resolved
//! config, seeds, input hashes, outputs, timings — written next to the
//! outputs so a run can be audited or reproduced later.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Engine conventions a reader needs to interpret the outputs. These are
/// fixed properties of the library, recorded so the numbers in the outputs
/// are unambiguous.
#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    /// Per-epoch traces are measured in eval mode with running statistics.
    pub trace_mode: &'static str,
    /// Per-sample gradients treat the containing batch's statistics as
    /// constants.
    pub per_sample_grad: &'static str,
    /// The training objective is averaged over the batch.
    pub mitigation_objective_scale: &'static str,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            trace_mode: "eval_running_stats",
            per_sample_grad: "frozen_batch_stats",
            mitigation_objective_scale: "mean",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub resolved_config: serde_json::Value,
    pub master_seed: u64,
    pub module_versions: BTreeMap<String, String>,
    /// sha256 of every input file the run read, keyed by path.
    pub input_hashes: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u128>,
    /// Paths of every file the run wrote, relative to the manifest.
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub conventions: Conventions,
}

/// Accumulates manifest fields while a subcommand runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    pub fn new(
        command_line: Vec<String>,
        resolved_config: serde_json::Value,
        master_seed: u64,
        out_dir: &Path,
    ) -> Self {
        let mut module_versions = BTreeMap::new();
        module_versions.insert("bnmemo".into(), bnmemo::VERSION.into());
        module_versions.insert("bnmemo-cli".into(), env!("CARGO_PKG_VERSION").into());
        let started_unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        ManifestBuilder {
            manifest: RunManifest {
                command_line,
                resolved_config,
                master_seed,
                module_versions,
                input_hashes: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
                outputs: Vec::new(),
                started_unix_ms,
                conventions: Conventions::default(),
            },
            started: Instant::now(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    /// Hash an input file into the manifest. Missing files are an error —
    /// every input a run claims must exist by the time it is hashed.
    pub fn hash_input(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.manifest
            .input_hashes
            .insert(path.display().to_string(), format!("sha256:{hex}"));
        Ok(())
    }

    pub fn record_timing(&mut self, stage: &str, ms: u128) {
        self.manifest.timings_ms.insert(stage.into(), ms);
    }

    /// Record a file written under the output directory.
    pub fn record_output(&mut self, name: &str) {
        self.manifest.outputs.push(name.into());
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write `manifest.json` (sorted keys) and return its path.
    pub fn finish(mut self) -> std::io::Result<PathBuf> {
        self.manifest
            .timings_ms
            .insert("total".into(), self.started.elapsed().as_millis());
        self.manifest.outputs.sort();
        let path = self.out_dir.join("manifest.json");
        let mut text = sorted_json(&self.manifest);
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Serialize with deterministically ordered keys. Round-tripping through
/// `serde_json::Value` sorts object keys (the default map is a BTreeMap).
pub fn sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string_pretty(&v).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_records_hashes_outputs_and_total_timing() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("input.bin");
        std::fs::write(&input, b"abc").unwrap();
        let mut b = ManifestBuilder::new(
            vec!["bnmemo".into(), "theory".into()],
            serde_json::json!({"seed": 7}),
            7,
            dir.path(),
        );
        b.hash_input(&input).unwrap();
        b.record_output("report.json");
        b.record_timing("verify", 12);
        let path = b.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        // sha256("abc")
        assert_eq!(
            v["input_hashes"][input.display().to_string()],
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(v["outputs"][0], "report.json");
        assert_eq!(v["timings_ms"]["verify"], 12);
        assert!(v["timings_ms"]["total"].is_number());
        assert_eq!(v["master_seed"], 7);
        assert_eq!(v["conventions"]["trace_mode"], "eval_running_stats");
    }

    #[test]
    fn sorted_json_orders_keys() {
        #[derive(Serialize)]
        struct Scrambled {
            zebra: u32,
            apple: u32,
            mango: u32,
        }
        let text = sorted_json(&Scrambled { zebra: 1, apple: 2, mango: 3 });
        let a = text.find("apple").unwrap();
        let m = text.find("mango").unwrap();
        let z = text.find("zebra").unwrap();
        assert!(a < m && m < z);
    }
}
