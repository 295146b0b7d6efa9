//! Run manifests and sample files.
//!
//! A manifest is one JSON line per run, appended to `manifests.jsonl` in the
//! output directory. Every line carries the full config hash, seed, realized
//! cost, metrics, and diagnostics, so a manifest file can be read on its own
//! years later. Samples go next to it as little-endian `f64` row-major `.bin`
//! files with a JSON sidecar recording shape and checksum.

use crate::methods::{MethodId, RunDiagnostics};
use crate::BenchError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub task: String,
    pub method_id: MethodId,
    /// Instance label; distinguishes hyperparameter variants of one method.
    pub method: String,
    pub params: serde_json::Value,
    pub budget: u64,
    pub replicate: usize,
    pub seed: u64,
    /// Evaluations the sampler actually spent, from its ledger.
    pub realized_evals: u64,
    /// Evaluations spent computing metrics, billed separately.
    pub measurement_evals: u64,
    pub wall_time_s: f64,
    pub samples_cap: usize,
    pub n_samples: usize,
    /// Sample file path relative to the manifest's directory.
    pub sample_file: Option<String>,
    pub sample_sha256: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    pub diagnostics: RunDiagnostics,
    pub failed: bool,
    pub error: Option<String>,
}

/// Append-only manifest log; writes are serialized so parallel jobs never
/// interleave lines.
pub struct ManifestWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl ManifestWriter {
    pub fn open(path: &Path) -> Result<Self, BenchError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ManifestWriter {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, manifest: &RunManifest) -> Result<(), BenchError> {
        let mut line = serde_json::to_string(manifest)?;
        line.push('\n');
        let mut file = self.file.lock().expect("manifest lock");
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }
}

pub fn read_manifests(path: &Path) -> Result<Vec<RunManifest>, BenchError> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleSidecar {
    shape: [usize; 2],
    sha256: String,
}

#[derive(Debug, Clone)]
pub struct SampleFileInfo {
    pub sha256: String,
    pub n: usize,
    pub dim: usize,
}

/// Write rows as little-endian `f64`, row-major, plus a `.json` sidecar with
/// the shape and the checksum of the binary payload.
pub fn write_samples(path: &Path, rows: &[Vec<f64>]) -> Result<SampleFileInfo, BenchError> {
    let n = rows.len();
    let dim = rows.first().map_or(0, Vec::len);
    let mut bytes = Vec::with_capacity(n * dim * 8);
    for row in rows {
        debug_assert_eq!(row.len(), dim);
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sha256 = hex::encode(Sha256::digest(&bytes));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, &bytes)?;
    let sidecar = SampleSidecar {
        shape: [n, dim],
        sha256: sha256.clone(),
    };
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(SampleFileInfo { sha256, n, dim })
}

/// Read a sample file back, validating length and checksum against the
/// sidecar.
pub fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>, BenchError> {
    let sidecar: SampleSidecar =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let bytes = std::fs::read(path)?;
    let [n, dim] = sidecar.shape;
    if bytes.len() != n * dim * 8 {
        return Err(BenchError::RunFailure(format!(
            "sample file {} holds {} bytes, sidecar says {}x{}",
            path.display(),
            bytes.len(),
            n,
            dim
        )));
    }
    if hex::encode(Sha256::digest(&bytes)) != sidecar.sha256 {
        return Err(BenchError::RunFailure(format!(
            "sample file {} does not match its recorded checksum",
            path.display()
        )));
    }
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let row = (0..dim)
            .map(|c| {
                let at = (r * dim + c) * 8;
                f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte chunk"))
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cds-bench-test-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn toy_manifest(replicate: usize) -> RunManifest {
        RunManifest {
            config_hash: "abc123".into(),
            task: "gm-2".into(),
            method_id: MethodId::Mala,
            method: "mala".into(),
            params: serde_json::json!({"step": 0.1}),
            budget: 1000,
            replicate,
            seed: 7,
            realized_evals: 1000,
            measurement_evals: 12,
            wall_time_s: 0.5,
            samples_cap: 100,
            n_samples: 3,
            sample_file: Some("x.bin".into()),
            sample_sha256: Some("deadbeef".into()),
            metrics: BTreeMap::from([("w2".into(), 0.25)]),
            diagnostics: RunDiagnostics::default(),
            failed: false,
            error: None,
        }
    }

    #[test]
    fn samples_round_trip_bit_exactly() {
        let dir = scratch("roundtrip");
        let path = dir.join("samples.bin");
        let rows = vec![
            vec![1.0, -2.5, 3.25],
            vec![0.1, 0.2, f64::MIN_POSITIVE],
            vec![-0.0, 1e300, -1e-300],
        ];
        let info = write_samples(&path, &rows).unwrap();
        assert_eq!((info.n, info.dim), (3, 3));
        let back = read_samples(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // rewriting the same rows reproduces the same checksum
        let again = write_samples(&path, &rows).unwrap();
        assert_eq!(info.sha256, again.sha256);
    }

    #[test]
    fn empty_sets_round_trip() {
        let dir = scratch("empty");
        let path = dir.join("none.bin");
        write_samples(&path, &[]).unwrap();
        assert!(read_samples(&path).unwrap().is_empty());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = scratch("corrupt");
        let path = dir.join("samples.bin");
        write_samples(&path, &[vec![1.0, 2.0]]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_samples(&path),
            Err(BenchError::RunFailure(_))
        ));

        let mut truncated = std::fs::read(&path).unwrap();
        truncated.pop();
        std::fs::write(&path, &truncated).unwrap();
        assert!(read_samples(&path).is_err());
    }

    #[test]
    fn manifests_append_and_read_back() {
        let dir = scratch("manifests");
        let path = dir.join("manifests.jsonl");
        let _ = std::fs::remove_file(&path);
        let writer = ManifestWriter::open(&path).unwrap();
        writer.append(&toy_manifest(0)).unwrap();
        writer.append(&toy_manifest(1)).unwrap();
        drop(writer);
        // a second writer appends, never truncates
        let writer = ManifestWriter::open(&path).unwrap();
        writer.append(&toy_manifest(2)).unwrap();

        let all = read_manifests(&path).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(
            all.iter().map(|m| m.replicate).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(all[0].metrics["w2"], 0.25);
    }

    #[test]
    fn manifest_lines_are_stable_for_equal_runs() {
        let a = serde_json::to_string(&toy_manifest(0)).unwrap();
        let b = serde_json::to_string(&toy_manifest(0)).unwrap();
        assert_eq!(a, b);
    }
}
