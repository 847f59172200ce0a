//! Report files, CSV layouts and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sincere_core::trainkit::Histogram;
use sincere_core::EmbeddingMatrix;

use crate::config::LabConfig;
use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A named output file held in memory until the run is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub artifacts: Vec<Artifact>,
    /// False when a check or bound was violated.
    pub passed: bool,
    pub summary: String,
}

/// Written next to every set of reports. Wall-clock time lives only here,
/// so the reports themselves stay byte-identical across re-runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: LabConfig,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

pub fn json_artifact<T: Serialize>(name: &str, value: &T) -> Artifact {
    let mut contents = serde_json::to_vec_pretty(value).expect("reports serialise");
    contents.push(b'\n');
    Artifact { name: name.to_string(), contents }
}

fn csv_artifact(name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Artifact {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    Artifact {
        name: name.to_string(),
        contents: w.into_inner().expect("in-memory flush"),
    }
}

/// `epoch,loss`, epochs counted from 1.
pub fn loss_csv(name: &str, losses: &[f64]) -> Artifact {
    csv_artifact(
        name,
        &["epoch".into(), "loss".into()],
        losses.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), l.to_string()]),
    )
}

/// `label,e0,..,e{d-1}` with shortest round-trip float formatting.
pub fn embeddings_csv(name: &str, emb: &EmbeddingMatrix, labels: &[u32]) -> Artifact {
    let mut header = vec!["label".to_string()];
    header.extend((0..emb.d()).map(|j| format!("e{j}")));
    csv_artifact(
        name,
        &header,
        (0..emb.n()).map(|i| {
            let mut r = vec![labels[i].to_string()];
            r.extend(emb.row(i).iter().map(|v| v.to_string()));
            r
        }),
    )
}

pub fn histogram_csv(name: &str, h: &Histogram) -> Artifact {
    csv_artifact(
        name,
        &["bin_left".into(), "bin_right".into(), "count_target_nn".into(), "count_noise_nn".into()],
        (0..h.bins()).map(|b| {
            vec![
                h.edges[b].to_string(),
                h.edges[b + 1].to_string(),
                h.target_counts[b].to_string(),
                h.noise_counts[b].to_string(),
            ]
        }),
    )
}

fn format_error(path: &Path, message: impl std::fmt::Display) -> LabError {
    LabError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads a file written by [`embeddings_csv`].
pub fn read_embeddings(path: &Path) -> Result<(EmbeddingMatrix, Vec<u32>)> {
    let text = fs::read(path).map_err(|e| LabError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_slice());
    let d = reader.headers().map_err(|e| format_error(path, e))?.len().saturating_sub(1);
    if d == 0 {
        return Err(format_error(path, "no embedding columns"));
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_error(path, e))?;
        let mut fields = record.iter();
        let label = fields.next().unwrap_or_default();
        labels.push(
            label
                .parse::<u32>()
                .map_err(|e| format_error(path, format!("row {}: label `{label}`: {e}", line + 1)))?,
        );
        for f in fields {
            values.push(
                f.parse::<f64>()
                    .map_err(|e| format_error(path, format!("row {}: `{f}`: {e}", line + 1)))?,
            );
        }
    }
    let emb = EmbeddingMatrix::new(labels.len(), d, values).map_err(|e| format_error(path, e))?;
    Ok((emb, labels))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| format_error(path, e))
}

/// Writes the artifacts and then the manifest listing them.
pub fn write_run(
    out_dir: &Path,
    command: &str,
    config: &LabConfig,
    output: &CommandOutput,
    duration_seconds: f64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let mut written = Vec::with_capacity(output.artifacts.len() + 1);
    for a in &output.artifacts {
        let p = out_dir.join(&a.name);
        fs::write(&p, &a.contents).map_err(|e| LabError::io(&p, e))?;
        written.push(p);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        config: config.clone(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: output.artifacts.iter().map(|a| a.name.clone()).collect(),
        duration_seconds,
    };
    let m = json_artifact(MANIFEST_FILE, &manifest);
    let p = out_dir.join(MANIFEST_FILE);
    fs::write(&p, &m.contents).map_err(|e| LabError::io(&p, e))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_round_trip_exactly() {
        let emb = EmbeddingMatrix::from_rows(&[[0.6, 0.8], [1.0, 0.0], [-0.28, 0.96]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = embeddings_csv("e.csv", &emb, &[3, 0, 3]);
        let p = dir.path().join(&a.name);
        fs::write(&p, &a.contents).unwrap();
        let (back, labels) = read_embeddings(&p).unwrap();
        assert_eq!(back, emb);
        assert_eq!(labels, vec![3, 0, 3]);
    }

    #[test]
    fn histogram_layout() {
        let h = Histogram::new(4);
        let a = histogram_csv("h.csv", &h);
        let text = String::from_utf8(a.contents).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin_left,bin_right,count_target_nn,count_noise_nn"));
        assert_eq!(lines.next(), Some("-1,-0.5,0,0"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn malformed_embeddings_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "label,e0\nx,1.0\n").unwrap();
        let err = read_embeddings(&p).unwrap_err();
        assert!(err.to_string().contains("bad.csv"), "{err}");
        assert_eq!(err.exit_code(), crate::error::EXIT_IO);
    }
}
