//! Run manifests: one CSV row per trained model.
//!
//! ```text
//! bundle_path,noise_fraction,test_accuracy,seed
//! runs/eta0.00_s0,0.0,0.981,0
//! ```
//!
//! Relative bundle paths resolve against the directory holding the CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RUN_MANIFEST_HEADER: [&str; 4] = ["bundle_path", "noise_fraction", "test_accuracy", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub bundle_path: PathBuf,
    pub noise_fraction: f64,
    pub test_accuracy: f64,
    pub seed: Option<u64>,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        what: "run manifest",
        message: e.to_string(),
    }
}

/// Parses manifest text. `base_dir` anchors relative bundle paths.
pub fn parse_run_manifest(text: &str, base_dir: &Path) -> Result<Vec<RunEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(RUN_MANIFEST_HEADER) {
        return Err(Error::Parse {
            what: "run manifest",
            message: format!(
                "header must be `{}`, found `{}`",
                RUN_MANIFEST_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RunEntry>().enumerate() {
        let mut entry = row.map_err(csv_error)?;
        let line = i + 2;
        if entry.bundle_path.as_os_str().is_empty() {
            return Err(Error::invalid(format!("run manifest line {line}: empty bundle_path")));
        }
        if !(0.0..=1.0).contains(&entry.noise_fraction) {
            return Err(Error::invalid(format!(
                "run manifest line {line}: noise_fraction {} is outside [0, 1]",
                entry.noise_fraction
            )));
        }
        if !entry.test_accuracy.is_finite() {
            return Err(Error::invalid(format!(
                "run manifest line {line}: test_accuracy is not finite"
            )));
        }
        if entry.bundle_path.is_relative() {
            entry.bundle_path = base_dir.join(&entry.bundle_path);
        }
        out.push(entry);
    }
    if out.is_empty() {
        return Err(Error::invalid("run manifest has no rows"));
    }
    Ok(out)
}

pub fn read_run_manifest(path: impl AsRef<Path>) -> Result<Vec<RunEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_run_manifest(&text, base)
}

/// Renders entries as manifest text; paths are written as given.
pub fn write_run_manifest(entries: &[RunEntry]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in entries {
        w.serialize(e).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_anchors_paths() {
        let text = "bundle_path,noise_fraction,test_accuracy,seed\nb0,0.0,0.98,0\n/abs/b1, 0.5 ,0.6,\n";
        let runs = parse_run_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].bundle_path, PathBuf::from("/data/b0"));
        assert_eq!(runs[0].seed, Some(0));
        assert_eq!(runs[1].bundle_path, PathBuf::from("/abs/b1"));
        assert_eq!(runs[1].noise_fraction, 0.5);
        assert_eq!(runs[1].seed, None);
    }

    #[test]
    fn wrong_header_rejected() {
        let err = parse_run_manifest("path,eta,acc,seed\nb,0,0.5,1\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn bad_rows_rejected() {
        let base = Path::new(".");
        let h = "bundle_path,noise_fraction,test_accuracy,seed\n";
        assert!(parse_run_manifest(&format!("{h}b,1.5,0.5,1\n"), base).is_err());
        assert!(parse_run_manifest(&format!("{h}b,x,0.5,1\n"), base).is_err());
        assert!(parse_run_manifest(&format!("{h}b,0.1,NaN,1\n"), base).is_err());
        assert!(parse_run_manifest(&format!("{h},0.1,0.5,1\n"), base).is_err());
        assert!(parse_run_manifest(&format!("{h}b,0.1,0.5\n"), base).is_err());
        assert!(parse_run_manifest(h, base).is_err());
        assert!(parse_run_manifest("", base).is_err());
    }

    #[test]
    fn write_then_parse() {
        let entries = vec![
            RunEntry {
                bundle_path: "a".into(),
                noise_fraction: 0.25,
                test_accuracy: 0.875,
                seed: Some(3),
            },
            RunEntry {
                bundle_path: "b".into(),
                noise_fraction: 1.0,
                test_accuracy: 0.1,
                seed: None,
            },
        ];
        let text = write_run_manifest(&entries).unwrap();
        assert!(text.starts_with("bundle_path,noise_fraction,test_accuracy,seed\n"));
        assert_eq!(parse_run_manifest(&text, Path::new("")).unwrap(), entries);
    }

    #[test]
    fn reads_from_disk_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("runs.csv");
        fs::write(&p, "bundle_path,noise_fraction,test_accuracy,seed\nsub/b,0,0.9,1\n").unwrap();
        let runs = read_run_manifest(&p).unwrap();
        assert_eq!(runs[0].bundle_path, dir.path().join("sub/b"));
        assert!(matches!(
            read_run_manifest(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
