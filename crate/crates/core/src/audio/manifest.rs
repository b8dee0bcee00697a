//! Newline-delimited JSON manifests: one labeled clip per line.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One labeled clip. `azimuth_deg` is the frontal-plane ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    /// Relative paths resolve against the manifest's directory.
    pub clip_path: String,
    pub azimuth_deg: f64,
    pub source_type: String,
    pub split: Split,
}

pub fn validate_record(r: &ManifestRecord) -> Result<()> {
    if !(-90.0..=90.0).contains(&r.azimuth_deg) {
        return Err(Error::Validation(format!(
            "{}: azimuth {} outside [-90, 90]",
            r.clip_path, r.azimuth_deg
        )));
    }
    Ok(())
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        validate_record(&rec).map_err(|e| Error::Validation(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        validate_record(r)?;
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Format(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(az: f64) -> ManifestRecord {
        ManifestRecord {
            clip_path: "train/a.wav".into(),
            azimuth_deg: az,
            source_type: "white_noise".into(),
            split: Split::Train,
        }
    }

    #[test]
    fn empty_manifest() {
        assert!(parse_manifest("").unwrap().is_empty());
    }

    #[test]
    fn single_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_manifest(&[rec(-35.0)], &p).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), vec![rec(-35.0)]);
    }

    #[test]
    fn out_of_range_azimuth_is_a_validation_error() {
        let line = serde_json::to_string(&rec(95.0)).unwrap();
        assert!(matches!(parse_manifest(&line), Err(Error::Validation(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(write_manifest(&[rec(95.0)], dir.path().join("m")).is_err());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let good = serde_json::to_string(&rec(0.0)).unwrap();
        let text = format!("{good}\n{{\"clip_path\": 3}}\n");
        match parse_manifest(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad_split = good.replace("\"train\"", "\"holdout\"");
        assert!(matches!(parse_manifest(&bad_split), Err(Error::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(
            items in proptest::collection::vec((-90.0f64..=90.0, "[a-z_]{1,12}", 0u8..3), 0..20)
        ) {
            let records: Vec<ManifestRecord> = items
                .into_iter()
                .enumerate()
                .map(|(i, (az, kind, s))| ManifestRecord {
                    clip_path: format!("clips/{i}.wav"),
                    azimuth_deg: az,
                    source_type: kind,
                    split: [Split::Train, Split::Val, Split::Test][s as usize],
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.jsonl");
            write_manifest(&records, &p).unwrap();
            prop_assert_eq!(read_manifest(&p).unwrap(), records);
        }
    }
}
