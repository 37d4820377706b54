//! Line-delimited manifest ingestion.
//!
//! One JSON record per line: `{"clip": "path", "rho": 12.5, "class":
//! "go-back", "split": "train", "environment": "synthetic"}`. Clip paths are
//! resolved relative to the manifest's directory.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::clipio;
use crate::data::types::{Environment, GestureClass, GestureSample, Split, RHO_MAX, RHO_MIN};
use crate::error::{DigError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip: String,
    pub rho: f32,
    pub class: String,
    pub split: Split,
    pub environment: Environment,
}

/// Loads and validates every sample named by a manifest, in file order.
pub fn load_manifest(path: &Path) -> Result<Vec<GestureSample>> {
    let rows = read_rows(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(rows.len());
    for (line_no, row) in rows {
        let label = GestureClass::from_name(&row.class)
            .map_err(|e| DigError::Validation(format!("manifest row {line_no}: {e}")))?;
        if !(RHO_MIN..=RHO_MAX).contains(&row.rho) {
            return Err(DigError::Validation(format!(
                "manifest row {line_no}: rho={} outside [{RHO_MIN},{RHO_MAX}]",
                row.rho
            )));
        }
        let clip_path = base.join(&row.clip);
        if !clip_path.exists() {
            return Err(DigError::Load(format!(
                "manifest row {line_no}: clip file {} not found",
                clip_path.display()
            )));
        }
        let video = clipio::read_clip(&clip_path)
            .map_err(|e| DigError::Load(format!("manifest row {line_no}: {e}")))?;
        samples.push(GestureSample {
            video,
            rho: row.rho,
            label,
            split: row.split,
            environment: row.environment,
        });
    }
    Ok(samples)
}

/// Parses manifest rows without touching clip files. Returns (line number, row).
pub fn read_rows(path: &Path) -> Result<Vec<(usize, ManifestRow)>> {
    let file = std::fs::File::open(path)
        .map_err(|e| DigError::Load(format!("manifest {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line)
            .map_err(|e| DigError::Validation(format!("manifest row {}: {e}", i + 1)))?;
        rows.push((i + 1, row));
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut f, row)?;
        writeln!(f)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{Frame, RawVideo};

    fn write_clip(dir: &Path, name: &str) -> String {
        let v = RawVideo::new(vec![Frame::zeros((4, 4, 3)); 2], 21.0).unwrap();
        clipio::write_packed(&dir.join(name), &v).unwrap();
        name.to_string()
    }

    fn row(clip: String, rho: f32, class: &str) -> ManifestRow {
        ManifestRow {
            clip,
            rho,
            class: class.into(),
            split: Split::Train,
            environment: Environment::Synthetic,
        }
    }

    #[test]
    fn three_valid_rows_load_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<_> = [("a.dgcl", 2.0, "stop"), ("b.dgcl", 16.0, "go-up"), ("c.dgcl", 30.0, "null")]
            .iter()
            .map(|(n, r, c)| row(write_clip(dir.path(), n), *r, c))
            .collect();
        let mpath = dir.path().join("manifest.jsonl");
        write_manifest(&mpath, &rows).unwrap();
        let samples = load_manifest(&mpath).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].label, GestureClass::Stop);
        assert_eq!(samples[1].label, GestureClass::GoUp);
        assert_eq!(samples[2].label, GestureClass::Null);
    }

    #[test]
    fn out_of_range_rho_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(write_clip(dir.path(), "a.dgcl"), 5.0, "stop"),
            row(write_clip(dir.path(), "b.dgcl"), 31.0, "stop"),
        ];
        let mpath = dir.path().join("manifest.jsonl");
        write_manifest(&mpath, &rows).unwrap();
        let err = load_manifest(&mpath).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(err.contains("rho"), "{err}");
    }

    #[test]
    fn unknown_class_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(write_clip(dir.path(), "a.dgcl"), 5.0, "wave")];
        let mpath = dir.path().join("manifest.jsonl");
        write_manifest(&mpath, &rows).unwrap();
        assert!(load_manifest(&mpath).is_err());
    }

    #[test]
    fn missing_clip_file_is_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("missing.dgcl".into(), 5.0, "stop")];
        let mpath = dir.path().join("manifest.jsonl");
        write_manifest(&mpath, &rows).unwrap();
        let err = load_manifest(&mpath).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("not found"), "{err}");
    }

    #[test]
    fn empty_manifest_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("manifest.jsonl");
        std::fs::write(&mpath, "").unwrap();
        assert!(load_manifest(&mpath).unwrap().is_empty());
    }
}
