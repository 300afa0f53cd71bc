//! CSV manifests: the raw-scan manifest and the index of preprocessed
//! signals.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// One row of `path,subject_id,scan_id`. Relative paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub scan_id: String,
}

/// A row of the preprocessing index: where the signal and depth image of one
/// scan were written, relative to the index file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalEntry {
    pub scan_id: String,
    pub subject_id: String,
    pub signal: PathBuf,
    pub depth: PathBuf,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| Error::csv(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a manifest and resolves its paths. Scan ids must be unique.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = base_dir(path);
    let mut rows: Vec<ManifestEntry> = read_csv(path)?;
    let mut seen = BTreeMap::new();
    for (i, r) in rows.iter_mut().enumerate() {
        if let Some(prev) = seen.insert(r.scan_id.clone(), i) {
            return Err(Error::Parse {
                source_name: path.display().to_string(),
                line: i + 2,
                msg: format!("scan id '{}' already used on line {}", r.scan_id, prev + 2),
            });
        }
        if r.path.is_relative() {
            r.path = base.join(&r.path);
        }
    }
    Ok(rows)
}

/// Writes entries as given (paths are not rewritten).
pub fn write_manifest(path: &Path, rows: &[ManifestEntry]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_signal_index(path: &Path) -> Result<Vec<SignalEntry>> {
    let base = base_dir(path);
    let mut rows: Vec<SignalEntry> = read_csv(path)?;
    for r in &mut rows {
        r.signal = base.join(&r.signal);
        r.depth = base.join(&r.depth);
    }
    Ok(rows)
}

pub fn write_signal_index(path: &Path, rows: &[SignalEntry]) -> Result<()> {
    write_csv(path, rows)
}

/// Dense labels over the sorted distinct subject ids, so they never depend
/// on row order.
pub fn label_map<'a>(subjects: impl IntoIterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut ids: Vec<&str> = subjects.into_iter().collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
}
