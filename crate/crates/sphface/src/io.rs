//! File access: atomic writes and typed load/save wrappers over
//! [`crate::textfmt`].

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use sphface_core::registration::Face;
use sphface_core::sphere::SphericalSignal;

use crate::error::{Error, Result};
use crate::textfmt;

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load<T>(path: &Path, parse: impl FnOnce(&str, &str) -> Result<T>) -> Result<T> {
    parse(&read_text(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFormat {
    GridText,
    XyzText,
}

impl ScanFormat {
    /// `.xyz` files are point clouds; everything else is grid-text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xyz") => ScanFormat::XyzText,
            _ => ScanFormat::GridText,
        }
    }
}

impl FromStr for ScanFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid-text" | "grid" => Ok(ScanFormat::GridText),
            "xyz-text" | "xyz" => Ok(ScanFormat::XyzText),
            _ => Err(Error::Config(format!("unknown scan format '{s}'"))),
        }
    }
}

pub fn load_scan(path: &Path, format: ScanFormat) -> Result<Face> {
    match format {
        ScanFormat::GridText => load(path, textfmt::parse_grid).map(Face::Grid),
        ScanFormat::XyzText => load(path, textfmt::parse_xyz).map(Face::Cloud),
    }
}

pub fn save_scan(path: &Path, scan: &Face) -> Result<()> {
    let text = match scan {
        Face::Grid(g) => textfmt::format_grid(g),
        Face::Cloud(c) => textfmt::format_xyz(c),
    };
    write_atomic(path, text.as_bytes())
}

pub fn load_signal(path: &Path) -> Result<SphericalSignal> {
    load(path, textfmt::parse_signal)
}

pub fn save_signal(path: &Path, s: &SphericalSignal) -> Result<()> {
    write_atomic(path, textfmt::format_signal(s).as_bytes())
}

pub fn load_support(path: &Path) -> Result<sphface_core::pursuit::SparseSupport> {
    load(path, textfmt::parse_support)
}

pub fn load_pca(path: &Path) -> Result<sphface_core::pca::PcaModel> {
    load(path, textfmt::parse_pca)
}

pub fn load_lda(path: &Path) -> Result<sphface_core::recognition::LdaModel> {
    load(path, textfmt::parse_lda)
}

/// One value per line; used for depth images.
pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                msg: format!("invalid number '{}'", l.trim()),
            })
        })
        .collect()
}

pub fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(v.len() * 12);
    for x in v {
        text.push_str(&x.to_string());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}
