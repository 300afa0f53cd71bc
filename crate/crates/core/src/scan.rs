//! Scan containers: gridded range scans, free point clouds and labelled datasets.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relative tolerance for the uniform-grid check on `x`/`y`.
const GRID_TOL: f64 = 1e-9;

/// A raw range scan: X/Y on a uniform Euclidean grid, depth `z` and a
/// validity mask. Larger `z` is farther from the sensor.
///
/// All matrices are row-major `rows x cols`. `x` varies along columns and
/// `y` along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    rows: usize,
    cols: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    valid: Vec<bool>,
    pub subject_id: String,
    pub scan_id: String,
}

impl ScanGrid {
    pub fn new(rows: usize, cols: usize, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("scan grid needs at least one row and one column"));
        }
        let n = rows * cols;
        if x.len() != n || y.len() != n || z.len() != n || valid.len() != n {
            return Err(Error::contract("scan grid arrays must all hold rows*cols entries"));
        }
        check_uniform(&x, rows, cols, Axis::Cols)?;
        check_uniform(&y, rows, cols, Axis::Rows)?;
        Ok(Self { rows, cols, x, y, z, valid, subject_id: String::new(), scan_id: String::new() })
    }

    /// Builds a grid with `x = x0 + c*dx`, `y = y0 + r*dy`.
    pub fn from_depth(
        rows: usize,
        cols: usize,
        origin: (f64, f64),
        spacing: (f64, f64),
        z: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = rows * cols;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for r in 0..rows {
            for c in 0..cols {
                x.push(origin.0 + c as f64 * spacing.0);
                y.push(origin.1 + r as f64 * spacing.1);
            }
        }
        Self::new(rows, cols, x, y, z, valid)
    }

    pub fn with_ids(mut self, subject_id: impl Into<String>, scan_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self.scan_id = scan_id.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Raw depth buffer, including values under invalid cells.
    pub fn z_raw(&self) -> &[f64] {
        &self.z
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    #[inline]
    pub fn is_valid(&self, r: usize, c: usize) -> bool {
        self.valid[self.index(r, c)]
    }

    /// Depth at `(r, c)`, or `None` on a missing-data cell.
    #[inline]
    pub fn depth(&self, r: usize, c: usize) -> Option<f64> {
        let i = self.index(r, c);
        self.valid[i].then(|| self.z[i])
    }

    pub fn point(&self, r: usize, c: usize) -> Option<[f64; 3]> {
        let i = self.index(r, c);
        self.valid[i].then(|| [self.x[i], self.y[i], self.z[i]])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Grid origin `(x, y)` at cell (0, 0).
    pub fn origin(&self) -> (f64, f64) {
        (self.x[0], self.y[0])
    }

    /// Cell spacing `(dx, dy)`; zero along a degenerate axis of length one.
    pub fn spacing(&self) -> (f64, f64) {
        let dx = if self.cols > 1 { self.x[1] - self.x[0] } else { 0.0 };
        let dy = if self.rows > 1 { self.y[self.cols] - self.y[0] } else { 0.0 };
        (dx, dy)
    }

    /// Copy of this scan with a new validity mask. The new mask may only
    /// drop cells.
    pub fn with_mask(&self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.valid.len() {
            return Err(Error::contract("mask size does not match the grid"));
        }
        if valid.iter().zip(&self.valid).any(|(&new, &old)| new && !old) {
            return Err(Error::contract("a mask update cannot revalidate cells"));
        }
        let mut out = self.clone();
        out.valid = valid;
        Ok(out)
    }

    /// Replaces the depth buffer, keeping geometry and mask.
    pub fn with_depth(&self, z: Vec<f64>) -> Result<Self> {
        if z.len() != self.z.len() {
            return Err(Error::contract("depth buffer size does not match the grid"));
        }
        let mut out = self.clone();
        out.z = z;
        Ok(out)
    }

    /// One point per valid cell, in row-major order.
    pub fn to_cloud(&self) -> Result<PointCloud3D> {
        grid_to_cloud(self)
    }
}

enum Axis {
    Rows,
    Cols,
}

fn check_uniform(v: &[f64], rows: usize, cols: usize, axis: Axis) -> Result<()> {
    let (along, across) = match axis {
        Axis::Cols => (cols, rows),
        Axis::Rows => (rows, cols),
    };
    let at = |a: usize, b: usize| match axis {
        Axis::Cols => v[b * cols + a],
        Axis::Rows => v[a * cols + b],
    };
    if along < 2 {
        // Only constancy across the other axis can be checked.
        let base = at(0, 0);
        for b in 0..across {
            if !close(at(0, b), base, base.abs()) {
                return Err(Error::contract("grid coordinates are not uniform"));
            }
        }
        return Ok(());
    }
    let step = at(1, 0) - at(0, 0);
    let scale = at(0, 0).abs().max(at(along - 1, 0).abs()).max(step.abs());
    for b in 0..across {
        for a in 0..along {
            let expected = at(0, 0) + a as f64 * step;
            if !close(at(a, b), expected, scale) {
                return Err(Error::contract("grid coordinates are not uniform"));
            }
        }
    }
    Ok(())
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= GRID_TOL * scale.max(1.0)
}

/// A free 3D point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud3D {
    pub points: Vec<[f64; 3]>,
    pub subject_id: String,
    pub scan_id: String,
}

impl PointCloud3D {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points, subject_id: String::new(), scan_id: String::new() }
    }

    pub fn with_ids(mut self, subject_id: impl Into<String>, scan_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self.scan_id = scan_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let mut acc = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                acc[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        Some([acc[0] / n, acc[1] / n, acc[2] / n])
    }

    /// Registration precondition: non-empty with finite coordinates.
    pub fn check_registrable(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyFace(self.scan_id.clone()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::contract("point cloud holds non-finite coordinates"));
        }
        Ok(())
    }
}

/// Flattens the valid cells of a scan into a point cloud.
pub fn grid_to_cloud(scan: &ScanGrid) -> Result<PointCloud3D> {
    let points: Vec<[f64; 3]> = (0..scan.rows)
        .flat_map(|r| (0..scan.cols).map(move |c| (r, c)))
        .filter_map(|(r, c)| scan.point(r, c))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyFace(scan.scan_id.clone()));
    }
    Ok(PointCloud3D { points, subject_id: scan.subject_id.clone(), scan_id: scan.scan_id.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Labelled scans with a train/test assignment.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub scans: Vec<T>,
    pub labels: Vec<String>,
    pub split: Vec<Split>,
}

impl<T> Dataset<T> {
    pub fn new(scans: Vec<T>, labels: Vec<String>, split: Vec<Split>) -> Result<Self> {
        if scans.len() != labels.len() || scans.len() != split.len() {
            return Err(Error::contract("every scan needs exactly one label and one split"));
        }
        Ok(Self { scans, labels, split })
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    /// Checks that every subject with a test scan also has a training scan.
    pub fn check(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (label, split) in self.labels.iter().zip(&self.split) {
            let e = seen.entry(label.as_str()).or_default();
            match split {
                Split::Train => e.0 += 1,
                Split::Test => e.1 += 1,
            }
        }
        match seen.iter().find(|(_, (train, _))| *train == 0) {
            Some((label, _)) => Err(Error::contract(alloc::format!("subject {label} has no training scan"))),
            None => Ok(()),
        }
    }
}
