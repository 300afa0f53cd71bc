//! Removal of shoulders, chest and stray blobs from a raw range scan.
//!
//! Three stages, each of which only ever invalidates cells: a lateral crop
//! at the inflexion points of the column projection curve, an Otsu cut on
//! the depth histogram, and a largest-8-connected-region filter.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scan::ScanGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    /// Moving-average window for the projection curve; `None` means
    /// `max(3, cols / 32)`. Even windows are rounded up to odd.
    pub window: Option<usize>,
    /// Second differences smaller than this fraction of the curve maximum
    /// count as flat, so count quantization does not look like curvature.
    pub curvature_floor: f64,
    pub histogram_bins: usize,
    /// The depth cut is abandoned if fewer than this fraction of cells survive.
    pub min_survivors: f64,
    /// The depth cut is abandoned unless Otsu's between-class variance
    /// explains at least this fraction of the total variance.
    pub min_separability: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self { window: None, curvature_floor: 0.02, histogram_bins: 256, min_survivors: 0.25, min_separability: 0.85 }
    }
}

/// Per-column count of valid cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionCurve {
    pub values: Vec<usize>,
}

impl ProjectionCurve {
    pub fn from_scan(scan: &ScanGrid) -> Self {
        let mut values = vec![0; scan.cols()];
        for r in 0..scan.rows() {
            for (c, v) in values.iter_mut().enumerate() {
                *v += scan.is_valid(r, c) as usize;
            }
        }
        Self { values }
    }

    /// Centered moving average; the window shrinks at the edges.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let n = self.values.len();
        let h = window / 2;
        let mut prefix = vec![0usize; n + 1];
        for (i, v) in self.values.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        (0..n)
            .map(|c| {
                let lo = c.saturating_sub(h);
                let hi = (c + h + 1).min(n);
                (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionReport {
    pub left_col: usize,
    pub right_col: usize,
    pub depth_cutoff: f64,
    pub cells_removed_lateral: usize,
    pub cells_removed_depth: usize,
    pub cells_removed_morph: usize,
}

fn window_for(cols: usize, cfg: &ExtractionConfig) -> usize {
    let w = cfg.window.unwrap_or((cols / 32).max(3)).max(1);
    w | 1
}

/// Crops the scan laterally to the band between the inflexion points that
/// flank the maximum of the smoothed projection curve.
///
/// An inflexion is a concave-to-convex change of the discrete second
/// difference; the cut sits midway between the last concave and the first
/// convex sample. A side without an inflexion is left alone.
pub fn lateral_threshold(scan: &ScanGrid, cfg: &ExtractionConfig) -> Result<(ScanGrid, usize, usize)> {
    if scan.valid_count() == 0 {
        return Err(Error::EmptyFace(scan.scan_id.clone()));
    }
    let cols = scan.cols();
    let curve = ProjectionCurve::from_scan(scan);
    let window = window_for(cols, cfg);
    let s = curve.smoothed(window);
    // Uncropped sides report the outermost occupied column.
    let first = curve.values.iter().position(|&v| v > 0).unwrap_or(0);
    let last = curve.values.iter().rposition(|&v| v > 0).unwrap_or(cols - 1);
    let (left, right) = inflexion_band(&curve.values, &s, window / 2, cfg.curvature_floor).unwrap_or((None, None));
    let (left, right) = (left.unwrap_or(first), right.unwrap_or(last));
    let mut mask = scan.mask().to_vec();
    for r in 0..scan.rows() {
        for c in (0..left).chain(right + 1..cols) {
            mask[r * cols + c] = false;
        }
    }
    Ok((scan.with_mask(mask)?, left, right))
}

/// Inclusive cut columns on each side of the peak of the smoothed curve `s`
/// (raw counts `raw`, smoothing half-width `h`); `None` for a side without
/// a usable inflexion, or overall when the two cuts cross.
fn inflexion_band(raw: &[usize], s: &[f64], h: usize, floor: f64) -> Option<(Option<usize>, Option<usize>)> {
    let n = s.len();
    if n < 3 {
        return None;
    }
    let peak = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = (floor * peak.abs()).max(1e-9);
    // sign of the second difference at c (1..n-1), 0 when flat.
    let sign = |c: usize| -> i8 {
        let d2 = s[c - 1] - 2.0 * s[c] + s[c + 1];
        if d2 > eps {
            1
        } else if d2 < -eps {
            -1
        } else {
            0
        }
    };
    let first_max = s.iter().position(|&v| v == peak).unwrap_or(0);
    let last_max = s.iter().rposition(|&v| v == peak).unwrap_or(n - 1);

    // Walking outwards from the peak: remember the latest concave sample and
    // stop at the first convex one seen after it. If the raw curve is empty
    // just past the foot, the drop is the end of the data and there is
    // nothing beside it to crop.
    let occupied = |c: Option<usize>| c.is_some_and(|c| c < n && raw[c] as f64 > eps);
    let mut left = None;
    let mut concave: Option<usize> = None;
    for c in (1..=first_max.min(n - 2)).rev() {
        match sign(c) {
            -1 => concave = Some(c),
            1 => {
                if let Some(b) = concave {
                    if occupied(c.checked_sub(h)) {
                        left = Some((c + b).div_ceil(2));
                    }
                    break;
                }
            }
            _ => {}
        }
    }
    let mut right = None;
    let mut concave: Option<usize> = None;
    for c in last_max.max(1)..n - 1 {
        match sign(c) {
            -1 => concave = Some(c),
            1 => {
                if let Some(a) = concave {
                    if occupied(Some(c + h)) {
                        right = Some((a + c) / 2);
                    }
                    break;
                }
            }
            _ => {}
        }
    }
    if left.unwrap_or(0) >= right.unwrap_or(n - 1) {
        return None;
    }
    Some((left, right))
}

/// Otsu cut on the depth histogram; cells deeper than the cutoff are dropped.
///
/// The cut is abandoned (scan returned as is, cutoff = largest depth) when
/// it would keep fewer than `min_survivors` of the cells or when the depth
/// distribution is not clearly bimodal.
pub fn depth_threshold(scan: &ScanGrid, cfg: &ExtractionConfig) -> Result<(ScanGrid, f64)> {
    let depths: Vec<f64> = scan.z_raw().iter().zip(scan.mask()).filter(|(_, &v)| v).map(|(z, _)| *z).collect();
    if depths.is_empty() {
        return Err(Error::EmptyFace(scan.scan_id.clone()));
    }
    let lo = depths.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = depths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok((scan.clone(), lo));
    }
    let Some((cutoff, eta)) = otsu(&depths, lo, hi, cfg.histogram_bins.max(2)) else {
        return Ok((scan.clone(), hi));
    };
    let kept = depths.iter().filter(|&&z| z <= cutoff).count();
    if (kept as f64) < cfg.min_survivors * depths.len() as f64 || eta < cfg.min_separability {
        log::debug!("depth cut at {cutoff} abandoned (kept {kept}/{}, separability {eta:.3})", depths.len());
        return Ok((scan.clone(), hi));
    }
    let mask: Vec<bool> = scan.mask().iter().zip(scan.z_raw()).map(|(&v, &z)| v && z <= cutoff).collect();
    Ok((scan.with_mask(mask)?, cutoff))
}

/// Otsu threshold (upper edge of the last background bin) and the
/// separability `sigma_between^2 / sigma_total^2` it achieves.
fn otsu(values: &[f64], lo: f64, hi: f64, bins: usize) -> Option<(f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        hist[b] += 1;
    }
    let n = values.len() as f64;
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    let mu_t: f64 = hist.iter().enumerate().map(|(b, &h)| h as f64 * center(b)).sum::<f64>() / n;
    let var_t: f64 =
        hist.iter().enumerate().map(|(b, &h)| h as f64 * (center(b) - mu_t) * (center(b) - mu_t)).sum::<f64>() / n;
    if var_t <= 0.0 {
        return None;
    }
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut between = vec![f64::NEG_INFINITY; bins - 1];
    for b in 0..bins - 1 {
        w0 += hist[b] as f64 / n;
        sum0 += hist[b] as f64 * center(b) / n;
        let w1 = 1.0 - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (mu_t - sum0) / w1;
        between[b] = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    let best = between.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    // Empty bins between two modes give a run of equal optima; cut in the
    // middle of the run.
    let tie = |v: f64| v >= best * (1.0 - 1e-12);
    let first = between.iter().position(|&v| tie(v))?;
    let last = first + between[first..].iter().take_while(|&&v| tie(v)).count() - 1;
    let edge = (first + last + 2) as f64 / 2.0;
    Some((lo + edge * width, best / var_t))
}

/// Keeps only the largest 8-connected region of the mask. Equal sizes go to
/// the region whose first cell comes first in row-major order.
pub fn keep_largest_region(scan: &ScanGrid) -> Result<ScanGrid> {
    let (rows, cols) = (scan.rows(), scan.cols());
    let mask = scan.mask();
    let mut label = vec![usize::MAX; mask.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(cell) = stack.pop() {
            size += 1;
            let (r, c) = ((cell / cols) as isize, (cell % cols) as isize);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let k = nr as usize * cols + nc as usize;
                    if mask[k] && label[k] == usize::MAX {
                        label[k] = id;
                        stack.push(k);
                    }
                }
            }
        }
        sizes.push(size);
    }
    let mut best = None;
    for (id, &size) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let Some((keep, _)) = best else {
        return Err(Error::EmptyFace(scan.scan_id.clone()));
    };
    let new_mask: Vec<bool> = label.iter().map(|&l| l == keep).collect();
    scan.with_mask(new_mask)
}

/// Lateral crop, then depth cut, then largest region.
pub fn extract_face(scan: &ScanGrid, cfg: &ExtractionConfig) -> Result<(ScanGrid, ExtractionReport)> {
    let empty = || Error::EmptyFace(scan.scan_id.clone());
    let n0 = scan.valid_count();
    if n0 == 0 {
        return Err(empty());
    }
    let (a, left_col, right_col) = lateral_threshold(scan, cfg)?;
    let n1 = a.valid_count();
    if n1 == 0 {
        return Err(empty());
    }
    let (b, depth_cutoff) = depth_threshold(&a, cfg)?;
    let n2 = b.valid_count();
    if n2 == 0 {
        return Err(empty());
    }
    let c = keep_largest_region(&b)?;
    let n3 = c.valid_count();
    Ok((
        c,
        ExtractionReport {
            left_col,
            right_col,
            depth_cutoff,
            cells_removed_lateral: n0 - n1,
            cells_removed_depth: n1 - n2,
            cells_removed_morph: n2 - n3,
        },
    ))
}
