//! PCA on depth images, the subspace baseline.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d` orthonormal basis vectors of length `dim`, strongest first.
    pub basis: Vec<Vec<f64>>,
    /// Variance captured by each basis vector.
    pub eigenvalues: Vec<f64>,
    /// Dimension originally asked for, when it exceeded the data rank.
    pub clamped_from: Option<usize>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn d(&self) -> usize {
        self.basis.len()
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, b) in coeffs.iter().zip(&self.basis) {
            for (o, v) in out.iter_mut().zip(b) {
                *o += c * v;
            }
        }
        out
    }
}

/// Fits the top-`d` principal axes of `images` (one vector per image).
/// A `d` above the data rank is clamped.
pub fn pca_fit(images: &[Vec<f64>], d: usize) -> Result<PcaModel> {
    let n = images.len();
    if n == 0 {
        return Err(Error::contract("PCA needs at least one image"));
    }
    let dim = images[0].len();
    if dim == 0 || images.iter().any(|x| x.len() != dim) {
        return Err(Error::contract("PCA images must share a non-zero dimension"));
    }
    if d == 0 {
        return Err(Error::config("PCA dimension must be >= 1"));
    }
    let mut mean = alloc::vec![0.0; dim];
    for x in images {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(dim, n, |r, c| images[c][r] - mean[r]);
    let svd = centered.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = smax * f64::EPSILON * dim.max(n) as f64;
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();
    if rank == 0 {
        return Err(Error::Numerical("PCA data has zero variance".into()));
    }
    let clamped_from = (d > rank).then_some(d);
    if let Some(asked) = clamped_from {
        log::info!("PCA dimension {asked} exceeds data rank {rank}; clamped");
    }
    let d = d.min(rank);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };

    let mut basis = Vec::with_capacity(d);
    let mut eigenvalues = Vec::with_capacity(d);
    for &i in order.iter().take(d) {
        let mut v: Vec<f64> = u.column(i).iter().copied().collect();
        // Sign convention: largest-magnitude entry positive.
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(v);
        let s = svd.singular_values[i];
        eigenvalues.push(s * s / denom);
    }
    Ok(PcaModel { mean, basis, eigenvalues, clamped_from })
}

/// `basis^T (x - mean)`.
pub fn pca_encode(image: &[f64], model: &PcaModel) -> Result<Vec<f64>> {
    if image.len() != model.dim() {
        return Err(Error::contract("image dimension does not match the PCA model"));
    }
    Ok(model.basis.iter().map(|b| b.iter().zip(image).zip(&model.mean).map(|((v, x), m)| v * (x - m)).sum()).collect())
}
