use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::pursuit::CoefficientMatrix;

/// Fisher discriminant projection `c~ = W^T c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `d` discriminant directions, each of length `K`, strongest first.
    pub w: Vec<Vec<f64>>,
    /// Generalized eigenvalues matching the columns of `w`.
    pub eigenvalues: Vec<f64>,
    pub class_labels: Vec<usize>,
    pub class_means: Vec<Vec<f64>>,
    pub global_mean: Vec<f64>,
    pub clamped_from: Option<usize>,
}

impl LdaModel {
    pub fn input_dim(&self) -> usize {
        self.global_mean.len()
    }

    pub fn d(&self) -> usize {
        self.w.len()
    }

    pub fn project(&self, c: &[f64]) -> Vec<f64> {
        self.w.iter().map(|w| w.iter().zip(c).map(|(a, b)| a * b).sum()).collect()
    }
}

/// LDA on the columns of a coefficient matrix.
pub fn lda_fit_matrix(c: &CoefficientMatrix, labels: &[usize], d: usize) -> Result<LdaModel> {
    let samples: Vec<Vec<f64>> = c.columns().map(|col| col.to_vec()).collect();
    lda_fit(&samples, labels, d)
}

/// Top-`d` generalized eigenvectors of `(S_b, S_w + eps I)` with
/// `eps = 1e-6 trace(S_w) / K`. `d` is clamped to `min(K, c - 1)`; pass
/// `usize::MAX` to ask for that maximum without it counting as clamping.
pub fn lda_fit(samples: &[Vec<f64>], labels: &[usize], d: usize) -> Result<LdaModel> {
    if samples.len() != labels.len() || samples.is_empty() {
        return Err(Error::contract("LDA needs one label per sample"));
    }
    let k = samples[0].len();
    if k == 0 || samples.iter().any(|s| s.len() != k) {
        return Err(Error::contract("LDA samples must share a non-zero dimension"));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let classes = groups.len();
    if classes < 2 {
        return Err(Error::contract("LDA needs at least two classes"));
    }
    if d == 0 {
        return Err(Error::config("LDA output dimension must be >= 1"));
    }
    let limit = k.min(classes - 1);
    let clamped_from = (d > limit && d != usize::MAX).then_some(d);
    if clamped_from.is_some() {
        log::warn!("LDA dimension {d} clamped to min(K, c-1) = {limit}");
    }
    let d = d.min(limit);

    let n = samples.len() as f64;
    let mut global_mean = vec![0.0; k];
    for s in samples {
        for (m, v) in global_mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut sb = DMatrix::<f64>::zeros(k, k);
    let mut sw = DMatrix::<f64>::zeros(k, k);
    let mut class_labels = Vec::with_capacity(classes);
    let mut class_means = Vec::with_capacity(classes);
    for (&label, members) in &groups {
        let nk = members.len() as f64;
        let mut mean = vec![0.0; k];
        for &i in members {
            for (m, v) in mean.iter_mut().zip(&samples[i]) {
                *m += v / nk;
            }
        }
        for a in 0..k {
            let da = mean[a] - global_mean[a];
            for b in 0..k {
                sb[(a, b)] += nk * da * (mean[b] - global_mean[b]);
            }
        }
        for &i in members {
            let s = &samples[i];
            for a in 0..k {
                let da = s[a] - mean[a];
                if da == 0.0 {
                    continue;
                }
                for b in 0..k {
                    sw[(a, b)] += da * (s[b] - mean[b]);
                }
            }
        }
        class_labels.push(label);
        class_means.push(mean);
    }

    let mut eps = 1e-6 * sw.trace() / k as f64;
    if eps <= 0.0 {
        // One sample per class: no within-class scatter at all.
        eps = 1e-6 * (sb.trace() / k as f64).max(1e-300);
    }
    for a in 0..k {
        sw[(a, a)] += eps;
    }
    let chol = sw
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized within-class scatter is not positive definite".into()))?;
    let l = chol.l();
    // M = L^-1 S_b L^-T
    let linv_sb = l.solve_lower_triangular(&sb).ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&linv_sb.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lt = l.transpose();
    let mut w = Vec::with_capacity(d);
    let mut eigenvalues = Vec::with_capacity(d);
    for &i in order.iter().take(d) {
        let v = eig.eigenvectors.column(i).clone_owned();
        let col = lt.solve_upper_triangular(&v).ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let mut col: Vec<f64> = col.iter().copied().collect();
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        w.push(col);
        eigenvalues.push(eig.eigenvalues[i]);
    }
    Ok(LdaModel { w, eigenvalues, class_labels, class_means, global_mean, clamped_from })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_classes(seed: u64, classes: usize, per: usize, k: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for c in 0..classes {
            for _ in 0..per {
                let mut x: Vec<f64> = (0..k).map(|_| noise.sample(&mut rng)).collect();
                x[0] += sep * c as f64;
                xs.push(x);
                ys.push(c);
            }
        }
        (xs, ys)
    }

    #[test]
    fn output_dimension_rule() {
        let (xs, ys) = gaussian_classes(1, 4, 10, 6, 3.0);
        let m = lda_fit(&xs, &ys, 10).unwrap();
        assert_eq!(m.d(), 3);
        assert_eq!(m.clamped_from, Some(10));
        let (xs, ys) = gaussian_classes(1, 10, 5, 4, 3.0);
        assert_eq!(lda_fit(&xs, &ys, 100).unwrap().d(), 4);
    }

    #[test]
    fn separable_line_has_high_fisher_ratio() {
        // Classes differ along one axis embedded in 8 dims.
        let (xs, ys) = gaussian_classes(7, 2, 200, 8, 12.0);
        let m = lda_fit(&xs, &ys, 1).unwrap();
        let proj: Vec<f64> = xs.iter().map(|x| m.project(x)[0]).collect();
        let stats = |c: usize| {
            let v: Vec<f64> = proj.iter().zip(&ys).filter(|(_, &y)| y == c).map(|(p, _)| *p).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
            (mean, libm::sqrt(var))
        };
        let (m0, s0) = stats(0);
        let (m1, s1) = stats(1);
        assert!((m0 - m1).abs() > 5.0 * s0.max(s1));
    }

    #[test]
    fn needs_two_classes() {
        let xs = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(lda_fit(&xs, &[0, 0], 1).is_err());
    }

    #[test]
    fn single_sample_per_class_is_regularized() {
        let xs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let m = lda_fit(&xs, &[0, 1, 2], 2).unwrap();
        assert_eq!(m.d(), 2);
        assert!(m.w.iter().flatten().all(|v| v.is_finite()));
    }
}
