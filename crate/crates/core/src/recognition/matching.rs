use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `sum_j |a_j - b_j|`.
#[inline]
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[inline]
pub fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    L1,
    SquaredL2,
}

impl Metric {
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L1 => l1_distance(a, b),
            Metric::SquaredL2 => squared_l2(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub coeffs: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub label: usize,
    pub index: usize,
    /// Distance to every gallery entry, in gallery order.
    pub distances: Vec<f64>,
}

/// Nearest gallery entry under the L1 distance; ties go to the earlier entry.
pub fn l1_match(probe: &[f64], gallery: &[GalleryEntry]) -> Result<MatchResult> {
    if gallery.is_empty() {
        return Err(Error::contract("empty gallery"));
    }
    if gallery.iter().any(|g| g.coeffs.len() != probe.len()) {
        return Err(Error::contract("probe and gallery dimensions differ"));
    }
    let distances: Vec<f64> = gallery.iter().map(|g| l1_distance(probe, &g.coeffs)).collect();
    let mut best = 0;
    for (i, d) in distances.iter().enumerate() {
        if *d < distances[best] {
            best = i;
        }
    }
    Ok(MatchResult { label: gallery[best].label, index: best, distances })
}

/// 1-based rank of `truth` for one probe.
///
/// With `distinct_labels`, gallery labels are ranked by their nearest entry;
/// otherwise the rank is the position of the first correct entry among all
/// sorted entries. `None` when the label is absent from the gallery.
pub fn rank_of(distances: &[f64], labels: &[usize], truth: usize, distinct_labels: bool) -> Option<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    if distinct_labels {
        let mut seen = BTreeSet::new();
        for &i in &order {
            if seen.insert(labels[i]) && labels[i] == truth {
                return Some(seen.len());
            }
        }
        None
    } else {
        order.iter().position(|&i| labels[i] == truth).map(|p| p + 1)
    }
}

/// Cumulative match characteristic for ranks `1..=rank_max`.
pub fn cmc_from_ranks(ranks: &[Option<usize>], rank_max: usize) -> Vec<f64> {
    let n = ranks.len().max(1) as f64;
    (1..=rank_max).map(|k| ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC over every distinct score; a claim is accepted when `score >= threshold`.
/// Starts at `(0, 0)` (threshold `+inf`) and ends at `(1, 1)`.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    let clients = scores.iter().filter(|s| s.1).count();
    let impostors = scores.len() - clients;
    if clients == 0 || impostors == 0 {
        return Err(Error::contract("ROC needs both client and impostor scores"));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint { threshold: t, fpr: fp as f64 / impostors as f64, tpr: tp as f64 / clients as f64 });
    }
    Ok(out)
}

/// Trapezoid area under an ROC curve.
pub fn auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}
