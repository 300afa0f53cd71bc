use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lda::lda_fit;
use super::matching::{auc, cmc_from_ranks, l1_distance, rank_of, roc_curve, squared_l2, RocPoint};
use super::virtual_faces::make_virtual_faces;
use crate::dictionary::{AtomLattice, Criterion, DictionarySpec};
use crate::error::{Error, Result};
use crate::pca::{pca_encode, pca_fit, PcaModel};
use crate::pursuit::{encode, ssmp_select_in, EncodeMode, SparseSupport, SsmpConfig};
use crate::sphere::SphericalSignal;

/// Classification methods compared by the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Euclidean distance between depth images.
    Euc,
    /// Quadrature mean square error between spherical signals.
    Mse,
    Pca,
    PcaLda,
    Ssmp,
    SsmpLda,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Euc, Method::Mse, Method::Pca, Method::PcaLda, Method::Ssmp, Method::SsmpLda];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Euc => "euc",
            Method::Mse => "mse",
            Method::Pca => "pca",
            Method::PcaLda => "pca+lda",
            Method::Ssmp => "ssmp",
            Method::SsmpLda => "ssmp+lda",
        }
    }

    pub fn needs_depth(&self) -> bool {
        matches!(self, Method::Euc | Method::Pca | Method::PcaLda)
    }

    pub fn needs_support(&self) -> bool {
        matches!(self, Method::Ssmp | Method::SsmpLda)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| Error::config(alloc::format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankMode {
    /// Rank among the nearest distinct gallery labels.
    #[default]
    DistinctLabels,
    /// Rank among individual gallery samples.
    Samples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VirtualPolicy {
    /// Only for SSMP+LDA, and only for small training sets: `i <= 3` when
    /// recognizing, `i <= 2` when verifying.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsmpTraining {
    /// One randomly chosen training face per subject.
    #[default]
    OnePerSubject,
    AllTraining,
}

/// Pre-learned subspaces used instead of learning one per split.
#[derive(Debug, Clone, Default)]
pub struct SubspaceOverride {
    pub support: Option<SparseSupport>,
    pub pca: Option<PcaModel>,
}

#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub dictionary: DictionarySpec,
    /// SSMP support size `K`.
    pub num_atoms: usize,
    /// PCA dimension; defaults to `num_atoms`.
    pub pca_dim: Option<usize>,
    pub encode_mode: EncodeMode,
    pub criterion: Criterion,
    pub ssmp_training: SsmpTraining,
    /// Virtual-face translation in cells (1 or 2).
    pub virtual_shift: usize,
    pub fixed: SubspaceOverride,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            dictionary: DictionarySpec::desk(),
            num_atoms: 50,
            pca_dim: None,
            encode_mode: EncodeMode::Mp,
            criterion: Criterion::SumSquares,
            ssmp_training: SsmpTraining::OnePerSubject,
            virtual_shift: 1,
            fixed: SubspaceOverride::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// Training samples per subject; subjects need at least `i + 1` scans.
    pub i: usize,
    pub n_repeats: usize,
    pub rng_seed: u64,
    /// Longest CMC rank; defaults to the number of gallery subjects.
    pub rank_max: Option<usize>,
    pub rank_mode: RankMode,
    pub virtual_policy: VirtualPolicy,
    /// Probe with the gallery itself (smoke runs).
    pub gallery_as_test: bool,
    pub recognition: bool,
    pub verification: bool,
}

impl EvalConfig {
    pub fn new(i: usize) -> Self {
        Self {
            i,
            n_repeats: 10,
            rng_seed: 0,
            rank_max: None,
            rank_mode: RankMode::DistinctLabels,
            virtual_policy: VirtualPolicy::Auto,
            gallery_as_test: false,
            recognition: true,
            verification: true,
        }
    }

    pub fn min_scans(&self) -> usize {
        self.i + 1
    }

    fn validate(&self) -> Result<()> {
        if self.i == 0 {
            return Err(Error::config("training samples per subject must be >= 1"));
        }
        if self.n_repeats == 0 {
            return Err(Error::config("n_repeats must be >= 1"));
        }
        Ok(())
    }

    fn use_virtual(&self, method: Method, verifying: bool) -> bool {
        method == Method::SsmpLda
            && match self.virtual_policy {
                VirtualPolicy::Always => true,
                VirtualPolicy::Never => false,
                VirtualPolicy::Auto => self.i <= if verifying { 2 } else { 3 },
            }
    }
}

/// One probe or gallery face. `depth` is the registered depth image (may be
/// empty when only spherical methods are evaluated).
#[derive(Debug, Clone)]
pub struct Sample {
    pub label: usize,
    pub signal: SphericalSignal,
    pub depth: Vec<f64>,
}

/// A train/test partition over sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Subjects kept, ascending.
    pub subjects: Vec<usize>,
}

/// Keeps subjects with at least `i + 1` samples and draws `i` of them for
/// training; the rest become test samples. Both lists are sorted.
pub fn split_subjects(labels: &[usize], i: usize, rng: &mut ChaCha8Rng) -> Result<SplitPlan> {
    if i == 0 {
        return Err(Error::config("training samples per subject must be >= 1"));
    }
    let mut by_subject: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, &l) in labels.iter().enumerate() {
        by_subject.entry(l).or_default().push(idx);
    }
    let mut plan = SplitPlan { train: Vec::new(), test: Vec::new(), subjects: Vec::new() };
    for (subject, mut idx) in by_subject {
        if idx.len() < i + 1 {
            continue;
        }
        idx.shuffle(rng);
        plan.subjects.push(subject);
        plan.train.extend_from_slice(&idx[..i]);
        plan.test.extend_from_slice(&idx[i..]);
    }
    if plan.subjects.is_empty() {
        return Err(Error::config(alloc::format!("no subject has at least {} scans", i + 1)));
    }
    plan.train.sort_unstable();
    plan.test.sort_unstable();
    Ok(plan)
}

/// `(subjects, training, test)` counts of a `T_i` split. They do not depend
/// on which scans the split draws.
pub fn split_counts(labels: &[usize], i: usize) -> (usize, usize, usize) {
    let mut per: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *per.entry(l).or_default() += 1;
    }
    per.values().filter(|&&n| n > i).fold((0, 0, 0), |(s, tr, te), &n| (s + 1, tr + i, te + n - i))
}

/// RNG for repeat `r`: the seed picks the key, the repeat picks the stream, so
/// repeats are independent of evaluation order.
pub fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

/// Results of one method on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatOutcome {
    pub method: Method,
    pub rank1: f64,
    pub cmc: Vec<f64>,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub rank1: Vec<f64>,
    pub cmc: Vec<Vec<f64>>,
    pub auc: Vec<f64>,
    pub roc: Vec<Vec<RocPoint>>,
}

impl MethodReport {
    pub fn rank1_mean(&self) -> f64 {
        mean(&self.rank1)
    }

    pub fn rank1_std(&self) -> f64 {
        sample_std(&self.rank1)
    }

    pub fn auc_mean(&self) -> f64 {
        mean(&self.auc)
    }

    pub fn auc_std(&self) -> f64 {
        sample_std(&self.auc)
    }

    /// Per-rank mean of the CMC curves.
    pub fn cmc_mean(&self) -> Vec<f64> {
        let len = self.cmc.iter().map(Vec::len).max().unwrap_or(0);
        (0..len)
            .map(|k| {
                let v: Vec<f64> = self.cmc.iter().filter_map(|c| c.get(k).copied()).collect();
                mean(&v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub methods: Vec<MethodReport>,
    pub n_subjects: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl EvalReport {
    /// Gathers per-repeat outcomes (in repeat order) into a report.
    pub fn from_repeats(config: EvalConfig, plan: &SplitPlan, repeats: Vec<Vec<RepeatOutcome>>) -> Self {
        let mut methods: Vec<MethodReport> = Vec::new();
        for outcome in repeats.into_iter().flatten() {
            let pos = match methods.iter().position(|m| m.method == outcome.method) {
                Some(p) => p,
                None => {
                    methods.push(MethodReport {
                        method: outcome.method,
                        rank1: Vec::new(),
                        cmc: Vec::new(),
                        auc: Vec::new(),
                        roc: Vec::new(),
                    });
                    methods.len() - 1
                }
            };
            let m = &mut methods[pos];
            if config.recognition {
                m.rank1.push(outcome.rank1);
                m.cmc.push(outcome.cmc);
            }
            if config.verification {
                m.auc.push(outcome.auc);
                m.roc.push(outcome.roc);
            }
        }
        Self {
            config,
            methods,
            n_subjects: plan.subjects.len(),
            n_train: plan.train.len(),
            n_test: if config.gallery_as_test { plan.train.len() } else { plan.test.len() },
        }
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    crate::math::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64)
}

/// Builds the dictionary lattice if some method needs to learn a support.
pub fn lattice_for(params: &PipelineParams, methods: &[Method]) -> Result<Option<AtomLattice>> {
    if params.fixed.support.is_none() && methods.iter().any(Method::needs_support) {
        Ok(Some(AtomLattice::new(&params.dictionary)?))
    } else {
        Ok(None)
    }
}

/// Runs every repeat sequentially; recognition and verification share the
/// same splits and distances.
pub fn evaluate(
    samples: &[Sample],
    params: &PipelineParams,
    cfg: &EvalConfig,
    methods: &[Method],
) -> Result<EvalReport> {
    cfg.validate()?;
    let lattice = lattice_for(params, methods)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let plan0 = split_subjects(&labels, cfg.i, &mut repeat_rng(cfg.rng_seed, 0))?;
    let mut repeats = Vec::with_capacity(cfg.n_repeats);
    for r in 0..cfg.n_repeats {
        repeats.push(evaluate_repeat(samples, params, cfg, methods, lattice.as_ref(), r)?);
    }
    Ok(EvalReport::from_repeats(*cfg, &plan0, repeats))
}

pub fn evaluate_recognition(
    samples: &[Sample],
    params: &PipelineParams,
    cfg: &EvalConfig,
    methods: &[Method],
) -> Result<EvalReport> {
    let cfg = EvalConfig { recognition: true, verification: false, ..*cfg };
    evaluate(samples, params, &cfg, methods)
}

pub fn evaluate_verification(
    samples: &[Sample],
    params: &PipelineParams,
    cfg: &EvalConfig,
    methods: &[Method],
) -> Result<EvalReport> {
    let cfg = EvalConfig { recognition: false, verification: true, ..*cfg };
    evaluate(samples, params, &cfg, methods)
}

/// One random split, all methods. `lattice` is required when a method learns
/// an SSMP support (see [`lattice_for`]).
pub fn evaluate_repeat(
    samples: &[Sample],
    params: &PipelineParams,
    cfg: &EvalConfig,
    methods: &[Method],
    lattice: Option<&AtomLattice>,
    repeat: usize,
) -> Result<Vec<RepeatOutcome>> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::config("no evaluation method selected"));
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let mut rng = repeat_rng(cfg.rng_seed, repeat);
    let plan = split_subjects(&labels, cfg.i, &mut rng)?;
    if cfg.verification && plan.subjects.len() < 2 {
        return Err(Error::contract("verification needs at least two subjects"));
    }
    let test: &[usize] = if cfg.gallery_as_test { &plan.train } else { &plan.test };
    if test.is_empty() {
        return Err(Error::contract("split produced no test samples"));
    }

    let support = match (&params.fixed.support, methods.iter().any(Method::needs_support)) {
        (Some(s), true) => Some(s.clone()),
        (None, true) => {
            let lattice = lattice.ok_or_else(|| Error::contract("SSMP evaluation needs a dictionary lattice"))?;
            Some(learn_support(samples, &plan, params, lattice, &mut rng)?)
        }
        _ => None,
    };

    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        if method.needs_depth() && samples.iter().any(|s| s.depth.is_empty()) {
            return Err(Error::contract(alloc::format!("method {method} needs depth images")));
        }
        // Virtual faces depend on the task, so recognition and verification
        // may see different galleries.
        let rec_virtual = cfg.use_virtual(method, false);
        let ver_virtual = cfg.use_virtual(method, true);
        let mut outcome = RepeatOutcome { method, rank1: f64::NAN, cmc: Vec::new(), roc: Vec::new(), auc: f64::NAN };
        let mut cached: Option<(bool, (FeatureSet, FeatureSet))> = None;
        if cfg.recognition {
            let sets = features(method, samples, &plan.train, test, params, support.as_ref(), rec_virtual)?;
            let rank_max = cfg.rank_max.unwrap_or(plan.subjects.len()).max(1);
            let ranks = rank_probes(&sets.0, &sets.1, cfg.rank_mode);
            outcome.cmc = cmc_from_ranks(&ranks, rank_max);
            outcome.rank1 = outcome.cmc[0];
            cached = Some((rec_virtual, sets));
        }
        if cfg.verification {
            let (gallery, probes) = match cached {
                Some((v, sets)) if v == ver_virtual => sets,
                _ => features(method, samples, &plan.train, test, params, support.as_ref(), ver_virtual)?,
            };
            let scores = verification_scores(&gallery, &probes, &plan.subjects);
            outcome.roc = roc_curve(&scores)?;
            outcome.auc = auc(&outcome.roc);
        }
        out.push(outcome);
    }
    Ok(out)
}

fn learn_support(
    samples: &[Sample],
    plan: &SplitPlan,
    params: &PipelineParams,
    lattice: &AtomLattice,
    rng: &mut ChaCha8Rng,
) -> Result<SparseSupport> {
    let chosen: Vec<usize> = match params.ssmp_training {
        SsmpTraining::AllTraining => plan.train.clone(),
        SsmpTraining::OnePerSubject => plan
            .subjects
            .iter()
            .map(|&s| {
                let own: Vec<usize> = plan.train.iter().copied().filter(|&t| samples[t].label == s).collect();
                *own.choose(rng).expect("every kept subject has a training sample")
            })
            .collect(),
    };
    let signals: Vec<SphericalSignal> = chosen.iter().map(|&i| samples[i].signal.clone()).collect();
    let cfg = SsmpConfig { num_atoms: params.num_atoms, criterion: params.criterion };
    Ok(ssmp_select_in(lattice, &signals, cfg)?.support)
}

/// Feature vectors in a space where the method's distance is L1 or squared
/// Euclidean, tagged with which one.
struct FeatureSet {
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
    l1: bool,
}

impl FeatureSet {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.l1 {
            l1_distance(a, b)
        } else {
            squared_l2(a, b)
        }
    }
}

fn features(
    method: Method,
    samples: &[Sample],
    train: &[usize],
    test: &[usize],
    params: &PipelineParams,
    support: Option<&SparseSupport>,
    with_virtual: bool,
) -> Result<(FeatureSet, FeatureSet)> {
    let labels = |idx: &[usize]| idx.iter().map(|&i| samples[i].label).collect::<Vec<_>>();
    let (g, p, l1) = match method {
        Method::Euc => (depths(samples, train), depths(samples, test), false),
        Method::Mse => (weighted(samples, train), weighted(samples, test), false),
        Method::Pca | Method::PcaLda => {
            let model = match &params.fixed.pca {
                Some(m) => m.clone(),
                None => pca_fit(&depths(samples, train), params.pca_dim.unwrap_or(params.num_atoms))?,
            };
            let enc = |v: Vec<Vec<f64>>| v.iter().map(|x| pca_encode(x, &model)).collect::<Result<Vec<_>>>();
            let g = enc(depths(samples, train))?;
            let p = enc(depths(samples, test))?;
            if method == Method::PcaLda {
                let lda = lda_fit(&g, &labels(train), usize::MAX)?;
                (project(&lda, &g), project(&lda, &p), true)
            } else {
                (g, p, true)
            }
        }
        Method::Ssmp | Method::SsmpLda => {
            let support = support.ok_or_else(|| Error::contract("SSMP evaluation without a support"))?;
            let enc = |idx: &[usize]| {
                idx.iter().map(|&i| encode(&samples[i].signal, support, params.encode_mode)).collect::<Result<Vec<_>>>()
            };
            let mut g = enc(train)?;
            let p = enc(test)?;
            if method == Method::SsmpLda {
                let mut g_labels = labels(train);
                if with_virtual {
                    for &i in train {
                        for v in make_virtual_faces(&samples[i].signal, params.virtual_shift) {
                            g.push(encode(&v, support, params.encode_mode)?);
                            g_labels.push(samples[i].label);
                        }
                    }
                }
                let lda = lda_fit(&g, &g_labels, usize::MAX)?;
                return Ok((
                    FeatureSet { vectors: project(&lda, &g), labels: g_labels, l1: true },
                    FeatureSet { vectors: project(&lda, &p), labels: labels(test), l1: true },
                ));
            }
            (g, p, true)
        }
    };
    Ok((FeatureSet { vectors: g, labels: labels(train), l1 }, FeatureSet { vectors: p, labels: labels(test), l1 }))
}

fn depths(samples: &[Sample], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| samples[i].depth.clone()).collect()
}

/// Signal values scaled by `sqrt(w / W)` so squared L2 equals the quadrature MSE.
fn weighted(samples: &[Sample], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&i| {
            let s = &samples[i].signal;
            let grid = s.grid();
            let total = grid.total_weight();
            let scale: Vec<f64> = grid.row_weights().iter().map(|w| crate::math::sqrt(w / total)).collect();
            s.values()
                .chunks_exact(grid.n_phi)
                .zip(&scale)
                .flat_map(|(row, k)| row.iter().map(move |v| v * k))
                .collect()
        })
        .collect()
}

fn project(lda: &super::lda::LdaModel, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|c| lda.project(c)).collect()
}

fn rank_probes(gallery: &FeatureSet, probes: &FeatureSet, mode: RankMode) -> Vec<Option<usize>> {
    probes
        .vectors
        .iter()
        .zip(&probes.labels)
        .map(|(p, &truth)| {
            let d: Vec<f64> = gallery.vectors.iter().map(|g| gallery.distance(p, g)).collect();
            rank_of(&d, &gallery.labels, truth, mode == RankMode::DistinctLabels)
        })
        .collect()
}

/// `(score, is_client)` for every (probe, claimed subject) pair; the score is
/// minus the smallest distance to the claimed subject's gallery entries.
fn verification_scores(gallery: &FeatureSet, probes: &FeatureSet, subjects: &[usize]) -> Vec<(f64, bool)> {
    let mut out = Vec::with_capacity(probes.vectors.len() * subjects.len());
    for (p, &truth) in probes.vectors.iter().zip(&probes.labels) {
        let mut best = vec![f64::INFINITY; subjects.len()];
        for (g, l) in gallery.vectors.iter().zip(&gallery.labels) {
            if let Ok(k) = subjects.binary_search(l) {
                let d = gallery.distance(p, g);
                if d < best[k] {
                    best[k] = d;
                }
            }
        }
        for (k, &s) in subjects.iter().enumerate() {
            out.push((-best[k], s == truth));
        }
    }
    out
}
