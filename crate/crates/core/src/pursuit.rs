//! Simultaneous matching pursuit on the sphere and coefficient encoding.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::{select_best, AtomCache, AtomIndex, AtomLattice, Criterion, DictionarySpec};
use crate::error::{Error, Result};
use crate::sphere::{weighted_dot, SphereGrid, SphericalSignal};

/// Total residual energy below this fraction of the starting energy counts
/// as an exact fit and stops the pursuit early.
pub const ZERO_ENERGY_RTOL: f64 = 1e-20;

const LS_RIDGE: f64 = 1e-10;

/// The shared support `D_I`: atoms in selection order and their samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSupport {
    grid: SphereGrid,
    atoms: Vec<AtomIndex>,
    synthesis: Vec<SphericalSignal>,
}

impl SparseSupport {
    /// Re-synthesizes the atoms of a stored support.
    pub fn from_atoms(grid: SphereGrid, atoms: Vec<AtomIndex>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::contract("a sparse support needs at least one atom"));
        }
        let mut cache = AtomCache::new(grid, atoms.len());
        let synthesis = atoms.iter().map(|a| cache.get(a)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, atoms, synthesis })
    }

    pub fn grid(&self) -> SphereGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[AtomIndex] {
        &self.atoms
    }

    /// Columns of `Phi_I`.
    pub fn synthesis(&self) -> &[SphericalSignal] {
        &self.synthesis
    }

    /// `Phi_I c`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> SphericalSignal {
        let mut out = SphericalSignal::zeros(self.grid);
        for (c, g) in coeffs.iter().zip(&self.synthesis) {
            out.sub_scaled(-*c, g.values());
        }
        out
    }
}

/// `K x n` coefficients; column `i` encodes signal `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    k: usize,
    n: usize,
    /// Column-major storage.
    data: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn from_columns(k: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != k) {
            return Err(Error::contract("coefficient columns must all have K entries"));
        }
        Ok(Self { k, n: columns.len(), data: columns.iter().flatten().copied().collect() })
    }

    pub fn rows(&self) -> usize {
        self.k
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.k + row]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k.max(1)).take(self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsmpConfig {
    pub num_atoms: usize,
    pub criterion: Criterion,
}

impl SsmpConfig {
    pub fn new(num_atoms: usize) -> Self {
        Self { num_atoms, criterion: Criterion::SumSquares }
    }
}

#[derive(Debug, Clone)]
pub struct SsmpResult {
    pub support: SparseSupport,
    pub coefficients: CoefficientMatrix,
    /// `sum_i ||r_i||^2` after each iteration.
    pub residual_energies: Vec<f64>,
    pub residuals: Vec<SphericalSignal>,
    /// Set when the residuals vanished before `num_atoms` iterations.
    pub stopped_early: bool,
}

/// Greedy shared-support selection over the dictionary lattice.
pub fn ssmp_select(signals: &[SphericalSignal], spec: &DictionarySpec, num_atoms: usize) -> Result<SsmpResult> {
    let lattice = AtomLattice::new(spec)?;
    ssmp_select_in(&lattice, signals, SsmpConfig::new(num_atoms))
}

/// [`ssmp_select`] over a prepared lattice.
///
/// Correlations against the whole lattice are computed once and then kept
/// current with the Gram row of each selected atom, so an iteration costs
/// one lattice correlation instead of one per signal. Coefficients and
/// residuals are always computed directly from the selected atom.
pub fn ssmp_select_in(lattice: &AtomLattice, signals: &[SphericalSignal], cfg: SsmpConfig) -> Result<SsmpResult> {
    if cfg.num_atoms == 0 {
        return Err(Error::config("SSMP needs K >= 1"));
    }
    if signals.is_empty() {
        return Err(Error::contract("SSMP needs at least one signal"));
    }
    let grid = lattice.spec().grid;
    if signals.iter().any(|s| s.grid() != grid) {
        return Err(Error::contract("signals do not share the dictionary grid"));
    }
    let n = signals.len();
    let mut residuals: Vec<SphericalSignal> = signals.to_vec();
    let initial: f64 = residuals.iter().map(|r| weighted_dot(grid, r.values(), r.values())).sum();
    let views: Vec<&[f64]> = residuals.iter().map(|r| r.values()).collect();
    let mut corr = lattice.correlations(&views);

    let mut cache = AtomCache::new(grid, cfg.num_atoms);
    let mut atoms = Vec::new();
    let mut synthesis = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.num_atoms); n];
    let mut energies = Vec::with_capacity(cfg.num_atoms);
    let mut stopped_early = false;

    for _ in 0..cfg.num_atoms {
        if initial == 0.0 {
            stopped_early = true;
            break;
        }
        let scores = lattice.scores(&corr, n, cfg.criterion);
        let Some(best) = select_best(&scores) else {
            stopped_early = true;
            break;
        };
        let gamma = lattice.atoms()[best];
        let atom = cache.get(&gamma)?;
        let mut coeffs = Vec::with_capacity(n);
        for (r, col) in residuals.iter_mut().zip(columns.iter_mut()) {
            let c = mp_step(r, &atom);
            col.push(c);
            coeffs.push(c);
        }
        let energy: f64 = residuals.iter().map(|r| weighted_dot(grid, r.values(), r.values())).sum();
        energies.push(energy);
        atoms.push(gamma);
        synthesis.push(atom.clone());

        if energy <= ZERO_ENERGY_RTOL * initial {
            stopped_early = atoms.len() < cfg.num_atoms;
            break;
        }
        let gram = lattice.correlations(&[atom.values()]);
        for (a, g) in gram.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let row = &mut corr[a * n..(a + 1) * n];
            for (v, c) in row.iter_mut().zip(&coeffs) {
                *v -= c * g;
            }
        }
    }

    if atoms.is_empty() {
        return Err(Error::ZeroResidual);
    }
    let k = atoms.len();
    Ok(SsmpResult {
        support: SparseSupport { grid, atoms, synthesis },
        coefficients: CoefficientMatrix::from_columns(k, &columns)?,
        residual_energies: energies,
        residuals,
        stopped_early,
    })
}

/// One matching-pursuit update: `c = <r, g>`, `r -= c g`.
#[inline]
pub fn mp_step(residual: &mut SphericalSignal, atom: &SphericalSignal) -> f64 {
    let c = weighted_dot(residual.grid(), residual.values(), atom.values());
    residual.sub_scaled(c, atom.values());
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EncodeMode {
    /// Single matching-pursuit pass over the support in selection order.
    #[default]
    Mp,
    /// Ridge-regularized least squares on the support.
    LeastSquares,
}

/// Coefficients of `signal` on the sub-dictionary `support`.
pub fn encode(signal: &SphericalSignal, support: &SparseSupport, mode: EncodeMode) -> Result<Vec<f64>> {
    if signal.grid() != support.grid {
        return Err(Error::contract("signal grid does not match the support grid"));
    }
    match mode {
        EncodeMode::Mp => {
            let mut r = signal.clone();
            Ok(support.synthesis.iter().map(|g| mp_step(&mut r, g)).collect())
        }
        EncodeMode::LeastSquares => least_squares(signal, support),
    }
}

fn least_squares(signal: &SphericalSignal, support: &SparseSupport) -> Result<Vec<f64>> {
    let k = support.len();
    let grid = support.grid;
    let atoms = &support.synthesis;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for a in 0..k {
        rhs[a] = weighted_dot(grid, atoms[a].values(), signal.values());
        for b in a..k {
            let v = weighted_dot(grid, atoms[a].values(), atoms[b].values());
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
        gram[(a, a)] += LS_RIDGE;
    }
    let solution = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular support Gram matrix".into()))?,
    };
    Ok(solution.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{enumerate_atoms, synthesize_atom};

    fn spec() -> DictionarySpec {
        DictionarySpec {
            n_pos: 8,
            n_rot: 4,
            scale_min: 1.0,
            scale_max: 4.0,
            scales_per_octave: 1,
            grid: SphereGrid { n_theta: 16, n_phi: 16 },
            collapse_isotropic: false,
        }
    }

    #[test]
    fn exact_atom_is_recovered_in_one_step() {
        let spec = spec();
        let gamma = enumerate_atoms(&spec).unwrap().nth(500).unwrap();
        let atom = synthesize_atom(&gamma, spec.grid).unwrap();
        let res = ssmp_select(&[atom.clone()], &spec, 1).unwrap();
        assert_eq!(res.support.len(), 1);
        assert!((res.coefficients.get(0, 0) - 1.0).abs() < 1e-9);
        assert!(res.residual_energies[0] < 1e-12);
        let chosen = synthesize_atom(&res.support.atoms()[0], spec.grid).unwrap();
        assert!((chosen.inner(&atom).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn early_stop_returns_short_support() {
        let spec = spec();
        let gamma = enumerate_atoms(&spec).unwrap().nth(42).unwrap();
        let atom = synthesize_atom(&gamma, spec.grid).unwrap().scaled(2.5);
        let res = ssmp_select(&[atom], &spec, 5).unwrap();
        assert_eq!(res.support.len(), 1);
        assert!(res.stopped_early);
    }

    #[test]
    fn zero_signals_have_no_support() {
        let spec = spec();
        let z = SphericalSignal::zeros(spec.grid);
        assert_eq!(ssmp_select(&[z], &spec, 3).unwrap_err(), Error::ZeroResidual);
    }

    #[test]
    fn residual_is_orthogonal_to_last_atom_and_energy_is_conserved() {
        let spec = spec();
        let signals: Vec<_> = (0..3)
            .map(|s| {
                SphericalSignal::from_fn(spec.grid, |t, p| libm::cos(t * (s + 1) as f64) + 0.3 * libm::sin(2.0 * p))
            })
            .collect();
        let res = ssmp_select(&signals, &spec, 6).unwrap();
        assert!(res.residual_energies.windows(2).all(|w| w[1] <= w[0]));

        // Replay by hand and check each step.
        for (i, s) in signals.iter().enumerate() {
            let mut r = s.clone();
            for (k, g) in res.support.synthesis().iter().enumerate() {
                let before = r.norm().powi(2);
                let c = mp_step(&mut r, g);
                assert_eq!(c, res.coefficients.get(k, i));
                assert!(r.inner(g).unwrap().abs() < 1e-9);
                let after = r.norm().powi(2);
                assert!((before - after - c * c).abs() <= 1e-9 * before);
            }
        }
    }

    #[test]
    fn encode_reproduces_training_columns_bitwise() {
        let spec = spec();
        let signals: Vec<_> = (0..4)
            .map(|s| SphericalSignal::from_fn(spec.grid, |t, p| 1.0 + (s as f64) * libm::cos(t) * libm::sin(p)))
            .collect();
        let res = ssmp_select(&signals, &spec, 8).unwrap();
        for (i, s) in signals.iter().enumerate() {
            let c = encode(s, &res.support, EncodeMode::Mp).unwrap();
            assert_eq!(c.as_slice(), res.coefficients.column(i));
        }
    }

    #[test]
    fn zero_signal_encodes_to_zero() {
        let spec = spec();
        let atoms: Vec<_> = enumerate_atoms(&spec).unwrap().step_by(97).take(4).collect();
        let support = SparseSupport::from_atoms(spec.grid, atoms).unwrap();
        let z = SphericalSignal::zeros(spec.grid);
        for mode in [EncodeMode::Mp, EncodeMode::LeastSquares] {
            assert!(encode(&z, &support, mode).unwrap().iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn least_squares_beats_mp_on_residual() {
        let spec = spec();
        let atoms: Vec<_> = enumerate_atoms(&spec).unwrap().step_by(131).take(6).collect();
        let support = SparseSupport::from_atoms(spec.grid, atoms).unwrap();
        for s in 0..5 {
            let f = SphericalSignal::from_fn(spec.grid, |t, p| {
                libm::sin(3.0 * t + s as f64) * libm::cos(p - 0.2 * s as f64)
            });
            let err = |c: &[f64]| {
                let mut r = f.clone();
                r.sub_scaled(1.0, support.reconstruct(c).values());
                r.norm()
            };
            let mp = encode(&f, &support, EncodeMode::Mp).unwrap();
            let ls = encode(&f, &support, EncodeMode::LeastSquares).unwrap();
            assert!(err(&ls) <= err(&mp) + 1e-9);
        }
    }
}
