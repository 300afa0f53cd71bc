//! Overcomplete dictionary of anisotropic Gaussian atoms on the sphere.
//!
//! An atom is the generating Gaussian `exp(-tan^2(theta/2))` stretched by two
//! scales along orthogonal axes at the north pole, spun by `psi` in-plane and
//! moved to `(tau, nu)` by a ZYZ rotation `R = Rz(nu) Ry(tau) Rz(psi)`.
//! Larger scales give narrower atoms; scale 1 covers roughly half the sphere.
//!
//! [`AtomLattice`] holds the discretized parameter lattice and computes
//! correlations against every lattice atom at once. Motion in `nu` is an
//! exact cyclic shift of grid columns when the azimuth lattice divides
//! `n_phi`, so only one atom per `(tau, psi, alpha, beta)` is synthesized.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{cos, exp, log2, pow, round, sin, tan};
use crate::sphere::{weighted_dot, SphereGrid, SphericalSignal};

/// Relative tolerance under which two lattice scores count as tied; ties go
/// to the earlier atom in enumeration order.
pub const TIE_RTOL: f64 = 1e-9;

/// Atom parameters `(tau, nu, psi, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomIndex {
    /// Elevation of the atom center, in `[0, pi]`.
    pub tau: f64,
    /// Azimuth of the atom center, in `[-pi, pi)`.
    pub nu: f64,
    /// In-plane rotation, in `[-pi, pi)`.
    pub psi: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl AtomIndex {
    pub const fn new(tau: f64, nu: f64, psi: f64, alpha: f64, beta: f64) -> Self {
        Self { tau, nu, psi, alpha, beta }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau, self.nu, self.psi, self.alpha, self.beta].iter().all(|v| v.is_finite());
        if !finite || self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::contract("atom index must be finite with positive scales"));
        }
        Ok(())
    }

    fn key(&self) -> [u64; 5] {
        [self.tau.to_bits(), self.nu.to_bits(), self.psi.to_bits(), self.alpha.to_bits(), self.beta.to_bits()]
    }

    /// `R^T`, mapping world directions into the atom's local frame.
    fn local_frame(&self) -> [[f64; 3]; 3] {
        let rz = |a: f64| {
            let (s, c) = (sin(a), cos(a));
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
        };
        let ry = |a: f64| {
            let (s, c) = (sin(a), cos(a));
            [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
        };
        let r = matmul(&matmul(&rz(self.nu), &ry(self.tau)), &rz(self.psi));
        transpose(&r)
    }
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// The isotropic generating Gaussian centered at the north pole.
pub fn generating_gaussian(theta: f64, _phi: f64) -> f64 {
    if theta >= PI {
        return 0.0;
    }
    let t = tan(theta / 2.0);
    exp(-t * t)
}

/// Un-normalized anisotropic Gaussian at a local-frame unit vector.
///
/// With stereographic coordinates `tan(theta/2) (cos phi, sin phi) =
/// (x, y) / (1 + z)` the exponent becomes `((alpha x)^2 + (beta y)^2) / (1 + z)^2`.
#[inline]
fn local_gaussian(local: [f64; 3], alpha: f64, beta: f64) -> f64 {
    let denom = 1.0 + local[2];
    if denom <= 1e-300 {
        return 0.0;
    }
    let u = alpha * local[0] / denom;
    let v = beta * local[1] / denom;
    exp(-(u * u + v * v))
}

fn raw_atom(gamma: &AtomIndex, grid: SphereGrid) -> Vec<f64> {
    let rt = gamma.local_frame();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            let w = grid.node(i, j);
            let l = [
                rt[0][0] * w[0] + rt[0][1] * w[1] + rt[0][2] * w[2],
                rt[1][0] * w[0] + rt[1][1] * w[1] + rt[1][2] * w[2],
                rt[2][0] * w[0] + rt[2][1] * w[1] + rt[2][2] * w[2],
            ];
            out.push(local_gaussian(l, gamma.alpha, gamma.beta));
        }
    }
    out
}

fn normalized(grid: SphereGrid, mut values: Vec<f64>) -> Result<Vec<f64>> {
    let n = libm::sqrt(weighted_dot(grid, &values, &values));
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let inv = 1.0 / n;
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(values)
}

/// Samples atom `gamma` on `grid` and normalizes it to unit quadrature norm.
pub fn synthesize_atom(gamma: &AtomIndex, grid: SphereGrid) -> Result<SphericalSignal> {
    gamma.validate()?;
    let values = normalized(grid, raw_atom(gamma, grid))?;
    SphericalSignal::from_values(grid, values)
}

/// Discretization of the atom parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictionarySpec {
    /// Lattice points for `tau` (on `[0, pi]`) and for `nu` (on `[-pi, pi)`).
    pub n_pos: usize,
    /// Lattice points for `psi` on `[-pi, pi)`.
    pub n_rot: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub scales_per_octave: usize,
    pub grid: SphereGrid,
    /// Enumerate a single `psi` for isotropic atoms (`alpha == beta`).
    pub collapse_isotropic: bool,
}

impl DictionarySpec {
    /// The full-resolution lattice: 128 positions and rotations, scales from
    /// 1 to 64 at three per octave, on a 128x128 grid.
    pub fn full() -> Self {
        Self {
            n_pos: 128,
            n_rot: 128,
            scale_min: 1.0,
            scale_max: 64.0,
            scales_per_octave: 3,
            grid: SphereGrid { n_theta: 128, n_phi: 128 },
            collapse_isotropic: false,
        }
    }

    /// Desk-scale lattice: 16 positions, 8 rotations, scales {1, 2, 4}.
    pub fn desk() -> Self {
        Self {
            n_pos: 16,
            n_rot: 8,
            scale_min: 1.0,
            scale_max: 4.0,
            scales_per_octave: 1,
            grid: SphereGrid { n_theta: 64, n_phi: 64 },
            collapse_isotropic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pos < 2 || self.n_rot < 1 || self.scales_per_octave < 1 {
            return Err(Error::config("dictionary needs n_pos >= 2, n_rot >= 1, scales_per_octave >= 1"));
        }
        if !(self.scale_min >= 1.0 && self.scale_min <= self.scale_max) {
            return Err(Error::config("dictionary scales need 1 <= scale_min <= scale_max"));
        }
        if self.scale_max > self.n_pos as f64 / 2.0 {
            return Err(Error::config(alloc::format!(
                "scale_max {} exceeds n_pos/2 = {}",
                self.scale_max,
                self.n_pos as f64 / 2.0
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::config("dictionary grid is empty"));
        }
        Ok(())
    }

    /// Log-spaced scales `scale_min * 2^(m / scales_per_octave)`.
    pub fn scales(&self) -> Vec<f64> {
        let octaves = log2(self.scale_max / self.scale_min);
        let steps = round(octaves * self.scales_per_octave as f64) as usize;
        (0..=steps)
            .map(|m| {
                if m == steps {
                    self.scale_max
                } else {
                    self.scale_min * pow(2.0, m as f64 / self.scales_per_octave as f64)
                }
            })
            .collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.n_pos).map(|k| PI * k as f64 / (self.n_pos - 1) as f64).collect()
    }

    pub fn nus(&self) -> Vec<f64> {
        uniform_circle(self.n_pos)
    }

    pub fn psis(&self) -> Vec<f64> {
        uniform_circle(self.n_rot)
    }

    /// Number of atoms `enumerate_atoms` yields.
    pub fn atom_count(&self) -> u64 {
        let s = self.scales().len() as u64;
        let pos = (self.n_pos as u64).pow(2);
        if self.collapse_isotropic {
            pos * (self.n_rot as u64 * (s * s - s) + s)
        } else {
            pos * self.n_rot as u64 * s * s
        }
    }
}

fn uniform_circle(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

/// All lattice atoms in a fixed order: `tau` outermost, then `nu`, `psi`,
/// `alpha`, `beta`.
pub fn enumerate_atoms(spec: &DictionarySpec) -> Result<impl Iterator<Item = AtomIndex>> {
    spec.validate()?;
    let (taus, nus, psis, scales) = (spec.taus(), spec.nus(), spec.psis(), spec.scales());
    let collapse = spec.collapse_isotropic;
    Ok(taus.into_iter().flat_map(move |tau| {
        let (psis, scales) = (psis.clone(), scales.clone());
        nus.clone().into_iter().flat_map(move |nu| {
            let scales = scales.clone();
            psis.clone().into_iter().enumerate().flat_map(move |(pi, psi)| {
                let scales2 = scales.clone();
                scales.clone().into_iter().flat_map(move |alpha| {
                    scales2
                        .clone()
                        .into_iter()
                        .filter(move |&beta| !(collapse && pi > 0 && alpha == beta))
                        .map(move |beta| AtomIndex { tau, nu, psi, alpha, beta })
                })
            })
        })
    }))
}

/// Selection criterion over per-signal correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    /// `sum_i <r_i, g>^2`.
    #[default]
    SumSquares,
    /// `sum_i |<r_i, g>|`.
    SumAbs,
}

impl Criterion {
    #[inline]
    pub fn score(&self, corr: &[f64]) -> f64 {
        match self {
            Criterion::SumSquares => corr.iter().map(|c| c * c).sum(),
            Criterion::SumAbs => corr.iter().map(|c| c.abs()).sum(),
        }
    }
}

/// Index of the best score, ties (within [`TIE_RTOL`]) going to the first.
/// `None` when every score is zero.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let max = scores.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return None;
    }
    let floor = max * (1.0 - TIE_RTOL);
    scores.iter().position(|&s| s >= floor)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    base: u32,
    shift: u32,
}

/// The discretized dictionary prepared for bulk correlation.
#[derive(Debug, Clone)]
pub struct AtomLattice {
    spec: DictionarySpec,
    atoms: Vec<AtomIndex>,
    entries: Vec<Entry>,
    /// Unit-norm base atoms at `nu = -pi`, one per `(tau, psi, alpha, beta)`.
    bases: Vec<Vec<f64>>,
    /// Column shift per `nu` lattice index; `None` when columns do not line up.
    shifts: Option<Vec<usize>>,
    row_weights: Vec<f64>,
}

impl AtomLattice {
    pub fn new(spec: &DictionarySpec) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid;
        let atoms: Vec<AtomIndex> = enumerate_atoms(spec)?.collect();
        let shiftable = grid.n_phi % spec.n_pos == 0;
        let shifts = shiftable.then(|| {
            let step = grid.n_phi / spec.n_pos;
            (0..spec.n_pos).map(|k| k * step).collect::<Vec<_>>()
        });

        let nus = spec.nus();
        let mut base_ids: BTreeMap<[u64; 5], u32> = BTreeMap::new();
        let mut bases = Vec::new();
        let mut entries = Vec::with_capacity(atoms.len());
        for atom in &atoms {
            let (key_atom, shift) = if shiftable {
                let k = nus.iter().position(|&v| v == atom.nu).unwrap_or(0);
                (AtomIndex { nu: -PI, ..*atom }, k as u32)
            } else {
                (*atom, 0)
            };
            let next = bases.len() as u32;
            let id = *base_ids.entry(key_atom.key()).or_insert(next);
            if id == next {
                bases.push(normalized(grid, raw_atom(&key_atom, grid))?);
            }
            entries.push(Entry { base: id, shift });
        }
        Ok(Self { spec: *spec, atoms, entries, bases, shifts, row_weights: grid.row_weights() })
    }

    pub fn spec(&self) -> &DictionarySpec {
        &self.spec
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

    /// Correlations `<s_i, g_a>` for every lattice atom `a` and signal `i`,
    /// laid out atom-major (`out[a * n + i]`).
    pub fn correlations(&self, signals: &[&[f64]]) -> Vec<f64> {
        let n = signals.len();
        let grid = self.spec.grid;
        let np = grid.n_phi;
        let mut out = vec![0.0; self.atoms.len() * n];
        match &self.shifts {
            Some(shifts) => {
                let ns = shifts.len();
                // Per base: accumulate [shift][signal].
                let mut per_base = vec![vec![0.0; ns * n]; self.bases.len()];
                let mut doubled = vec![0.0; 2 * np];
                for (b, base) in self.bases.iter().enumerate() {
                    let acc = &mut per_base[b];
                    for i in 0..grid.n_theta {
                        let row = &base[i * np..(i + 1) * np];
                        if row.iter().all(|&v| v == 0.0) {
                            continue;
                        }
                        doubled[..np].copy_from_slice(row);
                        doubled[np..].copy_from_slice(row);
                        let w = self.row_weights[i];
                        for (s, sig) in signals.iter().enumerate() {
                            let srow = &sig[i * np..(i + 1) * np];
                            for (k, &m) in shifts.iter().enumerate() {
                                // atom[j] = base[(j - m) mod np]
                                let start = np - m;
                                let rot = &doubled[start..start + np];
                                acc[k * n + s] += w * dot4(srow, rot);
                            }
                        }
                    }
                }
                for (a, e) in self.entries.iter().enumerate() {
                    let src = &per_base[e.base as usize][e.shift as usize * n..(e.shift as usize + 1) * n];
                    out[a * n..(a + 1) * n].copy_from_slice(src);
                }
            }
            None => {
                for (a, e) in self.entries.iter().enumerate() {
                    let base = &self.bases[e.base as usize];
                    for (s, sig) in signals.iter().enumerate() {
                        out[a * n + s] = weighted_dot(grid, sig, base);
                    }
                }
            }
        }
        out
    }

    /// Scores of every lattice atom under `criterion`.
    pub fn scores(&self, correlations: &[f64], n_signals: usize, criterion: Criterion) -> Vec<f64> {
        correlations.chunks_exact(n_signals.max(1)).map(|c| criterion.score(c)).collect()
    }
}

#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Result of a lattice search.
#[derive(Debug, Clone, PartialEq)]
pub struct BestAtom {
    pub gamma: AtomIndex,
    /// Position in enumeration order.
    pub lattice_index: usize,
    /// `<r_i, g_gamma>` per residual.
    pub inner_products: Vec<f64>,
}

/// Exact search of the lattice for the atom maximizing `criterion` over all
/// residuals.
pub fn best_atom(residuals: &[SphericalSignal], spec: &DictionarySpec, criterion: Criterion) -> Result<BestAtom> {
    let lattice = AtomLattice::new(spec)?;
    best_atom_in(&lattice, residuals, criterion)
}

/// [`best_atom`] against a prepared lattice.
pub fn best_atom_in(lattice: &AtomLattice, residuals: &[SphericalSignal], criterion: Criterion) -> Result<BestAtom> {
    if residuals.is_empty() {
        return Err(Error::contract("best_atom needs at least one residual"));
    }
    let grid = lattice.spec.grid;
    if residuals.iter().any(|r| r.grid() != grid) {
        return Err(Error::contract("residual grid does not match the dictionary grid"));
    }
    let views: Vec<&[f64]> = residuals.iter().map(|r| r.values()).collect();
    let corr = lattice.correlations(&views);
    let scores = lattice.scores(&corr, residuals.len(), criterion);
    let idx = select_best(&scores).ok_or(Error::ZeroResidual)?;
    let gamma = lattice.atoms[idx];
    let atom = synthesize_atom(&gamma, grid)?;
    let inner_products = residuals.iter().map(|r| weighted_dot(grid, r.values(), atom.values())).collect();
    Ok(BestAtom { gamma, lattice_index: idx, inner_products })
}

/// Bounded FIFO cache of synthesized atoms.
#[derive(Debug, Clone)]
pub struct AtomCache {
    grid: SphereGrid,
    capacity: usize,
    map: BTreeMap<[u64; 5], SphericalSignal>,
    order: VecDeque<[u64; 5]>,
}

impl AtomCache {
    pub fn new(grid: SphereGrid, capacity: usize) -> Self {
        Self { grid, capacity: capacity.max(1), map: BTreeMap::new(), order: VecDeque::new() }
    }

    pub fn get(&mut self, gamma: &AtomIndex) -> Result<SphericalSignal> {
        let key = gamma.key();
        if let Some(hit) = self.map.get(&key) {
            return Ok(hit.clone());
        }
        let atom = synthesize_atom(gamma, self.grid)?;
        if self.map.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.map.remove(&old);
            }
        }
        self.map.insert(key, atom.clone());
        self.order.push_back(key);
        Ok(atom)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
