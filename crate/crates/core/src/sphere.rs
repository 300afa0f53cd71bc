//! Signals on the equiangular sphere grid and the quadrature inner product.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::math::{acos, atan2, cos, sin, sqrt};
use crate::scan::PointCloud3D;

/// Equiangular grid with `theta_i = (2i+1)pi/(2 n_theta)` and
/// `phi_j = 2 pi j / n_phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::config("sphere grid needs n_theta >= 1 and n_phi >= 1"));
        }
        Ok(Self { n_theta, n_phi })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn theta(&self, i: usize) -> f64 {
        (2 * i + 1) as f64 * PI / (2 * self.n_theta) as f64
    }

    #[inline]
    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_phi as f64
    }

    pub fn theta_step(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn phi_step(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    /// Midpoint quadrature weight shared by every cell of row `i`.
    #[inline]
    pub fn row_weight(&self, i: usize) -> f64 {
        sin(self.theta(i)) * self.theta_step() * self.phi_step()
    }

    pub fn row_weights(&self) -> Vec<f64> {
        (0..self.n_theta).map(|i| self.row_weight(i)).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.row_weights().iter().sum::<f64>() * self.n_phi as f64
    }

    /// Unit vector of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> [f64; 3] {
        unit_vector(self.theta(i), self.phi(j))
    }
}

#[inline]
pub fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let st = sin(theta);
    [st * cos(phi), st * sin(phi), cos(theta)]
}

/// A real function sampled on a [`SphereGrid`], row-major over `(theta, phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSignal {
    grid: SphereGrid,
    values: Vec<f64>,
    coverage: Vec<bool>,
}

impl SphericalSignal {
    pub fn new(grid: SphereGrid, values: Vec<f64>, coverage: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || coverage.len() != grid.len() {
            return Err(Error::contract("signal buffers do not match the grid size"));
        }
        Ok(Self { grid, values, coverage })
    }

    /// Fully covered signal.
    pub fn from_values(grid: SphereGrid, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(grid, values, vec![true; n])
    }

    pub fn zeros(grid: SphereGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], coverage: vec![true; grid.len()] }
    }

    pub fn from_fn(grid: SphereGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_theta {
            let t = grid.theta(i);
            for j in 0..grid.n_phi {
                values.push(f(t, grid.phi(j)));
            }
        }
        Self { grid, values, coverage: vec![true; grid.len()] }
    }

    pub fn grid(&self) -> SphereGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_phi + j]
    }

    pub fn inner(&self, other: &SphericalSignal) -> Result<f64> {
        sphere_inner(self, other)
    }

    pub fn norm(&self) -> f64 {
        sqrt(weighted_dot(self.grid, &self.values, &self.values))
    }

    pub fn scaled(&self, c: f64) -> SphericalSignal {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self -= c * other` on the value buffer.
    pub fn sub_scaled(&mut self, c: f64, other: &[f64]) {
        for (v, o) in self.values.iter_mut().zip(other) {
            *v -= c * o;
        }
    }

    /// Cell-index translation: `out[i][j] = self[i - d_theta][j - d_phi]`,
    /// zero-filled (and uncovered) past the poles, wrapping in phi.
    pub fn shifted(&self, d_theta: isize, d_phi: isize) -> SphericalSignal {
        let (nt, np) = (self.grid.n_theta as isize, self.grid.n_phi as isize);
        let mut values = vec![0.0; self.values.len()];
        let mut coverage = vec![false; self.values.len()];
        for i in 0..nt {
            let src_i = i - d_theta;
            if !(0..nt).contains(&src_i) {
                continue;
            }
            for j in 0..np {
                let src_j = (j - d_phi).rem_euclid(np);
                let dst = (i * np + j) as usize;
                let src = (src_i * np + src_j) as usize;
                values[dst] = self.values[src];
                coverage[dst] = self.coverage[src];
            }
        }
        SphericalSignal { grid: self.grid, values, coverage }
    }
}

/// Quadrature inner product `sum_ij f_ij g_ij sin(theta_i) dtheta dphi`.
pub fn sphere_inner(f: &SphericalSignal, g: &SphericalSignal) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::contract("inner product of signals on different grids"));
    }
    Ok(weighted_dot(f.grid, &f.values, &g.values))
}

/// Row-wise weighted dot product; every inner product in the crate goes
/// through this so results agree bit for bit.
#[inline]
pub fn weighted_dot(grid: SphereGrid, a: &[f64], b: &[f64]) -> f64 {
    let np = grid.n_phi;
    let mut total = 0.0;
    for i in 0..grid.n_theta {
        let ra = &a[i * np..(i + 1) * np];
        let rb = &b[i * np..(i + 1) * np];
        let row: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
        total += grid.row_weight(i) * row;
    }
    total
}

pub fn sphere_norm(f: &SphericalSignal) -> f64 {
    f.norm()
}

pub fn normalize(f: &SphericalSignal) -> Result<SphericalSignal> {
    let n = f.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(f.scaled(1.0 / n))
}

/// A point in spherical coordinates about some center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

/// `r = |p - c|`, `theta = acos((z - z_c)/r)`, `phi = atan2(y - y_c, x - x_c)`.
pub fn to_spherical_coords(cloud: &PointCloud3D, center: [f64; 3]) -> Result<Vec<SphericalPoint>> {
    cloud.points.iter().map(|p| to_spherical(*p, center)).collect()
}

pub fn to_spherical(p: [f64; 3], center: [f64; 3]) -> Result<SphericalPoint> {
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let r = sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if r == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    let theta = acos((d[2] / r).clamp(-1.0, 1.0));
    let mut phi = atan2(d[1], d[0]);
    if phi >= PI {
        phi -= 2.0 * PI;
    }
    Ok(SphericalPoint { r, theta, phi })
}

pub fn from_spherical(s: SphericalPoint, center: [f64; 3]) -> [f64; 3] {
    let u = unit_vector(s.theta, s.phi);
    [center[0] + s.r * u[0], center[1] + s.r * u[1], center[2] + s.r * u[2]]
}

/// Projection center: cloud centroid pushed back (towards larger depth) by
/// `depth_factor` times the cloud's depth extent.
pub fn projection_center(cloud: &PointCloud3D, depth_factor: f64) -> Result<[f64; 3]> {
    let c = cloud.centroid().ok_or_else(|| Error::EmptyFace(cloud.scan_id.clone()))?;
    let (lo, hi) =
        cloud.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])));
    Ok([c[0], c[1], c[2] + depth_factor * (hi - lo)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    pub k: usize,
    /// A node is uncovered when its k-th neighbour lies farther than this
    /// many theta steps.
    pub cutoff_steps: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { k: 4, cutoff_steps: 3.0 }
    }
}

/// k-nearest-neighbour interpolation of scattered `(r, theta, phi)` samples
/// onto the grid. Neighbours are ranked by geodesic distance.
pub fn resample_to_grid(samples: &[SphericalPoint], grid: SphereGrid, cfg: ResampleConfig) -> Result<SphericalSignal> {
    if cfg.k == 0 || samples.len() < cfg.k {
        return Err(Error::config(alloc::format!(
            "k-NN resampling needs at least k = {} samples, got {}",
            cfg.k,
            samples.len()
        )));
    }
    // Chord length is monotone in geodesic angle, so Euclidean k-NN on unit
    // vectors ranks neighbours geodesically.
    let tree = KdTree::new(samples.iter().map(|s| unit_vector(s.theta, s.phi)).collect());
    let cutoff = (cfg.cutoff_steps * grid.theta_step()).min(PI);
    let chord = 2.0 * sin(cutoff / 2.0);
    let max_d2 = chord * chord;

    let mut values = vec![0.0; grid.len()];
    let mut coverage = vec![false; grid.len()];
    for i in 0..grid.n_theta {
        for j in 0..grid.n_phi {
            let nn = tree.nearest_k(&grid.node(i, j), cfg.k);
            if nn.len() < cfg.k || nn[cfg.k - 1].dist2 > max_d2 {
                continue;
            }
            let idx = i * grid.n_phi + j;
            values[idx] = nn.iter().map(|n| samples[n.index].r).sum::<f64>() / cfg.k as f64;
            coverage[idx] = true;
        }
    }
    SphericalSignal::new(grid, values, coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(n: usize) -> SphereGrid {
        SphereGrid::new(n, n).unwrap()
    }

    #[test]
    fn north_pole_and_equator() {
        let s = to_spherical([0.0, 0.0, 1.0], [0.0; 3]).unwrap();
        assert_eq!((s.r, s.theta, s.phi), (1.0, 0.0, 0.0));
        let s = to_spherical([3.0, 2.0, 1.0], [2.0, 2.0, 1.0]).unwrap();
        assert_eq!(s.r, 1.0);
        assert!((s.theta - PI / 2.0).abs() < 1e-15);
        assert_eq!(s.phi, 0.0);
    }

    #[test]
    fn point_at_center_is_an_error() {
        assert_eq!(to_spherical([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]), Err(Error::UndefinedDirection));
    }

    #[test]
    fn grid_nodes_are_strictly_inside() {
        let grid = g(128);
        assert!(grid.theta(0) > 0.0 && grid.theta(127) < PI);
        assert!(grid.row_weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn area_of_sphere_and_hemisphere() {
        let grid = g(128);
        let one = SphericalSignal::from_fn(grid, |_, _| 1.0);
        let area = sphere_inner(&one, &one).unwrap();
        assert!((area - 4.0 * PI).abs() < 0.01 * 4.0 * PI);
        let north = SphericalSignal::from_fn(grid, |t, _| if t < PI / 2.0 { 1.0 } else { 0.0 });
        let half = sphere_inner(&north, &one).unwrap();
        assert!((half - 2.0 * PI).abs() < 0.01 * 2.0 * PI);
        assert!((one.norm() - sqrt(4.0 * PI)).abs() < 0.01 * 3.5449);
    }

    #[test]
    fn zero_signal_products() {
        let grid = g(16);
        let f = SphericalSignal::from_fn(grid, |t, p| t * p + 1.0);
        assert_eq!(sphere_inner(&f, &SphericalSignal::zeros(grid)).unwrap(), 0.0);
        assert_eq!(normalize(&SphericalSignal::zeros(grid)), Err(Error::ZeroNorm));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = SphericalSignal::zeros(g(8));
        let b = SphericalSignal::zeros(g(16));
        assert!(matches!(sphere_inner(&a, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn low_order_quadrature() {
        let grid = g(128);
        let one = SphericalSignal::from_fn(grid, |_, _| 1.0);
        let c1 = SphericalSignal::from_fn(grid, |t, _| cos(t));
        let c2 = SphericalSignal::from_fn(grid, |t, _| cos(t) * cos(t));
        assert!(sphere_inner(&c1, &one).unwrap().abs() < 1e-6 * 4.0 * PI);
        let v = sphere_inner(&c2, &one).unwrap();
        assert!((v - 4.0 * PI / 3.0).abs() < 0.01 * 4.0 * PI / 3.0);
    }

    #[test]
    fn single_sample_on_node() {
        let grid = g(8);
        let sample = SphericalPoint { r: 7.5, theta: grid.theta(3), phi: grid.phi(2) };
        let sig = resample_to_grid(&[sample], grid, ResampleConfig { k: 1, cutoff_steps: 3.0 }).unwrap();
        assert_eq!(sig.at(3, 2), 7.5);
        assert!(sig.coverage()[3 * 8 + 2]);
        // Far away nodes are uncovered and zero.
        assert!(!sig.coverage()[0]);
        assert_eq!(sig.values()[0], 0.0);
    }

    #[test]
    fn too_few_samples() {
        let grid = g(8);
        let s = SphericalPoint { r: 1.0, theta: 1.0, phi: 0.0 };
        assert!(matches!(resample_to_grid(&[s, s], grid, ResampleConfig::default()), Err(Error::Config(_))));
    }

    fn dense_samples(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<SphericalPoint> {
        let fine = g(n);
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (t, p) = (fine.theta(i), fine.phi(j) - PI);
                out.push(SphericalPoint { r: f(t, p), theta: t, phi: p });
            }
        }
        out
    }

    #[test]
    fn constant_radius_is_reproduced() {
        let grid = g(16);
        let sig = resample_to_grid(&dense_samples(160, |_, _| 3.25), grid, ResampleConfig::default()).unwrap();
        for (v, c) in sig.values().iter().zip(sig.coverage()) {
            assert!(*c);
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_function_interpolation_error() {
        let grid = g(32);
        let f = |t: f64, _p: f64| 2.0 + 0.1 * cos(t);
        let sig = resample_to_grid(&dense_samples(320, f), grid, ResampleConfig::default()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                worst = worst.max((sig.at(i, j) - f(grid.theta(i), 0.0)).abs());
            }
        }
        assert!(worst < 0.01, "max error {worst}");
    }

    #[test]
    fn phi_shift_round_trip() {
        let grid = SphereGrid::new(6, 10).unwrap();
        let f = SphericalSignal::from_fn(grid, |t, p| t + 3.0 * p);
        assert_eq!(f.shifted(0, 3).shifted(0, -3), f);
        assert_ne!(f.shifted(1, 0), f);
    }

    proptest! {
        #[test]
        fn spherical_round_trip(p in proptest::array::uniform3(-50.0f64..50.0),
                                c in proptest::array::uniform3(-5.0f64..5.0)) {
            prop_assume!(kd(&p, &c) > 1e-3);
            let s = to_spherical(p, c).unwrap();
            prop_assert!(s.theta >= 0.0 && s.theta <= PI);
            prop_assert!(s.phi >= -PI && s.phi < PI);
            let q = from_spherical(s, c);
            for k in 0..3 {
                prop_assert!((q[k] - p[k]).abs() <= 1e-9 * s.r.max(1.0));
            }
        }

        #[test]
        fn cauchy_schwarz(a in proptest::collection::vec(-5.0f64..5.0, 64),
                          b in proptest::collection::vec(-5.0f64..5.0, 64)) {
            let grid = g(8);
            let f = SphericalSignal::from_values(grid, a).unwrap();
            let h = SphericalSignal::from_values(grid, b).unwrap();
            let ip = sphere_inner(&f, &h).unwrap();
            prop_assert!(ip.abs() <= f.norm() * h.norm() + 1e-12);
            prop_assert_eq!(ip, sphere_inner(&h, &f).unwrap());
        }

        #[test]
        fn norm_homogeneity(a in proptest::collection::vec(-5.0f64..5.0, 64), c in -10.0f64..10.0) {
            let f = SphericalSignal::from_values(g(8), a).unwrap();
            prop_assert!((f.scaled(c).norm() - c.abs() * f.norm()).abs() <= 1e-12 * (1.0 + f.norm() * c.abs()));
            if f.norm() > 0.0 {
                prop_assert!((normalize(&f).unwrap().norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn resampling_ignores_sample_order(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pts: Vec<SphericalPoint> = (0..400)
                .map(|_| SphericalPoint {
                    r: rng.gen_range(1.0..2.0),
                    theta: rng.gen_range(0.0..PI),
                    phi: rng.gen_range(-PI..PI),
                })
                .collect();
            let grid = g(12);
            let a = resample_to_grid(&pts, grid, ResampleConfig::default()).unwrap();
            pts.shuffle(&mut rng);
            let b = resample_to_grid(&pts, grid, ResampleConfig::default()).unwrap();
            prop_assert_eq!(a.coverage(), b.coverage());
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    fn kd(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        crate::kdtree::dist2(a, b)
    }
}
