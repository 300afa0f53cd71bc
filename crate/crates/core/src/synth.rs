//! Deterministic synthetic range scans: a head with subject-specific facial
//! relief above a torso, seen under a small random pose with depth noise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::scan::ScanGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    /// Cells per side of the square scan.
    pub grid: usize,
    /// Side length of the scanned square, in length-units (mm).
    pub extent: f64,
    /// Standard deviation of the additive depth noise.
    pub noise: f64,
    /// Yaw, pitch and roll are each drawn from `[-pose_deg, pose_deg]`.
    pub pose_deg: f64,
    /// Each translation component is drawn from `[-translation, translation]`.
    pub translation: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { grid: 64, extent: 256.0, noise: 0.5, pose_deg: 5.0, translation: 3.0 }
    }
}

impl SynthParams {
    /// Noiseless and unposed.
    pub fn clean(grid: usize) -> Self {
        Self { grid, noise: 0.0, pose_deg: 0.0, translation: 0.0, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    x: f64,
    y: f64,
    sx: f64,
    sy: f64,
    /// Positive amplitudes move the surface towards the sensor.
    amp: f64,
}

/// Identity-defining shape parameters.
#[derive(Debug, Clone)]
struct Subject {
    /// Head center height.
    hy: f64,
    a: f64,
    b: f64,
    depth: f64,
    torso_top: f64,
    bumps: Vec<Bump>,
}

impl Subject {
    fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hy = -20.0;
        let a = rng.gen_range(60.0..72.0);
        let b = rng.gen_range(85.0..97.0);
        let depth = rng.gen_range(70.0..90.0);
        let mut bumps = Vec::new();
        let mut pair = |rng: &mut ChaCha8Rng, dx: (f64, f64), dy: (f64, f64), s: (f64, f64), amp: (f64, f64)| {
            let x = rng.gen_range(dx.0..dx.1);
            let y = hy + rng.gen_range(dy.0..dy.1);
            let sx = rng.gen_range(s.0..s.1);
            let sy = rng.gen_range(s.0..s.1);
            let amp = rng.gen_range(amp.0..amp.1);
            // Slight asymmetry between the two sides.
            let skew = rng.gen_range(0.9..1.1);
            bumps.push(Bump { x: -x, y, sx, sy, amp });
            bumps.push(Bump { x: x * skew, y, sx: sx * skew, sy, amp: amp * skew });
        };
        pair(&mut rng, (22.0, 30.0), (-35.0, -25.0), (6.0, 10.0), (4.0, 9.0)); // brows
        pair(&mut rng, (22.0, 30.0), (-18.0, -10.0), (5.0, 8.0), (-8.0, -4.0)); // eye sockets
        pair(&mut rng, (30.0, 40.0), (10.0, 20.0), (9.0, 14.0), (3.0, 8.0)); // cheeks
        bumps.push(Bump {
            x: rng.gen_range(-2.0..2.0),
            y: hy + rng.gen_range(0.0..10.0),
            sx: rng.gen_range(6.0..10.0),
            sy: rng.gen_range(12.0..18.0),
            amp: rng.gen_range(18.0..30.0),
        }); // nose
        bumps.push(Bump {
            x: 0.0,
            y: hy + rng.gen_range(30.0..38.0),
            sx: rng.gen_range(12.0..16.0),
            sy: rng.gen_range(3.0..5.0),
            amp: rng.gen_range(-3.0..-1.0),
        }); // mouth
        bumps.push(Bump {
            x: 0.0,
            y: hy + rng.gen_range(50.0..60.0),
            sx: rng.gen_range(10.0..14.0),
            sy: rng.gen_range(8.0..12.0),
            amp: rng.gen_range(5.0..10.0),
        }); // chin
        Self { hy, a, b, depth, torso_top: hy + 0.8 * b, bumps }
    }

    /// Depth of the nearest surface at `(x, y)` in the subject frame.
    fn depth_at(&self, x: f64, y: f64) -> Option<f64> {
        let (u, v) = (x / self.a, (y - self.hy) / self.b);
        let r2 = u * u + v * v;
        let head = (r2 < 1.0).then(|| {
            let mut z = -self.depth * math::sqrt(1.0 - r2);
            for b in &self.bumps {
                let (dx, dy) = ((x - b.x) / b.sx, (y - b.y) / b.sy);
                z -= b.amp * math::exp(-0.5 * (dx * dx + dy * dy));
            }
            z
        });
        let torso = (y >= self.torso_top).then(|| 100.0 + 0.1 * x.abs() + 0.05 * (y - self.torso_top));
        match (head, torso) {
            (Some(h), Some(t)) => Some(h.min(t)),
            (h, t) => h.or(t),
        }
    }

    fn pivot(&self) -> Vector3<f64> {
        Vector3::new(0.0, self.hy, -0.5 * self.depth)
    }
}

/// Rigid pose of a synthetic scan: yaw (about y), pitch (x) and roll (z) in
/// degrees, applied about the head pivot, then a translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub translation: [f64; 3],
}

/// One scan of subject `subject_seed`, posed and perturbed by `scan_seed`.
///
/// Depth is found per cell by solving for the intersection of the viewing
/// ray with the posed surface, so the output is an exact range image of the
/// posed subject; cells where that fails (silhouette edges) are invalid.
pub fn synth_face(subject_seed: u64, scan_seed: u64, params: &SynthParams) -> Result<ScanGrid> {
    check_params(params)?;
    let mut rng = scan_rng(subject_seed, scan_seed);
    let mut angle = || if params.pose_deg > 0.0 { rng.gen_range(-params.pose_deg..=params.pose_deg) } else { 0.0 };
    let (yaw_deg, pitch_deg, roll_deg) = (angle(), angle(), angle());
    let mut shift =
        || if params.translation > 0.0 { rng.gen_range(-params.translation..=params.translation) } else { 0.0 };
    let translation = [shift(), shift(), shift()];
    render(subject_seed, scan_seed, params, &Pose { yaw_deg, pitch_deg, roll_deg, translation }, &mut rng)
}

/// [`synth_face`] with an explicit pose in place of the random one;
/// `params.pose_deg` and `params.translation` are ignored, noise still comes
/// from `scan_seed`.
pub fn synth_face_posed(subject_seed: u64, scan_seed: u64, params: &SynthParams, pose: &Pose) -> Result<ScanGrid> {
    check_params(params)?;
    render(subject_seed, scan_seed, params, pose, &mut scan_rng(subject_seed, scan_seed))
}

fn check_params(params: &SynthParams) -> Result<()> {
    if params.grid < 16 {
        return Err(Error::config("synthetic grid must be at least 16x16"));
    }
    if !(params.extent > 0.0) || params.noise < 0.0 || params.pose_deg < 0.0 || params.translation < 0.0 {
        return Err(Error::config("synthetic extent must be positive and perturbations non-negative"));
    }
    Ok(())
}

fn scan_rng(subject_seed: u64, scan_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(scan_seed ^ subject_seed.rotate_left(32));
    rng.set_stream(1);
    rng
}

fn render(
    subject_seed: u64,
    scan_seed: u64,
    params: &SynthParams,
    pose: &Pose,
    rng: &mut ChaCha8Rng,
) -> Result<ScanGrid> {
    let subject = Subject::draw(subject_seed);
    let t = Vector3::from(pose.translation);
    let rot: Matrix3<f64> = *(Rotation3::from_axis_angle(&Vector3::y_axis(), pose.yaw_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pose.pitch_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::z_axis(), pose.roll_deg.to_radians()))
    .matrix();
    let inv = rot.transpose();
    let pivot = subject.pivot();

    let n = params.grid;
    let step = params.extent / (n - 1) as f64;
    let origin = -params.extent / 2.0;
    let mut z = vec![0.0; n * n];
    let mut valid = vec![false; n * n];
    for r in 0..n {
        for c in 0..n {
            let (x, y) = (origin + c as f64 * step, origin + r as f64 * step);
            if let Some(d) = ray_depth(&subject, &inv, &pivot, &t, x, y) {
                z[r * n + c] = d;
                valid[r * n + c] = true;
            }
        }
    }
    if params.noise > 0.0 {
        let normal = Normal::new(0.0, params.noise).map_err(|_| Error::config("invalid noise level"))?;
        for (v, ok) in z.iter_mut().zip(&valid) {
            if *ok {
                *v += normal.sample(rng);
            }
        }
    }
    Ok(ScanGrid::from_depth(n, n, (origin, origin), (step, step), z, valid)?
        .with_ids(format!("{subject_seed}"), format!("{subject_seed}-{scan_seed}")))
}

/// `n_subjects x scans_per_subject` scans. Subject and scan seeds are drawn
/// from `seed`; ids are `sNNN` and `sNNN_j`.
pub fn synth_dataset(
    n_subjects: usize,
    scans_per_subject: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<Vec<ScanGrid>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_subjects * scans_per_subject);
    for s in 0..n_subjects {
        let subject_seed: u64 = rng.gen();
        for j in 0..scans_per_subject {
            let scan_seed: u64 = rng.gen();
            out.push(synth_face(subject_seed, scan_seed, params)?.with_ids(format!("s{s:03}"), format!("s{s:03}_{j}")));
        }
    }
    Ok(out)
}

/// Depth `w` such that the unposed point behind `(x, y, w)` lies on the
/// subject surface.
fn ray_depth(s: &Subject, inv: &Matrix3<f64>, pivot: &Vector3<f64>, t: &Vector3<f64>, x: f64, y: f64) -> Option<f64> {
    let unpose = |w: f64| inv * (Vector3::new(x, y, w) - pivot - t) + pivot;
    let slope = inv[(2, 2)];
    let mut w = s.depth_at(x - t.x, y - t.y).unwrap_or(0.0) + t.z;
    for _ in 0..40 {
        let q = unpose(w);
        let h = q.z - s.depth_at(q.x, q.y)?;
        if h.abs() < 1e-9 {
            return Some(w);
        }
        w -= h / slope;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let p = SynthParams::default();
        assert_eq!(synth_face(3, 7, &p).unwrap(), synth_face(3, 7, &p).unwrap());
        assert_ne!(synth_face(3, 7, &p).unwrap(), synth_face(3, 8, &p).unwrap());
    }

    #[test]
    fn subjects_differ() {
        let p = SynthParams::clean(64);
        let (a, b) = (synth_face(1, 0, &p).unwrap(), synth_face(2, 0, &p).unwrap());
        let mut max = 0.0f64;
        for k in 0..a.z_raw().len() {
            if a.mask()[k] && b.mask()[k] {
                max = max.max((a.z_raw()[k] - b.z_raw()[k]).abs());
            }
        }
        assert!(max > 5.0);
    }

    #[test]
    fn dataset_ids_and_determinism() {
        let p = SynthParams::clean(16);
        let a = synth_dataset(3, 2, 9, &p).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!((a[3].subject_id.as_str(), a[3].scan_id.as_str()), ("s001", "s001_1"));
        assert_eq!(a, synth_dataset(3, 2, 9, &p).unwrap());
        assert_ne!(a, synth_dataset(3, 2, 10, &p).unwrap());
    }

    #[test]
    fn too_coarse() {
        assert!(matches!(synth_face(0, 0, &SynthParams::clean(8)), Err(Error::Config(_))));
    }

    #[test]
    fn unposed_scan_samples_the_surface_exactly() {
        let p = SynthParams::clean(32);
        let scan = synth_face(5, 1, &p).unwrap();
        let s = Subject::draw(5);
        for r in 0..32 {
            for c in 0..32 {
                let (x, y) = (scan.x()[r * 32 + c], scan.y()[r * 32 + c]);
                assert_eq!(scan.depth(r, c), s.depth_at(x, y));
            }
        }
    }

    #[test]
    fn scene_has_face_and_torso() {
        let scan = synth_face(0, 0, &SynthParams::default()).unwrap();
        let near = scan.z_raw().iter().zip(scan.mask()).filter(|(z, v)| **v && **z < 20.0).count();
        let far = scan.z_raw().iter().zip(scan.mask()).filter(|(z, v)| **v && **z > 80.0).count();
        assert!(near > 800 && far > 500, "near {near} far {far}");
    }
}
