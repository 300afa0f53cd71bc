//! Rigid registration: ICP, the average face model (AFM) and elliptic cropping.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::math;
use crate::scan::{PointCloud3D, ScanGrid};

/// `p -> R p + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self { rotation, translation };
        if !t.is_proper(1e-9) {
            return Err(Error::contract("rotation is not orthonormal with det +1"));
        }
        Ok(t)
    }

    /// Rotation by `angle` about `axis`, then translation.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let axis = Unit::new_normalize(Vector3::from(axis));
        Self { rotation: *Rotation3::from_axis_angle(&axis, angle).matrix(), translation: Vector3::from(translation) }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::from(t) }
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::from(p) + self.translation;
        [v.x, v.y, v.z]
    }

    pub fn apply_cloud(&self, cloud: &PointCloud3D) -> PointCloud3D {
        PointCloud3D {
            points: cloud.points.iter().map(|&p| self.apply(p)).collect(),
            subject_id: cloud.subject_id.clone(),
            scan_id: cloud.scan_id.clone(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        math::acos(c)
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let e = self.rotation.transpose() * self.rotation - Matrix3::identity();
        e.amax() < tol && (self.rotation.determinant() - 1.0).abs() < tol
    }
}

/// Least-squares rigid map of `src` onto `dst` (paired point by point) by
/// SVD of the cross-covariance, with reflection correction.
pub fn fit_rigid(src: &[[f64; 3]], dst: &[[f64; 3]]) -> Result<RigidTransform> {
    if src.is_empty() || src.len() != dst.len() {
        return Err(Error::contract("rigid fit needs equally many paired points"));
    }
    let n = src.len() as f64;
    let mean = |pts: &[[f64; 3]]| pts.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p)) / n;
    let (cs, cd) = (mean(src), mean(dst));
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (Vector3::from(*s) - cs) * (Vector3::from(*d) - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v)) => (u, v),
        _ => return Err(Error::Numerical("SVD of the cross-covariance failed".into())),
    };
    let v = v_t.transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        // Flip the direction of the smallest singular value.
        let k = svd.singular_values.imin();
        let mut flip = Matrix3::identity();
        flip[(k, k)] = -1.0;
        r = v * flip * u.transpose();
    }
    Ok(RigidTransform { rotation: r, translation: cd - r * cs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the rms improves by less than this.
    pub tolerance: f64,
    /// Use this fraction of the query points (evenly strided).
    pub subsample: Option<f64>,
    /// Pairs farther than this multiple of the median pair distance are
    /// ignored when fitting.
    pub trim_factor: f64,
    /// Also start from principal-axes alignments.
    pub multi_start: bool,
    /// Principal-axes starts rotating further than this (radians) are skipped.
    pub max_start_angle: f64,
    /// With `multi_start`, also start from the centroid alignment turned by
    /// plus and minus this angle (radians) about each coordinate axis. Zero
    /// disables these starts.
    pub axis_start_angle: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            subsample: None,
            trim_factor: 3.0,
            multi_start: true,
            max_start_angle: core::f64::consts::FRAC_PI_3,
            axis_start_angle: 10f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the query onto the model.
    pub transform: RigidTransform,
    pub rms: f64,
    pub iterations: usize,
    /// Rms before the first step and after each accepted step.
    pub rms_history: Vec<f64>,
}

struct Pairing {
    model_index: Vec<usize>,
    dist2: Vec<f64>,
    rms: f64,
}

fn pair(tree: &KdTree<3>, query: &[[f64; 3]], t: &RigidTransform) -> Pairing {
    let mut model_index = Vec::with_capacity(query.len());
    let mut dist2 = Vec::with_capacity(query.len());
    for &q in query {
        let nb = tree.nearest(&t.apply(q)).expect("model tree is not empty");
        model_index.push(nb.index);
        dist2.push(nb.dist2);
    }
    let rms = math::sqrt(dist2.iter().sum::<f64>() / query.len() as f64);
    Pairing { model_index, dist2, rms }
}

/// Rigidly aligns `query` to `model`.
///
/// ICP is run from the identity, from the centroid alignment and (with
/// `multi_start`) from the principal-axes alignments that rotate by at most
/// [`IcpConfig::max_start_angle`] and from centroid alignments turned about
/// each axis by [`IcpConfig::axis_start_angle`]; the run with the lowest final rms wins,
/// earlier starts winning ties. Each run alternates nearest-point pairing
/// and closed-form fitting, and only takes steps that do not increase the
/// rms over all query points, so its rms history is non-increasing.
pub fn icp_align(query: &PointCloud3D, model: &PointCloud3D, cfg: &IcpConfig) -> Result<IcpResult> {
    query.check_registrable()?;
    model.check_registrable()?;
    let pts: Vec<[f64; 3]> = match cfg.subsample {
        Some(f) if f > 0.0 && f < 1.0 => {
            let stride = math::round(1.0 / f).max(1.0) as usize;
            query.points.iter().step_by(stride).copied().collect()
        }
        _ => query.points.clone(),
    };
    let tree = KdTree::new(model.points.clone());

    let cq = query.centroid().expect("non-empty");
    let cm = model.centroid().expect("non-empty");
    let mut starts =
        vec![RigidTransform::identity(), RigidTransform::translation([cm[0] - cq[0], cm[1] - cq[1], cm[2] - cq[2]])];
    if cfg.multi_start {
        starts.extend(
            principal_axes_starts(&query.points, &model.points)
                .into_iter()
                .filter(|t| t.angle() <= cfg.max_start_angle),
        );
        if cfg.axis_start_angle > 0.0 {
            let to_origin = RigidTransform::translation([-cq[0], -cq[1], -cq[2]]);
            for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
                for a in [cfg.axis_start_angle, -cfg.axis_start_angle] {
                    starts.push(RigidTransform::from_axis_angle(axis, a, cm).compose(&to_origin));
                }
            }
        }
    }
    let mut best: Option<IcpResult> = None;
    let mut first_err = None;
    for start in starts {
        match refine(&tree, &model.points, &pts, start, cfg) {
            Ok(res) => {
                if best.as_ref().is_none_or(|b| res.rms < b.rms) {
                    best = Some(res);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}

fn refine(
    tree: &KdTree<3>,
    model: &[[f64; 3]],
    pts: &[[f64; 3]],
    start: RigidTransform,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    let mut t = start;
    let mut cur = pair(tree, pts, &t);
    let mut history = vec![cur.rms];
    let mut iterations = 0;

    while iterations < cfg.max_iterations && cur.rms > 0.0 {
        if pts.len() > 1 && cur.model_index.iter().all(|&i| i == cur.model_index[0]) {
            return Err(Error::DegenerateGeometry("every query point pairs with one model point".into()));
        }
        let mut sorted = cur.dist2.clone();
        sorted.sort_by(f64::total_cmp);
        let median = math::sqrt(sorted[sorted.len() / 2]);
        let limit = cfg.trim_factor * median;
        let limit2 = limit * limit;
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        for (k, &q) in pts.iter().enumerate() {
            if cur.dist2[k] <= limit2 {
                src.push(t.apply(q));
                dst.push(model[cur.model_index[k]]);
            }
        }
        if src.is_empty() {
            break;
        }
        let step = fit_rigid(&src, &dst)?;
        let cand = step.compose(&t);
        let next = pair(tree, pts, &cand);
        iterations += 1;
        if next.rms > cur.rms {
            break;
        }
        let gain = cur.rms - next.rms;
        t = cand;
        cur = next;
        history.push(cur.rms);
        if gain < cfg.tolerance {
            break;
        }
    }
    Ok(IcpResult { transform: t, rms: cur.rms, iterations, rms_history: history })
}

/// Transforms mapping the principal axes of `query` onto those of `model`,
/// one per proper sign choice. Empty when either cloud is too small or has
/// repeated principal variances.
fn principal_axes_starts(query: &[[f64; 3]], model: &[[f64; 3]]) -> Vec<RigidTransform> {
    fn axes(pts: &[[f64; 3]]) -> Option<(Vector3<f64>, Matrix3<f64>)> {
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let c = pts.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p)) / n;
        let mut cov = Matrix3::zeros();
        for p in pts {
            let d = Vector3::from(*p) - c;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let ev: [f64; 3] = [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]];
        let scale = ev[0].abs().max(f64::MIN_POSITIVE);
        if (ev[0] - ev[1]) / scale < 1e-6 || (ev[1] - ev[2]) / scale < 1e-6 {
            return None;
        }
        let m = Matrix3::from_columns(&[
            eig.eigenvectors.column(order[0]).into_owned(),
            eig.eigenvectors.column(order[1]).into_owned(),
            eig.eigenvectors.column(order[2]).into_owned(),
        ]);
        Some((c, m))
    }
    let (Some((cq, uq)), Some((cm, um))) = (axes(query), axes(model)) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for signs in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        let s = Matrix3::from_diagonal(&Vector3::from(signs));
        let mut r = um * s * uq.transpose();
        if r.determinant() < 0.0 {
            r = um * s * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)) * uq.transpose();
        }
        out.push(RigidTransform { rotation: r, translation: cm - r * cq });
    }
    out
}

/// A uniform `(x, y)` raster: `x = x0 + c dx`, `y = y0 + r dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    pub rows: usize,
    pub cols: usize,
    pub origin: (f64, f64),
    pub spacing: (f64, f64),
}

impl GridFrame {
    /// Fractional `(row, col)` of a point.
    pub fn cell_of(&self, x: f64, y: f64) -> (f64, f64) {
        ((y - self.origin.1) / self.spacing.1, (x - self.origin.0) / self.spacing.0)
    }

    pub fn center(&self, r: usize, c: usize) -> (f64, f64) {
        (self.origin.0 + c as f64 * self.spacing.0, self.origin.1 + r as f64 * self.spacing.1)
    }
}

/// AFM raster size; `extent = (x0, y0, x1, y1)` defaults to the bounding box
/// of the seed face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfmGridSpec {
    pub rows: usize,
    pub cols: usize,
    pub extent: Option<(f64, f64, f64, f64)>,
}

impl Default for AfmGridSpec {
    fn default() -> Self {
        Self { rows: 64, cols: 64, extent: None }
    }
}

impl AfmGridSpec {
    fn frame(&self, seed: &PointCloud3D) -> Result<GridFrame> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::config("AFM grid needs at least 2x2 cells"));
        }
        let (x0, y0, x1, y1) = match self.extent {
            Some(e) => e,
            None => seed
                .points
                .iter()
                .fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b, c, d), p| {
                    (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1]))
                }),
        };
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::DegenerateGeometry("AFM extent has zero area".into()));
        }
        Ok(GridFrame {
            rows: self.rows,
            cols: self.cols,
            origin: (x0, y0),
            spacing: ((x1 - x0) / (self.cols - 1) as f64, (y1 - y0) / (self.rows - 1) as f64),
        })
    }
}

/// Depth of the nearest point in `(x, y)` for every cell of `frame`, if that
/// point lies within 1.5 cells.
pub fn resample_cloud(cloud: &PointCloud3D, frame: &GridFrame) -> (Vec<f64>, Vec<bool>) {
    let n = frame.rows * frame.cols;
    let mut z = vec![0.0; n];
    let mut valid = vec![false; n];
    if cloud.is_empty() {
        return (z, valid);
    }
    let tree = KdTree::new(cloud.points.iter().map(|p| [p[0], p[1]]).collect());
    let reach = 1.5 * frame.spacing.0.abs().max(frame.spacing.1.abs());
    let reach2 = reach * reach;
    for r in 0..frame.rows {
        for c in 0..frame.cols {
            let (x, y) = frame.center(r, c);
            if let Some(nb) = tree.nearest(&[x, y]) {
                if nb.dist2 <= reach2 {
                    z[r * frame.cols + c] = cloud.points[nb.index][2];
                    valid[r * frame.cols + c] = true;
                }
            }
        }
    }
    (z, valid)
}

/// Per-cell mean depth over aligned faces, valid where at least half of the
/// faces contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageFaceModel {
    pub grid: ScanGrid,
    pub support_count: Vec<usize>,
    pub n_faces: usize,
}

impl AverageFaceModel {
    pub fn frame(&self) -> GridFrame {
        GridFrame {
            rows: self.grid.rows(),
            cols: self.grid.cols(),
            origin: self.grid.origin(),
            spacing: self.grid.spacing(),
        }
    }

    pub fn to_cloud(&self) -> Result<PointCloud3D> {
        self.grid.to_cloud()
    }
}

/// Averages faces that are already in a common frame.
pub fn afm_from_aligned(aligned: &[PointCloud3D], frame: &GridFrame) -> Result<AverageFaceModel> {
    if aligned.is_empty() {
        return Err(Error::contract("AFM needs at least one face"));
    }
    let n = frame.rows * frame.cols;
    // Running means, so identical inputs average to themselves exactly.
    let mut z = vec![0.0; n];
    let mut count = vec![0usize; n];
    for face in aligned {
        let (depth, valid) = resample_cloud(face, frame);
        for k in 0..n {
            if valid[k] {
                count[k] += 1;
                z[k] += (depth[k] - z[k]) / count[k] as f64;
            }
        }
    }
    let quorum = aligned.len().div_ceil(2);
    let valid: Vec<bool> = count.iter().map(|&c| c >= quorum && c > 0).collect();
    let grid = ScanGrid::from_depth(frame.rows, frame.cols, frame.origin, frame.spacing, z, valid)?;
    if grid.valid_count() == 0 {
        return Err(Error::EmptyFace("average face model".into()));
    }
    Ok(AverageFaceModel { grid, support_count: count, n_faces: aligned.len() })
}

fn wrap(scan_id: &str, e: Error) -> Error {
    Error::Registration { scan_id: scan_id.into(), source: Box::new(e) }
}

/// ICP of every face onto `faces[seed_index]`.
pub fn coarse_align(
    faces: &[PointCloud3D],
    seed_index: usize,
    icp: &IcpConfig,
) -> Result<Vec<(PointCloud3D, IcpResult)>> {
    let seed = faces.get(seed_index).ok_or_else(|| Error::config("seed index out of range"))?;
    faces
        .iter()
        .map(|f| {
            let res = icp_align(f, seed, icp).map_err(|e| wrap(&f.scan_id, e))?;
            Ok((res.transform.apply_cloud(f), res))
        })
        .collect()
}

/// Coarse alignment to the seed face followed by averaging.
pub fn build_afm(
    faces: &[PointCloud3D],
    seed_index: usize,
    spec: &AfmGridSpec,
    icp: &IcpConfig,
) -> Result<AverageFaceModel> {
    if faces.len() < 2 {
        return Err(Error::contract("AFM needs at least two faces"));
    }
    let aligned: Vec<PointCloud3D> = coarse_align(faces, seed_index, icp)?.into_iter().map(|(c, _)| c).collect();
    afm_from_aligned(&aligned, &spec.frame(&aligned[seed_index])?)
}

/// Axis-aligned ellipse in AFM cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropEllipse {
    /// `(row, col)`.
    pub center: (f64, f64),
    /// `(a_row, a_col)` in cells.
    pub semi_axes: (f64, f64),
    pub frame: GridFrame,
}

impl CropEllipse {
    /// Whether fractional cell `(r, c)` lies inside.
    pub fn contains(&self, r: f64, c: f64) -> bool {
        let u = (r - self.center.0) / self.semi_axes.0;
        let v = (c - self.center.1) / self.semi_axes.1;
        u * u + v * v <= 1.0
    }

    /// Membership of a point through its nearest AFM cell.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        let (r, c) = self.frame.cell_of(x, y);
        self.contains(math::round(r), math::round(c))
    }
}

/// Smallest ellipse with the valid region's row/column spread ratio that
/// holds at least `coverage` of the valid AFM cells.
pub fn fit_crop_ellipse(afm: &AverageFaceModel, coverage: f64) -> Result<CropEllipse> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config("crop coverage must lie in (0, 1]"));
    }
    let g = &afm.grid;
    let cells: Vec<(f64, f64)> = (0..g.rows())
        .flat_map(|r| (0..g.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| g.is_valid(r, c))
        .map(|(r, c)| (r as f64, c as f64))
        .collect();
    if cells.is_empty() {
        return Err(Error::EmptyFace("average face model".into()));
    }
    let n = cells.len() as f64;
    let cr = cells.iter().map(|p| p.0).sum::<f64>() / n;
    let cc = cells.iter().map(|p| p.1).sum::<f64>() / n;
    let sd = |f: &dyn Fn(&(f64, f64)) -> f64, m: f64| {
        math::sqrt(cells.iter().map(|p| (f(p) - m) * (f(p) - m)).sum::<f64>() / n)
    };
    // A single row or column has zero spread; treat it as half a cell.
    let sr = sd(&|p| p.0, cr).max(0.5);
    let sc = sd(&|p| p.1, cc).max(0.5);
    let mut rho: Vec<f64> = cells
        .iter()
        .map(|&(r, c)| {
            let (u, v) = ((r - cr) / sr, (c - cc) / sc);
            math::sqrt(u * u + v * v)
        })
        .collect();
    rho.sort_by(f64::total_cmp);
    let k = (math::ceil(coverage * n) as usize).clamp(1, cells.len());
    // Slight inflation keeps the boundary cell inside despite rounding.
    let s = rho[k - 1] * (1.0 + 1e-12);
    Ok(CropEllipse { center: (cr, cc), semi_axes: ((s * sr).max(1.0), (s * sc).max(1.0)), frame: afm.frame() })
}

pub fn crop_cloud(cloud: &PointCloud3D, ellipse: &CropEllipse) -> Result<PointCloud3D> {
    let points: Vec<[f64; 3]> = cloud.points.iter().copied().filter(|p| ellipse.contains_xy(p[0], p[1])).collect();
    if points.is_empty() {
        return Err(Error::EmptyFace(cloud.scan_id.clone()));
    }
    Ok(PointCloud3D { points, subject_id: cloud.subject_id.clone(), scan_id: cloud.scan_id.clone() })
}

pub fn crop_grid(scan: &ScanGrid, ellipse: &CropEllipse) -> Result<ScanGrid> {
    let (x, y) = (scan.x(), scan.y());
    let mask: Vec<bool> = scan.mask().iter().enumerate().map(|(k, &v)| v && ellipse.contains_xy(x[k], y[k])).collect();
    let out = scan.with_mask(mask)?;
    if out.valid_count() == 0 {
        return Err(Error::EmptyFace(scan.scan_id.clone()));
    }
    Ok(out)
}

/// Either kind of face accepted by [`apply_crop`].
#[derive(Debug, Clone, PartialEq)]
pub enum Face {
    Grid(ScanGrid),
    Cloud(PointCloud3D),
}

pub fn apply_crop(face: &Face, ellipse: &CropEllipse) -> Result<Face> {
    Ok(match face {
        Face::Grid(g) => Face::Grid(crop_grid(g, ellipse)?),
        Face::Cloud(c) => Face::Cloud(crop_cloud(c, ellipse)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    pub coarse_icp: IcpConfig,
    pub fine_icp: IcpConfig,
    pub seed_index: usize,
    pub afm_grid: AfmGridSpec,
    pub crop_coverage: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            coarse_icp: IcpConfig::default(),
            fine_icp: IcpConfig::default(),
            seed_index: 0,
            afm_grid: AfmGridSpec::default(),
            crop_coverage: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registered {
    /// Cropped faces in the AFM frame, in input order.
    pub faces: Vec<PointCloud3D>,
    pub afm: AverageFaceModel,
    pub ellipse: CropEllipse,
    /// Full input-to-AFM transform per face.
    pub transforms: Vec<RigidTransform>,
    pub coarse_rms: Vec<f64>,
    pub fine_rms: Vec<f64>,
}

/// Coarse ICP to the seed face, AFM, elliptic crop, then fine ICP of each
/// cropped face to the (cropped) AFM cloud.
pub fn register_all(faces: &[PointCloud3D], cfg: &RegistrationConfig) -> Result<Registered> {
    if faces.len() < 2 {
        return Err(Error::contract("registration needs at least two faces"));
    }
    let coarse = coarse_align(faces, cfg.seed_index, &cfg.coarse_icp)?;
    let aligned: Vec<PointCloud3D> = coarse.iter().map(|(c, _)| c.clone()).collect();
    let frame = cfg.afm_grid.frame(&aligned[cfg.seed_index])?;
    let afm = afm_from_aligned(&aligned, &frame)?;
    let ellipse = fit_crop_ellipse(&afm, cfg.crop_coverage)?;
    let reference = crop_cloud(&afm.to_cloud()?, &ellipse)?;

    let mut out = Vec::with_capacity(faces.len());
    let mut transforms = Vec::with_capacity(faces.len());
    let mut fine_rms = Vec::with_capacity(faces.len());
    for (face, res) in aligned.iter().zip(&coarse) {
        let cropped = crop_cloud(face, &ellipse).map_err(|e| wrap(&face.scan_id, e))?;
        let fine = icp_align(&cropped, &reference, &cfg.fine_icp).map_err(|e| wrap(&face.scan_id, e))?;
        out.push(fine.transform.apply_cloud(&cropped));
        transforms.push(fine.transform.compose(&res.1.transform));
        fine_rms.push(fine.rms);
    }
    Ok(Registered {
        faces: out,
        afm,
        ellipse,
        transforms,
        coarse_rms: coarse.iter().map(|(_, r)| r.rms).collect(),
        fine_rms,
    })
}

/// Depth image of a registered face on the AFM raster; cells the face does
/// not reach fall back to the AFM depth, and cells outside both to zero.
pub fn depth_image(face: &PointCloud3D, afm: &AverageFaceModel) -> Vec<f64> {
    let (z, valid) = resample_cloud(face, &afm.frame());
    let g = &afm.grid;
    (0..z.len())
        .map(|k| {
            if valid[k] {
                z[k]
            } else if g.mask()[k] {
                g.z_raw()[k]
            } else {
                0.0
            }
        })
        .collect()
}
