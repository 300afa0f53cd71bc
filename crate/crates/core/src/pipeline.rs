//! Scan-to-signal preprocessing: extraction, joint registration and
//! spherical projection about a center shared by every face.

use alloc::vec::Vec;

use crate::error::Result;
use crate::extraction::{extract_face, ExtractionConfig, ExtractionReport};
use crate::registration::{crop_cloud, depth_image, register_all, AverageFaceModel, Registered, RegistrationConfig};
use crate::scan::{PointCloud3D, ScanGrid};
use crate::sphere::{
    projection_center, resample_to_grid, to_spherical_coords, ResampleConfig, SphereGrid, SphericalSignal,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub extraction: ExtractionConfig,
    pub registration: RegistrationConfig,
    pub sphere: SphereGrid,
    pub resample: ResampleConfig,
    /// Projection center offset behind the AFM centroid, as a fraction of
    /// the AFM depth extent.
    pub center_depth_factor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            extraction: ExtractionConfig::default(),
            registration: RegistrationConfig::default(),
            sphere: SphereGrid { n_theta: 64, n_phi: 64 },
            resample: ResampleConfig::default(),
            center_depth_factor: 0.5,
        }
    }
}

/// A registered face ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFace {
    pub signal: SphericalSignal,
    /// Depth image on the AFM raster.
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub registered: Registered,
    pub center: [f64; 3],
    /// The cropped AFM on the sphere; its coverage is the common support.
    pub afm_signal: SphericalSignal,
    pub faces: Vec<ProjectedFace>,
}

/// Extraction of one scan, returned as a cloud with the scan's ids.
pub fn extract_cloud(scan: &ScanGrid, cfg: &ExtractionConfig) -> Result<(PointCloud3D, ExtractionReport)> {
    let (face, report) = extract_face(scan, cfg)?;
    Ok((face.to_cloud()?, report))
}

/// The shared projection center of an AFM.
pub fn afm_center(afm: &AverageFaceModel, depth_factor: f64) -> Result<[f64; 3]> {
    projection_center(&afm.to_cloud()?, depth_factor)
}

/// Spherical signal of one registered face.
pub fn project_face(face: &PointCloud3D, center: [f64; 3], cfg: &PreprocessConfig) -> Result<SphericalSignal> {
    resample_to_grid(&to_spherical_coords(face, center)?, cfg.sphere, cfg.resample)
}

/// Puts `signal` on the support of `reference`: cells the face misses take
/// the reference value and cells outside the reference become zero. Without
/// this, per-scan jitter of the coverage rim (r of order 100 against zero)
/// swamps the facial relief in every distance.
pub fn conform_to(signal: &SphericalSignal, reference: &SphericalSignal) -> Result<SphericalSignal> {
    let values = (0..reference.values().len())
        .map(|k| match (reference.coverage()[k], signal.coverage()[k]) {
            (false, _) => 0.0,
            (true, true) => signal.values()[k],
            (true, false) => reference.values()[k],
        })
        .collect();
    SphericalSignal::new(signal.grid(), values, reference.coverage().to_vec())
}

/// Projection of the elliptically cropped AFM.
pub fn afm_signal(registered: &Registered, center: [f64; 3], cfg: &PreprocessConfig) -> Result<SphericalSignal> {
    project_face(&crop_cloud(&registered.afm.to_cloud()?, &registered.ellipse)?, center, cfg)
}

/// Registers extracted faces jointly and projects each of them.
pub fn register_and_project(faces: &[PointCloud3D], cfg: &PreprocessConfig) -> Result<Projected> {
    let registered = register_all(faces, &cfg.registration)?;
    let center = afm_center(&registered.afm, cfg.center_depth_factor)?;
    let reference = afm_signal(&registered, center, cfg)?;
    let faces = registered
        .faces
        .iter()
        .map(|f| {
            let signal = conform_to(&project_face(f, center, cfg)?, &reference)?;
            Ok(ProjectedFace { signal, depth: depth_image(f, &registered.afm) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Projected { registered, center, afm_signal: reference, faces })
}

/// Whole pipeline on raw scans; any failing scan fails the batch.
pub fn preprocess(scans: &[ScanGrid], cfg: &PreprocessConfig) -> Result<Projected> {
    let clouds = scans.iter().map(|s| extract_cloud(s, &cfg.extraction).map(|(c, _)| c)).collect::<Result<Vec<_>>>()?;
    register_and_project(&clouds, cfg)
}
