//! Pipeline configuration: a TOML file with one section per module. Every
//! key is optional; command-line flags override the file.

use std::path::Path;

use serde::Deserialize;
use sphface_core::dictionary::{Criterion, DictionarySpec};
use sphface_core::extraction::ExtractionConfig;
use sphface_core::pipeline::PreprocessConfig;
use sphface_core::pursuit::EncodeMode;
use sphface_core::recognition::{EvalConfig, Method, PipelineParams, RankMode, SsmpTraining, VirtualPolicy};
use sphface_core::registration::{AfmGridSpec, IcpConfig, RegistrationConfig};
use sphface_core::sphere::{ResampleConfig, SphereGrid};
use sphface_core::synth::SynthParams;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthSection,
    pub extraction: ExtractionSection,
    pub registration: RegistrationSection,
    pub sphere: SphereSection,
    pub dictionary: DictionarySection,
    pub ssmp: SsmpSection,
    pub pca: PcaSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            synth: SynthSection::default(),
            extraction: ExtractionSection::default(),
            registration: RegistrationSection::default(),
            sphere: SphereSection::default(),
            dictionary: DictionarySection::default(),
            ssmp: SsmpSection::default(),
            pca: PcaSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub grid: usize,
    pub extent: f64,
    pub noise: f64,
    pub pose_deg: f64,
    pub translation: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let p = SynthParams::default();
        Self { grid: p.grid, extent: p.extent, noise: p.noise, pose_deg: p.pose_deg, translation: p.translation }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    pub window: Option<usize>,
    pub curvature_floor: f64,
    pub histogram_bins: usize,
    pub min_survivors: f64,
    pub min_separability: f64,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        let e = ExtractionConfig::default();
        Self {
            window: e.window,
            curvature_floor: e.curvature_floor,
            histogram_bins: e.histogram_bins,
            min_survivors: e.min_survivors,
            min_separability: e.min_separability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationSection {
    pub icp_max_iter: usize,
    pub icp_tol: f64,
    pub trim_factor: f64,
    pub multi_start: bool,
    /// Extra ICP starts turned by this many degrees about each axis; 0 disables.
    pub axis_start_deg: f64,
    /// AFM raster `[rows, cols]`.
    pub afm_grid: [usize; 2],
    pub crop_coverage: f64,
    pub seed_index: usize,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let r = RegistrationConfig::default();
        Self {
            icp_max_iter: r.fine_icp.max_iterations,
            icp_tol: r.fine_icp.tolerance,
            trim_factor: r.fine_icp.trim_factor,
            multi_start: r.fine_icp.multi_start,
            axis_start_deg: r.fine_icp.axis_start_angle.to_degrees(),
            afm_grid: [r.afm_grid.rows, r.afm_grid.cols],
            crop_coverage: r.crop_coverage,
            seed_index: r.seed_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSection {
    pub n_theta: usize,
    pub n_phi: usize,
    pub k: usize,
    pub cutoff_steps: f64,
    pub center_depth_factor: f64,
}

impl Default for SphereSection {
    fn default() -> Self {
        let p = PreprocessConfig::default();
        Self {
            n_theta: p.sphere.n_theta,
            n_phi: p.sphere.n_phi,
            k: p.resample.k,
            cutoff_steps: p.resample.cutoff_steps,
            center_depth_factor: p.center_depth_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DictPreset {
    Desk,
    Full,
}

/// A preset plus per-field overrides. The lattice lives on the sphere grid
/// of the `[sphere]` section.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySection {
    pub preset: DictPreset,
    pub n_pos: Option<usize>,
    pub n_rot: Option<usize>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
    pub scales_per_octave: Option<usize>,
    pub collapse_isotropic: Option<bool>,
}

impl Default for DictionarySection {
    fn default() -> Self {
        Self {
            preset: DictPreset::Desk,
            n_pos: None,
            n_rot: None,
            scale_min: None,
            scale_max: None,
            scales_per_octave: None,
            collapse_isotropic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionName {
    SumSquares,
    SumAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodeName {
    Mp,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingName {
    OnePerSubject,
    All,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsmpSection {
    pub num_atoms: usize,
    pub criterion: CriterionName,
    pub encode: EncodeName,
    pub training: TrainingName,
}

impl Default for SsmpSection {
    fn default() -> Self {
        Self {
            num_atoms: 50,
            criterion: CriterionName::SumSquares,
            encode: EncodeName::Mp,
            training: TrainingName::OnePerSubject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    /// Defaults to `ssmp.num_atoms`.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RankModeName {
    DistinctLabels,
    Samples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VirtualName {
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Training scans per subject (`T_i`).
    pub i: usize,
    pub n_repeats: usize,
    pub rank_max: Option<usize>,
    pub rank_mode: RankModeName,
    #[serde(rename = "virtual")]
    pub virtual_faces: VirtualName,
    pub virtual_shift: usize,
    pub gallery_as_test: bool,
    pub methods: Vec<String>,
    pub recognition: bool,
    pub verification: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            i: 2,
            n_repeats: 10,
            rank_max: None,
            rank_mode: RankModeName::DistinctLabels,
            virtual_faces: VirtualName::Auto,
            virtual_shift: 1,
            gallery_as_test: false,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            recognition: true,
            verification: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::io::read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn synth_params(&self) -> SynthParams {
        let s = &self.synth;
        SynthParams { grid: s.grid, extent: s.extent, noise: s.noise, pose_deg: s.pose_deg, translation: s.translation }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        let e = &self.extraction;
        let r = &self.registration;
        let s = &self.sphere;
        let icp = IcpConfig {
            max_iterations: r.icp_max_iter,
            tolerance: r.icp_tol,
            trim_factor: r.trim_factor,
            multi_start: r.multi_start,
            axis_start_angle: r.axis_start_deg.to_radians(),
            ..IcpConfig::default()
        };
        PreprocessConfig {
            extraction: ExtractionConfig {
                window: e.window,
                curvature_floor: e.curvature_floor,
                histogram_bins: e.histogram_bins,
                min_survivors: e.min_survivors,
                min_separability: e.min_separability,
            },
            registration: RegistrationConfig {
                coarse_icp: icp,
                fine_icp: icp,
                seed_index: r.seed_index,
                afm_grid: AfmGridSpec { rows: r.afm_grid[0], cols: r.afm_grid[1], extent: None },
                crop_coverage: r.crop_coverage,
            },
            sphere: SphereGrid { n_theta: s.n_theta, n_phi: s.n_phi },
            resample: ResampleConfig { k: s.k, cutoff_steps: s.cutoff_steps },
            center_depth_factor: s.center_depth_factor,
        }
    }

    pub fn dictionary(&self) -> DictionarySpec {
        let d = &self.dictionary;
        let base = match d.preset {
            DictPreset::Desk => DictionarySpec::desk(),
            DictPreset::Full => DictionarySpec::full(),
        };
        DictionarySpec {
            n_pos: d.n_pos.unwrap_or(base.n_pos),
            n_rot: d.n_rot.unwrap_or(base.n_rot),
            scale_min: d.scale_min.unwrap_or(base.scale_min),
            scale_max: d.scale_max.unwrap_or(base.scale_max),
            scales_per_octave: d.scales_per_octave.unwrap_or(base.scales_per_octave),
            grid: SphereGrid { n_theta: self.sphere.n_theta, n_phi: self.sphere.n_phi },
            collapse_isotropic: d.collapse_isotropic.unwrap_or(base.collapse_isotropic),
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in &self.eval.methods {
            let m: Method = name.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no evaluation method selected".into()));
        }
        Ok(out)
    }

    pub fn params(&self) -> PipelineParams {
        let s = &self.ssmp;
        PipelineParams {
            dictionary: self.dictionary(),
            num_atoms: s.num_atoms,
            pca_dim: self.pca.dim,
            encode_mode: match s.encode {
                EncodeName::Mp => EncodeMode::Mp,
                EncodeName::LeastSquares => EncodeMode::LeastSquares,
            },
            criterion: match s.criterion {
                CriterionName::SumSquares => Criterion::SumSquares,
                CriterionName::SumAbs => Criterion::SumAbs,
            },
            ssmp_training: match s.training {
                TrainingName::OnePerSubject => SsmpTraining::OnePerSubject,
                TrainingName::All => SsmpTraining::AllTraining,
            },
            virtual_shift: self.eval.virtual_shift,
            fixed: Default::default(),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            i: e.i,
            n_repeats: e.n_repeats,
            rng_seed: self.seed,
            rank_max: e.rank_max,
            rank_mode: match e.rank_mode {
                RankModeName::DistinctLabels => RankMode::DistinctLabels,
                RankModeName::Samples => RankMode::Samples,
            },
            virtual_policy: match e.virtual_faces {
                VirtualName::Auto => VirtualPolicy::Auto,
                VirtualName::Always => VirtualPolicy::Always,
                VirtualName::Never => VirtualPolicy::Never,
            },
            gallery_as_test: e.gallery_as_test,
            recognition: e.recognition,
            verification: e.verification,
        }
    }

    /// Checks the fields the selected methods depend on.
    pub fn validate(&self) -> Result<()> {
        let methods = self.methods()?;
        if methods.iter().any(Method::needs_support) {
            if self.ssmp.num_atoms == 0 {
                return Err(Error::Config("ssmp.num_atoms (K) must be >= 1 for ssmp methods".into()));
            }
            self.dictionary().validate()?;
        }
        if self.pca.dim == Some(0) {
            return Err(Error::Config("pca.dim must be >= 1".into()));
        }
        if self.eval.i == 0 || self.eval.n_repeats == 0 {
            return Err(Error::Config("eval.i and eval.n_repeats must be >= 1".into()));
        }
        if !(1..=2).contains(&self.eval.virtual_shift) {
            return Err(Error::Config("eval.virtual_shift must be 1 or 2".into()));
        }
        if !(self.registration.crop_coverage > 0.0 && self.registration.crop_coverage <= 1.0) {
            return Err(Error::Config("registration.crop_coverage must lie in (0, 1]".into()));
        }
        SphereGrid::new(self.sphere.n_theta, self.sphere.n_phi)?;
        Ok(())
    }
}
