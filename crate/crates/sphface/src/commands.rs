//! The four pipeline stages. They communicate only through files, so any
//! stage can be rerun from its inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use sphface_core::dictionary::AtomLattice;
use sphface_core::extraction::ExtractionReport;
use sphface_core::pca::{pca_encode, pca_fit};
use sphface_core::pipeline::{afm_center, afm_signal, conform_to, extract_cloud, project_face};
use sphface_core::pursuit::{encode, ssmp_select_in, SsmpConfig};
use sphface_core::recognition::{
    evaluate_repeat, lattice_for, lda_fit, repeat_rng, split_counts, split_subjects, EvalConfig, EvalReport, Method,
    PipelineParams, Sample,
};
use sphface_core::registration::{depth_image, register_all, Face};
use sphface_core::sphere::SphericalSignal;
use sphface_core::synth::synth_dataset;
use sphface_core::PointCloud3D;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{self, write_atomic, ScanFormat};
use crate::manifest::{self, ManifestEntry, SignalEntry};
use crate::report::write_reports;
use crate::textfmt;

pub const MANIFEST: &str = "manifest.csv";
pub const SIGNAL_INDEX: &str = "signals.csv";
pub const AFM_FILE: &str = "afm.txt";
pub const AFM_SIGNAL_FILE: &str = "afm.sig";
pub const PREPROCESS_LOG: &str = "preprocess.log";
pub const SUPPORT_FILE: &str = "support.txt";
pub const PCA_FILE: &str = "pca.txt";
pub const LDA_FILE: &str = "lda.txt";

/// Keeps ids usable as file names.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub manifest: PathBuf,
    pub scans: usize,
}

/// Writes `n_subjects x scans_per_subject` synthetic scans under
/// `out/scans/` and a manifest `out/manifest.csv`.
pub fn synth(cfg: &PipelineConfig, n_subjects: usize, scans_per_subject: usize, out: &Path) -> Result<SynthOutcome> {
    if n_subjects == 0 || scans_per_subject == 0 {
        return Err(Error::Config("need at least one subject and one scan per subject".into()));
    }
    if scans_per_subject == 1 {
        warn!("one scan per subject: every T_i split (i >= 1) is infeasible for this dataset");
    }
    let scans = synth_dataset(n_subjects, scans_per_subject, cfg.seed, &cfg.synth_params())?;
    let entries: Vec<ManifestEntry> = scans
        .par_iter()
        .map(|s| {
            let rel = PathBuf::from("scans").join(format!("{}.txt", file_stem(&s.scan_id)));
            io::save_scan(&out.join(&rel), &Face::Grid(s.clone()))?;
            Ok(ManifestEntry { path: rel, subject_id: s.subject_id.clone(), scan_id: s.scan_id.clone() })
        })
        .collect::<Result<_>>()?;
    let manifest = out.join(MANIFEST);
    manifest::write_manifest(&manifest, &entries)?;
    info!("wrote {} scans and {}", entries.len(), manifest.display());
    Ok(SynthOutcome { manifest, scans: entries.len() })
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessOutcome {
    /// Scan ids written, in manifest order.
    pub processed: Vec<String>,
    /// `(scan_id, error)` for every scan that was skipped.
    pub failures: Vec<(String, String)>,
}

fn load_face(entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<(PointCloud3D, Option<ExtractionReport>)> {
    match io::load_scan(&entry.path, ScanFormat::from_path(&entry.path))? {
        Face::Grid(g) => {
            let g = g.with_ids(entry.subject_id.clone(), entry.scan_id.clone());
            let (cloud, report) = extract_cloud(&g, &cfg.preprocess().extraction)?;
            Ok((cloud, Some(report)))
        }
        // Free clouds are taken as already extracted.
        Face::Cloud(c) => {
            let c = c.with_ids(entry.subject_id.clone(), entry.scan_id.clone());
            c.check_registrable()?;
            Ok((c, None))
        }
    }
}

/// Extraction, joint registration and spherical projection of every scan in
/// `manifest`. A scan that fails to load, extract or register is skipped and
/// reported; the others are still written.
pub fn preprocess(
    cfg: &PipelineConfig,
    manifest: &Path,
    out: &Path,
    extraction_report: Option<&Path>,
) -> Result<PreprocessOutcome> {
    cfg.validate()?;
    let pcfg = cfg.preprocess();
    let entries = manifest::read_manifest(manifest)?;
    let loaded: Vec<_> = entries.par_iter().map(|e| load_face(e, cfg)).collect();

    let mut outcome = PreprocessOutcome::default();
    let mut faces = Vec::new();
    let mut reports = Vec::new();
    for (e, r) in entries.iter().zip(loaded) {
        match r {
            Ok((cloud, rep)) => {
                if let Some(rep) = rep {
                    reports.push((e.scan_id.clone(), rep));
                }
                faces.push((e.clone(), cloud));
            }
            Err(err) => {
                warn!("{}: {err}", e.scan_id);
                outcome.failures.push((e.scan_id.clone(), err.to_string()));
            }
        }
    }

    if let Some(path) = extraction_report {
        let mut text = String::from(
            "scan_id,left_col,right_col,depth_cutoff,cells_removed_lateral,cells_removed_depth,cells_removed_morph\n",
        );
        for (id, r) in &reports {
            let _ = writeln!(
                text,
                "{id},{},{},{},{},{},{}",
                r.left_col,
                r.right_col,
                r.depth_cutoff,
                r.cells_removed_lateral,
                r.cells_removed_depth,
                r.cells_removed_morph
            );
        }
        write_atomic(path, text.as_bytes())?;
    }

    // Registration is joint, so a face that breaks it is dropped and the
    // rest registered again.
    let registered = loop {
        if faces.len() < 2 {
            return Err(Error::Config(format!(
                "registration needs at least two usable scans, {} left ({} failed)",
                faces.len(),
                outcome.failures.len()
            )));
        }
        let clouds: Vec<PointCloud3D> = faces.iter().map(|(_, c)| c.clone()).collect();
        match register_all(&clouds, &pcfg.registration) {
            Ok(r) => break r,
            Err(sphface_core::Error::Registration { scan_id, source }) => {
                warn!("{scan_id}: registration failed: {source}");
                outcome.failures.push((scan_id.clone(), format!("registration failed: {source}")));
                faces.retain(|(e, _)| e.scan_id != scan_id);
            }
            Err(e) => return Err(e.into()),
        }
    };
    let center = afm_center(&registered.afm, pcfg.center_depth_factor)?;
    let reference = afm_signal(&registered, center, &pcfg)?;

    let rows: Vec<SignalEntry> = faces
        .par_iter()
        .zip(registered.faces.par_iter())
        .map(|((e, _), face)| {
            let signal = conform_to(&project_face(face, center, &pcfg)?, &reference)?;
            let stem = file_stem(&e.scan_id);
            let row = SignalEntry {
                scan_id: e.scan_id.clone(),
                subject_id: e.subject_id.clone(),
                signal: PathBuf::from("signals").join(format!("{stem}.sig")),
                depth: PathBuf::from("depth").join(format!("{stem}.depth")),
            };
            io::save_signal(&out.join(&row.signal), &signal)?;
            io::save_vector(&out.join(&row.depth), &depth_image(face, &registered.afm))?;
            Ok(row)
        })
        .collect::<Result<_>>()?;

    write_atomic(&out.join(AFM_FILE), textfmt::format_grid(&registered.afm.grid).as_bytes())?;
    io::save_signal(&out.join(AFM_SIGNAL_FILE), &reference)?;
    manifest::write_signal_index(&out.join(SIGNAL_INDEX), &rows)?;

    let mut log = format!("center {} {} {}\n", center[0], center[1], center[2]);
    for (i, (e, _)) in faces.iter().enumerate() {
        let _ = writeln!(
            log,
            "ok {} coarse_rms={} fine_rms={}",
            e.scan_id, registered.coarse_rms[i], registered.fine_rms[i]
        );
    }
    for (id, err) in &outcome.failures {
        let _ = writeln!(log, "error {id}: {err}");
    }
    write_atomic(&out.join(PREPROCESS_LOG), log.as_bytes())?;

    outcome.processed = rows.into_iter().map(|r| r.scan_id).collect();
    info!("preprocessed {} scans, {} failed", outcome.processed.len(), outcome.failures.len());
    Ok(outcome)
}

/// Where a preprocessing index lives: `path` itself or `path/signals.csv`.
fn index_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(SIGNAL_INDEX)
    } else {
        path.to_path_buf()
    }
}

/// A preprocessed dataset in memory.
pub struct Loaded {
    pub entries: Vec<SignalEntry>,
    pub samples: Vec<Sample>,
}

pub fn load_samples(signals: &Path, with_depth: bool) -> Result<Loaded> {
    let entries = manifest::read_signal_index(&index_path(signals))?;
    if entries.is_empty() {
        return Err(Error::Config(format!("{} lists no signals", signals.display())));
    }
    let labels = manifest::label_map(entries.iter().map(|e| e.subject_id.as_str()));
    let samples = entries
        .par_iter()
        .map(|e| {
            Ok(Sample {
                label: labels[e.subject_id.as_str()],
                signal: io::load_signal(&e.signal)?,
                depth: if with_depth { io::load_vector(&e.depth)? } else { Vec::new() },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Loaded { entries, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LearnMethod {
    Ssmp,
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    /// Residual energy after each SSMP iteration (empty for PCA).
    pub residual_energies: Vec<f64>,
    pub files: Vec<PathBuf>,
    /// Requested dimension when it had to be clamped.
    pub clamped_from: Option<usize>,
}

/// One signal per subject (the first in index order), or all of them.
fn training_indices(samples: &[Sample], one_per_subject: bool) -> Vec<usize> {
    if !one_per_subject {
        return (0..samples.len()).collect();
    }
    let mut seen = std::collections::BTreeSet::new();
    (0..samples.len()).filter(|&i| seen.insert(samples[i].label)).collect()
}

/// Learns a subspace off-line from every indexed signal and writes it to
/// `out` (`support.txt` or `pca.txt`, plus `lda.txt` when asked).
pub fn learn(
    cfg: &PipelineConfig,
    signals: &Path,
    out: &Path,
    method: LearnMethod,
    with_lda: bool,
    one_per_subject: bool,
) -> Result<LearnOutcome> {
    cfg.validate()?;
    let params = cfg.params();
    let data = load_samples(signals, method == LearnMethod::Pca)?;
    let train = training_indices(&data.samples, one_per_subject);
    let mut files = Vec::new();
    let mut outcome = LearnOutcome { residual_energies: Vec::new(), files: Vec::new(), clamped_from: None };

    let coeffs: Vec<Vec<f64>> = match method {
        LearnMethod::Ssmp => {
            let lattice = AtomLattice::new(&params.dictionary)?;
            let chosen: Vec<SphericalSignal> = train.iter().map(|&i| data.samples[i].signal.clone()).collect();
            let res = ssmp_select_in(
                &lattice,
                &chosen,
                SsmpConfig { num_atoms: params.num_atoms, criterion: params.criterion },
            )?;
            if res.stopped_early {
                outcome.clamped_from = Some(params.num_atoms);
                warn!("SSMP stopped after {} of {} atoms: residuals vanished", res.support.len(), params.num_atoms);
            }
            for (k, e) in res.residual_energies.iter().enumerate() {
                info!("ssmp iteration {}: residual energy {e}", k + 1);
            }
            outcome.residual_energies = res.residual_energies.clone();
            let p = out.join(SUPPORT_FILE);
            write_atomic(&p, textfmt::format_support(&res.support).as_bytes())?;
            files.push(p);
            let mut trace = String::from("iteration,residual_energy\n");
            for (k, e) in res.residual_energies.iter().enumerate() {
                let _ = writeln!(trace, "{},{e}", k + 1);
            }
            let p = out.join("energy.csv");
            write_atomic(&p, trace.as_bytes())?;
            files.push(p);
            data.samples
                .par_iter()
                .map(|s| encode(&s.signal, &res.support, params.encode_mode).map_err(Error::from))
                .collect::<Result<_>>()?
        }
        LearnMethod::Pca => {
            let images: Vec<Vec<f64>> = train.iter().map(|&i| data.samples[i].depth.clone()).collect();
            let model = pca_fit(&images, params.pca_dim.unwrap_or(params.num_atoms))?;
            if let Some(asked) = model.clamped_from {
                warn!("PCA dimension {asked} clamped to the data rank {}", model.d());
            }
            outcome.clamped_from = model.clamped_from;
            let p = out.join(PCA_FILE);
            write_atomic(&p, textfmt::format_pca(&model).as_bytes())?;
            files.push(p);
            data.samples.iter().map(|s| pca_encode(&s.depth, &model).map_err(Error::from)).collect::<Result<_>>()?
        }
    };

    let mut text = String::from("scan_id,subject_id");
    for k in 0..coeffs.first().map_or(0, Vec::len) {
        let _ = write!(text, ",c{}", k + 1);
    }
    text.push('\n');
    for (e, c) in data.entries.iter().zip(&coeffs) {
        let _ = write!(text, "{},{}", e.scan_id, e.subject_id);
        for v in c {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    let p = out.join("coefficients.csv");
    write_atomic(&p, text.as_bytes())?;
    files.push(p);

    if with_lda {
        let x: Vec<Vec<f64>> = train.iter().map(|&i| coeffs[i].clone()).collect();
        let y: Vec<usize> = train.iter().map(|&i| data.samples[i].label).collect();
        let lda = lda_fit(&x, &y, usize::MAX)?;
        let p = out.join(LDA_FILE);
        write_atomic(&p, textfmt::format_lda(&lda).as_bytes())?;
        files.push(p);
    }
    outcome.files = files;
    Ok(outcome)
}

/// All repeats of the protocol, run in parallel. Each repeat draws from its
/// own RNG stream, so the report does not depend on scheduling.
pub fn evaluate_parallel(
    samples: &[Sample],
    params: &PipelineParams,
    cfg: &EvalConfig,
    methods: &[Method],
) -> Result<EvalReport> {
    let lattice = lattice_for(params, methods)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let plan = split_subjects(&labels, cfg.i, &mut repeat_rng(cfg.rng_seed, 0))?;
    let repeats = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| evaluate_repeat(samples, params, cfg, methods, lattice.as_ref(), r))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_repeats(*cfg, &plan, repeats))
}

/// Runs the protocol on a preprocessed dataset and writes the reports.
/// `model` may hold a learned `support.txt` and/or `pca.txt`, used instead
/// of learning a subspace per split.
pub fn evaluate(cfg: &PipelineConfig, signals: &Path, model: Option<&Path>, out: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let methods = cfg.methods()?;
    let mut params = cfg.params();
    let ecfg = cfg.eval_config();
    if let Some(dir) = model {
        let (s, p) = (dir.join(SUPPORT_FILE), dir.join(PCA_FILE));
        if s.exists() {
            params.fixed.support = Some(io::load_support(&s)?);
        }
        if p.exists() {
            params.fixed.pca = Some(io::load_pca(&p)?);
        }
        if params.fixed.support.is_none() && params.fixed.pca.is_none() {
            return Err(Error::Config(format!("{} holds neither {SUPPORT_FILE} nor {PCA_FILE}", dir.display())));
        }
    }
    let data = load_samples(signals, methods.iter().any(Method::needs_depth))?;
    let labels: Vec<usize> = data.samples.iter().map(|s| s.label).collect();
    let n_subjects = manifest::label_map(data.entries.iter().map(|e| e.subject_id.as_str())).len();
    let (kept, n_train, n_test) = split_counts(&labels, ecfg.i);
    if kept == 0 {
        warn!("T{} is infeasible: no subject has {} or more scans", ecfg.i, ecfg.min_scans());
    } else if kept < n_subjects {
        warn!(
            "T{}: {} of {n_subjects} subjects have fewer than {} scans and are left out",
            ecfg.i,
            n_subjects - kept,
            ecfg.min_scans()
        );
    }
    info!("T{}: {kept} subjects, {n_train} training and {n_test} test scans", ecfg.i);
    let report = evaluate_parallel(&data.samples, &params, &ecfg, &methods)?;
    write_reports(out, &report)?;
    for m in &report.methods {
        info!("{}: rank-1 {:.4} (std {:.4}), AUC {:.4}", m.method, m.rank1_mean(), m.rank1_std(), m.auc_mean());
    }
    Ok(report)
}
