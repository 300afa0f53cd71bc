use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::error;
use sphface::commands::{self, LearnMethod};
use sphface::config::{DictPreset, PipelineConfig, RankModeName, VirtualName};

/// 3D face recognition on the sphere: synthetic data, preprocessing,
/// subspace learning and evaluation.
#[derive(Parser, Debug)]
#[command(name = "sphface", version)]
struct Cli {
    /// TOML configuration with one section per module.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for data generation and evaluation splits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Extract, register and project every scan of a manifest.
    Preprocess(PreprocessArgs),
    /// Learn an SSMP support or a PCA basis from preprocessed signals.
    Learn(LearnArgs),
    /// Run the recognition and verification protocol.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    subjects: usize,
    #[arg(long)]
    scans: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    pose_deg: Option<f64>,
    #[arg(long)]
    translation: Option<f64>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write one CSV row of extraction diagnostics per scan.
    #[arg(long)]
    dump_extraction_report: Option<PathBuf>,
    #[arg(long)]
    icp_max_iter: Option<usize>,
    #[arg(long)]
    icp_tol: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["R", "C"])]
    afm_grid: Option<Vec<usize>>,
    #[arg(long)]
    crop_coverage: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["N_THETA", "N_PHI"])]
    sphere_grid: Option<Vec<usize>>,
    /// Neighbours averaged per sphere node.
    #[arg(long)]
    knn: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SubspaceArgs {
    /// SSMP support size K.
    #[arg(long)]
    num_atoms: Option<usize>,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long, value_enum)]
    dict_preset: Option<DictPreset>,
}

#[derive(Args, Debug)]
struct LearnArgs {
    /// Preprocessing output directory (or its signals.csv).
    #[arg(long)]
    signals: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ssmp")]
    method: LearnMethod,
    /// Also fit LDA on the training coefficients.
    #[arg(long)]
    lda: bool,
    /// Learn from the first signal of each subject only.
    #[arg(long)]
    one_per_subject: bool,
    #[command(flatten)]
    subspace: SubspaceArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    signals: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory with a learned support.txt and/or pca.txt.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated subset of euc,mse,pca,pca+lda,ssmp,ssmp+lda.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Training scans per subject (T_i).
    #[arg(long)]
    i: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    rank_max: Option<usize>,
    #[arg(long, value_enum)]
    rank_mode: Option<RankModeName>,
    #[arg(long = "virtual", value_enum)]
    virtual_faces: Option<VirtualName>,
    /// Virtual-face shift in cells (1 or 2).
    #[arg(long)]
    virtual_shift: Option<usize>,
    /// Probe with the gallery itself.
    #[arg(long)]
    gallery_as_test: bool,
    #[arg(long)]
    recognition_only: bool,
    #[arg(long)]
    verification_only: bool,
    #[command(flatten)]
    subspace: SubspaceArgs,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl SubspaceArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        set(&mut cfg.ssmp.num_atoms, self.num_atoms);
        if self.pca_dim.is_some() {
            cfg.pca.dim = self.pca_dim;
        }
        set(&mut cfg.dictionary.preset, self.dict_preset);
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    match cli.command {
        Command::Synth(a) => {
            set(&mut cfg.synth.grid, a.grid);
            set(&mut cfg.synth.noise, a.noise);
            set(&mut cfg.synth.pose_deg, a.pose_deg);
            set(&mut cfg.synth.translation, a.translation);
            let o = commands::synth(&cfg, a.subjects, a.scans, &a.out)?;
            println!("{} scans, manifest {}", o.scans, o.manifest.display());
            Ok(true)
        }
        Command::Preprocess(a) => {
            set(&mut cfg.registration.icp_max_iter, a.icp_max_iter);
            set(&mut cfg.registration.icp_tol, a.icp_tol);
            set(&mut cfg.registration.crop_coverage, a.crop_coverage);
            set(&mut cfg.sphere.k, a.knn);
            if let Some(g) = a.afm_grid {
                cfg.registration.afm_grid = [g[0], g[1]];
            }
            if let Some(g) = a.sphere_grid {
                (cfg.sphere.n_theta, cfg.sphere.n_phi) = (g[0], g[1]);
            }
            let o = commands::preprocess(&cfg, &a.manifest, &a.out, a.dump_extraction_report.as_deref())?;
            println!("{} scans preprocessed, {} failed", o.processed.len(), o.failures.len());
            for (id, e) in &o.failures {
                eprintln!("failed {id}: {e}");
            }
            Ok(o.failures.is_empty())
        }
        Command::Learn(a) => {
            a.subspace.apply(&mut cfg);
            let o = commands::learn(&cfg, &a.signals, &a.out, a.method, a.lda, a.one_per_subject)?;
            for (k, e) in o.residual_energies.iter().enumerate() {
                println!("iteration {:>3}  residual energy {e:.6e}", k + 1);
            }
            if let Some(d) = o.clamped_from {
                println!("requested dimension {d} was clamped");
            }
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Evaluate(a) => {
            a.subspace.apply(&mut cfg);
            if let Some(m) = a.methods {
                cfg.eval.methods = m;
            }
            set(&mut cfg.eval.i, a.i);
            set(&mut cfg.eval.n_repeats, a.repeats);
            set(&mut cfg.eval.rank_mode, a.rank_mode);
            set(&mut cfg.eval.virtual_faces, a.virtual_faces);
            set(&mut cfg.eval.virtual_shift, a.virtual_shift);
            if a.rank_max.is_some() {
                cfg.eval.rank_max = a.rank_max;
            }
            cfg.eval.gallery_as_test |= a.gallery_as_test;
            if a.recognition_only && a.verification_only {
                anyhow::bail!("--recognition-only and --verification-only are exclusive");
            }
            if a.recognition_only {
                cfg.eval.verification = false;
            }
            if a.verification_only {
                cfg.eval.recognition = false;
            }
            let report = commands::evaluate(&cfg, &a.signals, a.model.as_deref(), &a.out)?;
            println!("{:<10} {:>10} {:>10} {:>8}", "method", "rank1", "std", "auc");
            for m in &report.methods {
                println!(
                    "{:<10} {:>10.4} {:>10.4} {:>8.4}",
                    m.method.name(),
                    m.rank1_mean(),
                    m.rank1_std(),
                    m.auc_mean()
                );
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
