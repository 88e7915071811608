//! `suction`: run the self-supervised learning loop, test trained weights,
//! compare region-selection methods, and verify gradients.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use suction_core::candidates::KernelE;
use suction_core::config::RunConfig;
use suction_core::fsutil::write_atomic;
use suction_core::nn::{check_heads, io, ModelParams};
use suction_core::pipeline::{comparison_csv, compare_region_methods, final_test, run_learning, Detector, ScheduleForm};
use suction_core::rng::derive_seed;
use suction_core::scenesim::ObjectSet;
use suction_core::Error;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "suction", version, about = "Two-step suction affordance detection with a self-supervised bin-picking loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learning loop and write metrics, pick log, weights and datasets.
    Learn {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pure-greedy pick test of trained weights on fresh scenes.
    Test {
        #[command(flatten)]
        run: RunArgs,
        /// Directory holding sgpa.weights and fre.weights (a learn output directory).
        #[arg(long)]
        weights: PathBuf,
        /// Use the held-out object kinds.
        #[arg(long)]
        unseen: bool,
        /// Number of test picks.
        #[arg(long, default_value_t = 150)]
        n: usize,
    },
    /// Compare two-step, full-coverage and random-region selection; writes comparison.csv.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Finite-difference check of both network heads.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale the analytic gradient before comparing (exercises the failure path).
        #[arg(long, default_value_t = 1.0, hide = true)]
        corrupt: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Symmetric,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Interpolated,
    Literal,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl RunArgs {
    /// Config file (or `fallback`, or defaults) with command-line overrides applied.
    fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig, Failure> {
        let path = self.config.as_deref().or(fallback.filter(|p| p.exists()));
        let mut cfg = match path {
            Some(p) => RunConfig::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(k) = self.kernel {
            cfg.kernel = match k {
                KernelArg::Symmetric => KernelE::Symmetric,
                KernelArg::Literal => KernelE::Literal,
            };
        }
        if let Some(s) = self.schedule {
            cfg.schedule.form = match s {
                ScheduleArg::Interpolated => ScheduleForm::Interpolated,
                ScheduleArg::Literal => ScheduleForm::Literal,
            };
        }
        cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn load_weights(dir: &Path) -> Result<(ModelParams<f32>, ModelParams<f32>), Failure> {
    Ok((io::load(&dir.join("sgpa.weights"))?, io::load(&dir.join("fre.weights"))?))
}

fn learn(run: &RunArgs) -> Result<(), Failure> {
    let cfg = run.resolve(None)?;
    let learner = run_learning(cfg.clone())?;
    learner.write_artifacts(&cfg.output_dir)?;
    let m = &learner.metrics;
    for c in &m.checkpoints {
        println!("checkpoint n={:<5} success={:.3} omission={:.3} points={}", c.n, c.success_rate, c.omission, c.point_samples);
    }
    println!("stop: {:?}", m.stop_reason);
    if let (Some(k), Some(u)) = (&m.final_known, &m.final_unseen) {
        println!("final known  {:.3} ({}/{})", k.success_rate, k.successes, k.picks);
        println!("final unseen {:.3} ({}/{})", u.success_rate, u.successes, u.picks);
    }
    println!("artifacts written to {}", cfg.output_dir.display());
    Ok(())
}

fn test(run: &RunArgs, weights: &Path, unseen: bool, n: usize) -> Result<(), Failure> {
    let cfg = run.resolve(Some(&weights.join("config.json")))?;
    let (sgpa, fre) = load_weights(weights)?;
    let det = Detector { sgpa: &sgpa, fre: &fre, kernel: cfg.kernel };
    let (set, tag) = if unseen { (ObjectSet::Unseen, "final-unseen") } else { (ObjectSet::Known, "final-known") };
    let report = final_test(&det, &cfg, set, n, derive_seed(cfg.seed, tag, 0))?;
    println!("success rate {:.4} ({}/{})", report.success_rate, report.successes, report.picks);
    Ok(())
}

fn compare(run: &RunArgs, weights: &Path) -> Result<(), Failure> {
    let cfg = run.resolve(Some(&weights.join("config.json")))?;
    let (sgpa, fre) = load_weights(weights)?;
    let det = Detector { sgpa: &sgpa, fre: &fre, kernel: cfg.kernel };
    let reports = compare_region_methods(&det, &cfg, cfg.compare_trials, derive_seed(cfg.seed, "compare", 0))?;
    let csv = comparison_csv(&reports)?;
    let path = run.out.clone().unwrap_or_else(|| weights.to_path_buf()).join("comparison.csv");
    write_atomic(&path, &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn gradcheck(seed: u64, corrupt: f64) -> Result<(), Failure> {
    let reports = check_heads(seed, corrupt)?;
    let mut worst = 0.0f64;
    for (head, r) in &reports {
        println!("{head:?}: max relative error {:.3e} over {} coordinates (worst in {})", r.max_rel_error, r.checked, r.worst_tensor);
        worst = worst.max(r.max_rel_error);
    }
    println!("max relative error {worst:.3e}");
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE:e}")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Learn { run } => learn(run),
        Command::Test { run, weights, unseen, n } => test(run, weights, *unseen, *n),
        Command::Compare { run, weights } => compare(run, weights),
        Command::Gradcheck { seed, corrupt } => gradcheck(*seed, *corrupt),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
