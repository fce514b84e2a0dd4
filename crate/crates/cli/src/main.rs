use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use riskseg::io::{load_dataset, write_dataset, write_report, ReportFormat, RunParameters, RunReport};
use riskseg::{
    ablate_splits, calibrate, evaluate, generate_dataset, sweep, validate_guarantee, Error, GeneratorParams,
    LambdaGrid, LossKind, RiskLevel, SearchMode, SeedPolicy, SweepConfig,
};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_ARGUMENT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "riskseg",
    version,
    about = "Conformal risk control for defect segmentation maps"
)]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record wall-clock duration in the report (makes reports run-dependent).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Fnr,
    /// Monotonized FDR (running maximum over lambda).
    Fdr,
    /// Raw FDR without monotonization; no risk guarantee.
    FdrRaw,
}

impl From<LossArg> for LossKind {
    fn from(value: LossArg) -> Self {
        match value {
            LossArg::Fnr => LossKind::Fnr,
            LossArg::Fdr => LossKind::FdrMonotonized,
            LossArg::FdrRaw => LossKind::Fdr,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SearchArg {
    Grid,
    Binary,
    Exact,
}

impl From<SearchArg> for SearchMode {
    fn from(value: SearchArg) -> Self {
        match value {
            SearchArg::Grid => SearchMode::GridScan,
            SearchArg::Binary => SearchMode::BinarySearch,
            SearchArg::Exact => SearchMode::ExactBreakpoints,
        }
    }
}

fn parse_alpha(s: &str) -> Result<RiskLevel, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    RiskLevel::new(v).map_err(|e| e.to_string())
}

fn parse_unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

#[derive(Args, Debug, Clone)]
struct GeneratorArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Mean probability on defect pixels.
    #[arg(long, default_value_t = 0.9)]
    signal: f64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Mean probability on background pixels.
    #[arg(long, default_value_t = 0.1)]
    background: f64,
    #[arg(long, default_value_t = 1)]
    blobs_min: u32,
    #[arg(long, default_value_t = 3)]
    blobs_max: u32,
    #[arg(long, default_value_t = 3.0)]
    radius_min: f64,
    #[arg(long, default_value_t = 8.0)]
    radius_max: f64,
}

impl GeneratorArgs {
    fn params(&self) -> GeneratorParams {
        GeneratorParams {
            height: self.height,
            width: self.width,
            blob_count: (self.blobs_min, self.blobs_max),
            blob_radius: (self.radius_min, self.radius_max),
            signal: self.signal,
            noise_sigma: self.noise,
            background: self.background,
            seed_policy: SeedPolicy::Stream,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Select lambda_hat on a dataset.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        loss: LossArg,
        #[arg(long, value_parser = parse_alpha)]
        alpha: RiskLevel,
        #[arg(long, default_value_t = riskseg::DEFAULT_GRID_STEPS)]
        grid_steps: usize,
        #[arg(long, value_enum, default_value = "grid")]
        search: SearchArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test risk and mean prediction-set size at a fixed lambda.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_lambda)]
        lambda: f64,
        #[arg(long, value_enum)]
        loss: LossArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate and test over a list of risk levels on one seeded split.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        loss: LossArg,
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_alpha)]
        alphas: Vec<RiskLevel>,
        #[arg(long, default_value_t = 0.5, value_parser = parse_unit_open)]
        split_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = riskseg::DEFAULT_GRID_STEPS)]
        grid_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split-ratio ablation aggregated over seeds.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7", value_parser = parse_unit_open)]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_alpha)]
        alphas: Vec<RiskLevel>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "fnr")]
        loss: LossArg,
        #[arg(long, default_value_t = riskseg::DEFAULT_GRID_STEPS)]
        grid_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset (PMAP maps, PGM masks, manifest.json).
    Simulate {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Monte Carlo audit of the expected-risk bound on synthetic data.
    ValidateGuarantee {
        #[arg(long, value_parser = parse_alpha)]
        alpha: RiskLevel,
        #[arg(long, value_enum)]
        loss: LossArg,
        #[arg(long, default_value_t = 200)]
        n_cal: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[arg(long, default_value_t = 300)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = riskseg::DEFAULT_GRID_STEPS)]
        grid_steps: usize,
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn manifest_param(path: &Path) -> Option<String> {
    Some(path.display().to_string())
}

fn finish(mut report: RunReport, out: &Path, started: Instant, timing: bool) -> Result<(), Error> {
    if timing {
        report.duration_seconds = Some(started.elapsed().as_secs_f64());
    }
    write_report(&report, out, ReportFormat::from_path(out))
}

fn run(cli: Cli) -> Result<(), Error> {
    let started = Instant::now();
    let timing = cli.timing;
    match cli.command {
        Command::Calibrate {
            manifest,
            loss,
            alpha,
            grid_steps,
            search,
            out,
        } => {
            let records = load_dataset(&manifest)?;
            let grid = LambdaGrid::uniform(grid_steps)?;
            let profile = calibrate(&records, loss.into(), alpha, &grid, search.into())?;
            println!(
                "lambda_hat = {} (empirical risk {} <= target {}, n = {})",
                profile.lambda_hat,
                profile.empirical_risk_at_lambda_hat,
                profile.adjusted_target,
                profile.n_calibration
            );
            let mut report = RunReport::new(
                "calibrate",
                RunParameters {
                    manifest: manifest_param(&manifest),
                    loss: Some(loss.into()),
                    alpha: Some(alpha.value()),
                    grid: Some(grid.spec()),
                    search: Some(search.into()),
                    ..Default::default()
                },
            );
            report.profile = Some(profile);
            finish(report, &out, started, timing)
        }
        Command::Evaluate {
            manifest,
            lambda,
            loss,
            out,
        } => {
            let records = load_dataset(&manifest)?;
            let summary = evaluate(&records, lambda, loss.into())?;
            println!(
                "{} = {} at lambda {}, mean set size {}",
                summary.kind, summary.test_risk, lambda, summary.mean_predset_size
            );
            let mut report = RunReport::new(
                "evaluate",
                RunParameters {
                    manifest: manifest_param(&manifest),
                    loss: Some(loss.into()),
                    lambda: Some(lambda),
                    ..Default::default()
                },
            );
            report.evaluation = Some(summary);
            finish(report, &out, started, timing)
        }
        Command::Sweep {
            manifest,
            loss,
            alphas,
            split_ratio,
            seed,
            grid_steps,
            out,
        } => {
            let records = load_dataset(&manifest)?;
            let config = SweepConfig {
                kind: loss.into(),
                split_ratio,
                seed,
                grid: LambdaGrid::uniform(grid_steps)?,
                search_mode: SearchMode::GridScan,
            };
            let rows = sweep(&records, &alphas, &config)?;
            let mut report = RunReport::new(
                "sweep",
                RunParameters {
                    manifest: manifest_param(&manifest),
                    loss: Some(config.kind),
                    alphas: alphas.iter().map(|a| a.value()).collect(),
                    grid: Some(config.grid.spec()),
                    search: Some(config.search_mode),
                    split_ratio: Some(split_ratio),
                    seed: Some(seed),
                    ..Default::default()
                },
            );
            report.sweep = rows;
            finish(report, &out, started, timing)
        }
        Command::Ablate {
            manifest,
            ratios,
            alphas,
            seeds,
            loss,
            grid_steps,
            out,
        } => {
            let records = load_dataset(&manifest)?;
            let grid = LambdaGrid::uniform(grid_steps)?;
            let rows = ablate_splits(&records, &ratios, &alphas, &seeds, loss.into(), &grid)?;
            for row in &rows {
                println!(
                    "ratio {} alpha {}: mean risk {:?} ({:?})",
                    row.split_ratio, row.alpha, row.mean_test_risk, row.status
                );
            }
            let mut report = RunReport::new(
                "ablate",
                RunParameters {
                    manifest: manifest_param(&manifest),
                    loss: Some(loss.into()),
                    alphas: alphas.iter().map(|a| a.value()).collect(),
                    grid: Some(grid.spec()),
                    split_ratios: ratios,
                    seeds,
                    ..Default::default()
                },
            );
            report.ablation = rows;
            finish(report, &out, started, timing)
        }
        Command::Simulate {
            generator,
            n,
            seed,
            out_dir,
        } => {
            if n == 0 {
                return Err(Error::InvalidParameter("--n must be at least 1".into()));
            }
            let records = generate_dataset(&generator.params(), n, seed)?;
            let manifest = write_dataset(&records, &out_dir)?;
            println!("wrote {} records, manifest {}", n, manifest.display());
            Ok(())
        }
        Command::ValidateGuarantee {
            alpha,
            loss,
            n_cal,
            n_test,
            trials,
            seed,
            grid_steps,
            generator,
            out,
        } => {
            let config = riskseg::GuaranteeConfig {
                generator: generator.params(),
                kind: loss.into(),
                n_calibration: n_cal,
                n_test,
                trials,
                seed,
                grid: LambdaGrid::uniform(grid_steps)?,
            };
            let guarantee = validate_guarantee(&config, alpha)?;
            println!(
                "mean test risk {} +/- {} (alpha {}, {} trials)",
                guarantee.mean_test_risk, guarantee.std_error, guarantee.alpha, guarantee.trials
            );
            let mut report = RunReport::new(
                "validate-guarantee",
                RunParameters {
                    loss: Some(config.kind),
                    alpha: Some(alpha.value()),
                    grid: Some(config.grid.spec()),
                    seed: Some(seed),
                    n_calibration: Some(n_cal),
                    n_test: Some(n_test),
                    trials: Some(trials),
                    generator: Some(config.generator.clone()),
                    ..Default::default()
                },
            );
            report.guarantee = Some(guarantee);
            finish(report, &out, started, timing)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::CalibrationInfeasible { .. } => EXIT_INFEASIBLE,
        Error::Format { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_FORMAT,
        Error::PreconditionViolated { .. } => 1,
        _ => EXIT_ARGUMENT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ARGUMENT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ARGUMENT);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::CalibrationInfeasible { min_feasible_alpha, .. } = err {
                eprintln!("minimal feasible alpha: {min_feasible_alpha}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
