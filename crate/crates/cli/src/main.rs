//! `ugatlab` command-line front end.
//!
//! Loads a TOML experiment config, applies flag overrides, runs one protocol
//! family and writes the per-seed run directories plus `gap_report.csv` and
//! `summary.txt` under the output root.
//!
//! Exit status: 0 on success, 1 for invalid arguments, configs or inputs, 2
//! for failures while running. Every failure prints one line to stderr of the
//! form `ugatlab: error[<kind>]: <message>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use ugatlab::experiment::output::{
    find_seed_dirs, gap_reports_from_dirs, write_protocol_runs, write_reports,
};
use ugatlab::experiment::{
    compare_uncertainty_methods, run_ablation, run_direct_transfer, run_ugat, summary_table,
    sweep_static_alpha, Algorithm, ExperimentConfig, ProtocolRun,
};
use ugatlab::grounding::HeadKind;
use ugatlab::numnet::{cce_loss, edl_loss, gradcheck, mse_loss, Activation, MlpModel, MlpSpec};
use ugatlab::sim::{DemandSchedule, Scenario};
use ugatlab::{rng, Error};

#[derive(Parser, Debug)]
#[command(
    name = "ugatlab",
    version,
    about = "Sim-to-real traffic signal control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Only print warnings and errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    quiet: bool,

    /// Print debug progress.
    #[arg(long, short, global = true)]
    verbose: bool,

    /// Worker threads for running seeds in parallel (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML experiment config; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output root directory.
    #[arg(long, env = "UGATLAB_OUT", default_value = "runs")]
    out: PathBuf,

    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Real-world parameter set (Default, V1, V2, V3, V4).
    #[arg(long)]
    scenario: Option<Scenario>,

    /// Inverse-model head (edl, dropout, ensemble, softmax).
    #[arg(long)]
    head: Option<HeadKind>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train in simulation only and evaluate in both environments.
    TrainDirect(RunArgs),
    /// Grounded training with the algorithm from the config (ugat by default).
    TrainUgat {
        #[command(flatten)]
        run: RunArgs,
        /// Pin the grounding rate at this value instead of updating it.
        #[arg(long)]
        alpha: Option<f64>,
        /// Vanilla GAT: ground every action.
        #[arg(long, conflicts_with = "alpha")]
        gat: bool,
    },
    /// Full method, fixed alpha = 0.5, vanilla GAT and direct transfer.
    Ablate(RunArgs),
    /// Pinned-alpha runs for each value, then the dynamic run.
    SweepAlpha {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
        alphas: Vec<f64>,
    },
    /// The dynamic protocol with each uncertainty head, plus vanilla GAT.
    CompareUncertainty(RunArgs),
    /// Rebuild gap reports from existing run directories.
    GapReport {
        /// Seed directories or any directory above them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Where to write gap_report.csv and summary.txt.
        #[arg(long, env = "UGATLAB_OUT")]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of MLP gradients on random models.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write a Poisson arrival schedule usable as `demand_file`.
    DemandGen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000.0)]
        vehicles_per_hour: f64,
        #[arg(long, default_value_t = 3600.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit status.
struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn validation(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            code: 1,
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: "runtime",
            message: message.into(),
            code: 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Self::validation("config", e.to_string()),
            Error::Input(_) | Error::Parse { .. } => Self::validation("input", e.to_string()),
            other => Self::runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            return fail(Failure::validation(
                "usage",
                first.trim_start_matches("error: "),
            ));
        }
    };

    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (_, true) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return fail(Failure::validation("usage", "--jobs must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            return fail(Failure::runtime(e.to_string()));
        }
    }

    match dispatch(cli.command, cli.quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    let message = f.message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("ugatlab: error[{}]: {message}", f.kind);
    ExitCode::from(f.code)
}

fn dispatch(command: Command, quiet: bool) -> Result<(), Failure> {
    match command {
        Command::TrainDirect(args) => {
            let cfg = load_config(&args)?;
            finish(&args.out, vec![run_direct_transfer(&cfg)?], quiet)
        }
        Command::TrainUgat { run, alpha, gat } => {
            let mut cfg = load_config(&run)?;
            if let Some(a) = alpha {
                cfg = cfg.with_algorithm(Algorithm::UgatStatic(a));
            } else if gat {
                cfg = cfg.with_algorithm(Algorithm::Gat);
            } else if !cfg.algorithm().is_grounded() {
                cfg = cfg.with_algorithm(Algorithm::Ugat);
            }
            cfg.validate()?;
            finish(&run.out, vec![run_ugat(&cfg)?], quiet)
        }
        Command::Ablate(args) => {
            let cfg = load_config(&args)?;
            finish(&args.out, run_ablation(&cfg)?, quiet)
        }
        Command::SweepAlpha { run, alphas } => {
            let cfg = load_config(&run)?;
            finish(&run.out, sweep_static_alpha(&cfg, &alphas)?, quiet)
        }
        Command::CompareUncertainty(args) => {
            let cfg = load_config(&args)?;
            finish(&args.out, compare_uncertainty_methods(&cfg)?, quiet)
        }
        Command::GapReport { paths, out } => gap_report(&paths, out.as_deref(), quiet),
        Command::Gradcheck {
            cases,
            seed,
            tolerance,
        } => run_gradcheck(cases, seed, tolerance),
        Command::DemandGen {
            out,
            vehicles_per_hour,
            duration,
            seed,
        } => {
            if !(vehicles_per_hour >= 0.0 && duration > 0.0) {
                return Err(Failure::validation(
                    "usage",
                    "rate must be nonnegative and duration positive",
                ));
            }
            let schedule = DemandSchedule::generate(
                vehicles_per_hour,
                duration,
                &mut rng::stream(seed, "demand-gen", 0),
            );
            schedule.save(&out)?;
            log::info!("wrote {} arrivals to {}", schedule.len(), out.display());
            Ok(())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::validation("config", format!("cannot read {}: {e}", path.display()))
            })?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| {
                Failure::validation("config", format!("{}: {}", path.display(), e.message()))
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &args.seeds {
        cfg.seeds.clone_from(seeds);
    }
    if let Some(scenario) = args.scenario {
        cfg.scenario = scenario;
    }
    if let Some(head) = args.head {
        cfg.head = head;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(out: &Path, runs: Vec<ProtocolRun>, quiet: bool) -> Result<(), Failure> {
    write_protocol_runs(out, &runs)?;
    let reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
    write_reports(out, &reports)?;
    if !quiet {
        print!("{}", summary_table(&reports));
    }
    Ok(())
}

fn gap_report(paths: &[PathBuf], out: Option<&Path>, quiet: bool) -> Result<(), Failure> {
    let mut dirs = Vec::new();
    for p in paths {
        dirs.extend(find_seed_dirs(p)?);
    }
    let (reports, skipped) = gap_reports_from_dirs(&dirs);
    for (dir, e) in &skipped {
        log::warn!("skipped {}: {e}", dir.display());
    }
    if reports.is_empty() {
        return Err(Failure::validation(
            "input",
            "no completed run directories found",
        ));
    }
    if let Some(out) = out {
        write_reports(out, &reports)?;
    }
    if !quiet {
        print!("{}", summary_table(&reports));
    }
    if skipped.is_empty() {
        Ok(())
    } else {
        let listed: Vec<String> = skipped
            .iter()
            .map(|(d, _)| d.display().to_string())
            .collect();
        Err(Failure::runtime(format!(
            "skipped incomplete run directories: {}",
            listed.join(", ")
        )))
    }
}

fn run_gradcheck(cases: usize, seed: u64, tolerance: f64) -> Result<(), Failure> {
    let mut r = rng::stream(seed, "gradcheck", 0);
    let (mut done, mut worst, mut failed) = (0, 0.0f64, 0);
    while done < cases {
        let mut sizes = vec![r.random_range(2..7)];
        sizes.extend((0..r.random_range(1..=3)).map(|_| r.random_range(2..9)));
        let loss = done % 3;
        let act = if loss == 2 {
            Activation::Softplus
        } else {
            Activation::Identity
        };
        let model = MlpModel::new(MlpSpec::new(sizes.clone(), act), &mut r)?;
        let x: Vec<f64> = (0..sizes[0]).map(|_| r.random_range(-1.0..1.0)).collect();
        let out = sizes[sizes.len() - 1];
        let target: Vec<f64> = (0..out).map(|_| r.random_range(-1.0..1.0)).collect();
        let class = r.random_range(0..out);
        let report = match loss {
            0 => gradcheck(&model, |y| mse_loss(y, &target), &x, 1e-5, tolerance),
            1 => gradcheck(&model, |y| cce_loss(y, class), &x, 1e-5, tolerance),
            _ => gradcheck(&model, |y| edl_loss(y, class, 0.5), &x, 1e-5, tolerance),
        }?;
        if report.near_kink {
            continue;
        }
        worst = worst.max(report.max_relative_error);
        if report.max_relative_error >= tolerance {
            failed += 1;
        }
        done += 1;
    }
    println!("gradcheck: {cases} cases, {failed} failed, max relative error {worst:.3e}");
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::runtime(format!(
            "{failed} of {cases} gradient checks exceeded {tolerance}"
        )))
    }
}
