use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use memgrad::harness::tables::{bound_checks_table, isometry_table, rates_table, variance_ode_table, warp_table};
use memgrad::harness::{
    aggregate, check_configured, emit, run_optimize, run_simulate, verify, ExperimentConfig, Format, HarnessError,
    RunSource,
};

/// Memory-based momentum laboratory.
#[derive(Parser)]
#[command(name = "memgrad", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply to every missing section.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format, overriding the config. Repeatable.
    #[arg(long, global = true, value_enum)]
    format: Vec<FormatArg>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured discrete methods over all seeds.
    Optimize,
    /// Integrate the configured ODE/SDE models over all seeds.
    Simulate,
    /// Integrate the second-moment ODEs of the Nesterov and quadratic-forgetting flows.
    VarianceOde,
    /// Monte-Carlo check of the variance of ∫ sᵖ dB.
    Isometry,
    /// Compare the time-warped memory flow with the heavy-ball flow it maps to.
    Warp,
    /// Run the full invariant suite; exits non-zero if any check fails.
    Verify,
    /// Tabulate the configured rate bounds.
    Rates,
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if !common.format.is_empty() {
        cfg.output.formats = common
            .format
            .iter()
            .map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            })
            .collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn bounds(cfg: &ExperimentConfig, dir: &Path, traces: &[memgrad::harness::Trace], sources: &[RunSource]) -> Result<bool, HarnessError> {
    if cfg.bounds.is_empty() {
        return Ok(true);
    }
    let checks = check_configured(traces, sources, &cfg.bounds);
    let path = dir.join("bounds_check.csv");
    bound_checks_table(&checks, &path)?;
    println!("{}", path.display());
    let mut ok = true;
    for c in &checks {
        if !c.report.holds() {
            warn!("{} vs {}: {:?}", c.bound, c.method, c.report);
            ok = false;
        }
    }
    Ok(ok)
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    let cfg = load(&cli.common)?;
    let dir = cfg.output.dir.clone();
    info!("config hash {}", cfg.content_hash()?);
    match cli.command {
        Command::Optimize => {
            let traces = run_optimize(&cfg)?;
            let out = emit(&dir, "optimize", &cfg, &traces, &aggregate(&traces), &cfg.output.formats)?;
            report(&out.files);
            let sources: Vec<RunSource> = cfg.expand_methods()?.into_iter().map(RunSource::Discrete).collect();
            bounds(&cfg, &dir, &traces, &sources)
        }
        Command::Simulate => {
            let traces = run_simulate(&cfg)?;
            let out = emit(&dir, "simulate", &cfg, &traces, &aggregate(&traces), &cfg.output.formats)?;
            report(&out.files);
            let sources: Vec<RunSource> = cfg.models.iter().copied().map(RunSource::Continuous).collect();
            bounds(&cfg, &dir, &traces, &sources)
        }
        Command::VarianceOde => {
            report(&[variance_ode_table(&cfg, &dir)?]);
            Ok(true)
        }
        Command::Isometry => {
            report(&[isometry_table(&cfg, &dir)?]);
            Ok(true)
        }
        Command::Warp => {
            let (path, d) = warp_table(&cfg, &dir)?;
            report(&[path]);
            println!("max discrepancy {d:e}");
            Ok(d < cfg.tolerances.warp)
        }
        Command::Verify => {
            let out = verify(&cfg, &dir)?;
            for c in &out.checks {
                println!(
                    "{} {} (observed {:e}, tolerance {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.observed,
                    c.tolerance
                );
            }
            report(&out.files);
            Ok(out.all_passed())
        }
        Command::Rates => {
            if cfg.bounds.is_empty() {
                return Err(HarnessError::Config("no [[bounds]] to tabulate".into()));
            }
            report(&[rates_table(&cfg, &dir)?]);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
