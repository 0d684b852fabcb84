use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use serde_json::json;
use trendfilter::harness::{run_experiment, ExperimentConfig, BUILTIN_CONFIGS};
use trendfilter::verify::identity_suite;
use trendfilter::{fit_constrained, fit_penalized, knot_profile, lambda_star, DiffOrder, Signal, SolverOptions};

#[derive(Parser)]
#[command(name = "trendfilter", version, about = "Trend filtering estimators and risk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a penalized or constrained trend filter.
    #[command(group(ArgGroup::new("level").required(true).args(["penalty", "budget"])))]
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        order: usize,
        /// Effective penalty `mu` on `||D^(r) theta||_1`.
        #[arg(long)]
        penalty: Option<f64>,
        /// Variation budget `V`; the constraint is `||D^(r) theta||_1 <= V n^(1-r)`.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the knot profile of a signal as JSON.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = trendfilter::knots::DEFAULT_KNOT_TOL)]
        rel_tol: f64,
    },
    /// Monte-Carlo estimate of the theoretical penalty level for a target signal.
    LambdaStar {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the exact matrix identities and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Run a risk experiment and write its CSV and JSON summary.
    #[command(group(ArgGroup::new("source").required(true).args(["config", "builtin"])))]
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of the builtin configs.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a builtin experiment config as JSON.
    Config { name: String },
}

fn read_signal(path: &Path) -> Result<Signal> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: not a number: {l:?}", path.display(), i + 1))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Signal::new(values)?)
}

fn write_signal(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(values.len() * 20);
    for v in values {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Fit { input, order, penalty, budget, output } => {
            let y = read_signal(&input)?;
            let r = DiffOrder::new(order)?;
            let opts = SolverOptions::default();
            let res = match (penalty, budget) {
                (Some(mu), None) => fit_penalized(&y, r, mu, &opts)?,
                (None, Some(v)) => fit_constrained(&y, r, v, &opts)?,
                _ => unreachable!("clap enforces exactly one level"),
            };
            write_signal(&output, res.fitted.as_slice())?;
            print_json(&json!({
                "objective": res.objective,
                "converged": res.converged,
                "iterations": res.iterations,
                "primal_residual": res.primal_residual,
                "dual_residual": res.dual_residual,
                "multiplier": res.multiplier,
            }))?;
            if !res.converged {
                log::warn!("solver did not converge");
            }
            Ok(res.converged)
        }
        Command::Analyze { input, order, rel_tol } => {
            let theta = read_signal(&input)?;
            let profile = knot_profile(&theta, DiffOrder::new(order)?, rel_tol)?;
            print_json(&serde_json::to_value(&profile)?)?;
            Ok(true)
        }
        Command::LambdaStar { input, order, reps, seed } => {
            let theta = read_signal(&input)?;
            let ls = lambda_star(&theta, DiffOrder::new(order)?, reps, seed)?;
            if ls.failures > 0 {
                log::warn!("{} of {reps} draws failed and were left out", ls.failures);
            }
            print_json(&json!({
                "lambda_star": ls.lambda_star,
                "stderr": ls.stderr,
                "v0_norm": ls.v0_norm,
                "vstar_norm": ls.vstar_norm,
                "reps": ls.reps,
                "seed": ls.seed,
            }))?;
            Ok(true)
        }
        Command::Verify { n_max, tol } => {
            let rows = identity_suite(n_max, tol)?;
            println!("{:<14} {:>2} {:>9} {:>6} {:>8}  result", "check", "r", "n", "cases", "failures");
            for row in &rows {
                println!(
                    "{:<14} {:>2} {:>9} {:>6} {:>8}  {}",
                    row.check,
                    row.r,
                    format!("{}..={}", row.n_min, row.n_max),
                    row.cases,
                    row.failures,
                    if row.passed() { "pass" } else { "FAIL" }
                );
            }
            Ok(rows.iter().all(|r| r.passed()))
        }
        Command::Experiment { config, builtin, out } => {
            let cfg = match (config, builtin) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                (None, Some(name)) => ExperimentConfig::builtin(&name)?,
                _ => unreachable!("clap enforces exactly one source"),
            };
            let report = run_experiment(&cfg)?;
            let (csv, summary) = report.write(&out)?;
            for c in &report.curves {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!(
                    "{:<20} slope {:>7}  R2 {:>6}  n*risk R2 {:>6}",
                    c.estimator,
                    fmt(c.slope),
                    fmt(c.r_squared),
                    fmt(c.n_risk_r_squared)
                );
            }
            println!("wrote {} and {}", csv.display(), summary.display());
            Ok(true)
        }
        Command::Config { name } => {
            if !BUILTIN_CONFIGS.contains(&name.as_str()) {
                bail!("unknown builtin `{name}`; choose one of {}", BUILTIN_CONFIGS.join(", "));
            }
            print_json(&serde_json::to_value(ExperimentConfig::builtin(&name)?)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
