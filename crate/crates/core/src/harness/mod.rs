//! Monte-Carlo risk experiments.
//!
//! Replication `m` at grid point `n` draws its noise from a stream keyed by
//! `(seed, experiment name, n)`, so every estimator sees the same data and
//! results do not depend on how replications are scheduled.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knots::{sample_signal, Builtin, SignalSpec};
use crate::linalg::{DiffOrder, Signal};
use crate::rng::{derive_seed, gaussian_vector, label_key, stream_rng};
use crate::subdiff::TuningRule;

mod estimator;
#[cfg(test)]
mod tests;

pub use estimator::{resolve, Budget, EstimatorConfig, EstimatorSpec, Fit, Fitter, Penalty, Resolved};

/// Replications may fail (solver error or non-convergence) for at most this
/// fraction of `reps` before a run is aborted.
pub const MAX_FAILURE_RATE: f64 = 0.01;

const LAMBDA_STAR_TAG: u64 = 1;
const CV_TAG: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub risk: f64,
    pub stderr: f64,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
}

struct Draw {
    losses: Vec<Option<f64>>,
    lambdas: Vec<Option<f64>>,
}

fn replicate(theta: &Signal, fitters: &[Fitter], sigma: f64, reps: usize, key: &[u64]) -> Vec<Draw> {
    let n = theta.len();
    (0..reps)
        .into_par_iter()
        .map(|m| {
            let z = gaussian_vector(&mut stream_rng(key, m as u64), n);
            let y: Vec<f64> = theta.iter().zip(&z).map(|(t, e)| t + sigma * e).collect();
            let y = Signal::new(y).expect("finite data");
            let mut draw = Draw {
                losses: Vec::with_capacity(fitters.len()),
                lambdas: Vec::with_capacity(fitters.len()),
            };
            for f in fitters {
                match f.fit(&y, m as u64) {
                    Ok(Fit { fitted, lambda }) => {
                        let loss = fitted.iter().zip(theta.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
                        draw.losses.push(Some(loss));
                        draw.lambdas.push(lambda);
                    }
                    Err(e) => {
                        log::warn!("replication {m} at n = {n}: {e}");
                        draw.losses.push(None);
                        draw.lambdas.push(None);
                    }
                }
            }
            draw
        })
        .collect()
}

fn summarize(losses: impl Iterator<Item = Option<f64>>, reps: usize) -> Result<RiskEstimate> {
    let ok: Vec<f64> = losses.flatten().collect();
    let failures = reps - ok.len();
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 || ok.len() < 2 {
        return Err(Error::TooManyFailures { failures, reps });
    }
    let count = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / count;
    let var = ok.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (count - 1.0);
    Ok(RiskEstimate {
        risk: mean,
        stderr: (var / count).sqrt(),
        reps: ok.len(),
        failures,
    })
}

fn check_mc(sigma: f64, reps: usize) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if reps < 2 {
        return Err(Error::invalid("reps", format!("need at least 2, got {reps}")));
    }
    Ok(())
}

/// Average of `||theta_hat(Y_m) - theta*||^2 / n` over `reps` draws
/// `Y_m = theta* + sigma Z_m`.
pub fn monte_carlo_risk(theta_star: &Signal, fitter: &Fitter, sigma: f64, reps: usize, seed: u64) -> Result<RiskEstimate> {
    check_mc(sigma, reps)?;
    let draws = replicate(theta_star, std::slice::from_ref(fitter), sigma, reps, &[seed]);
    summarize(draws.into_iter().map(|d| d.losses[0]), reps)
}

/// Fraction of replications whose loss exceeds the mean loss by more than
/// `4 sigma^2 x / n`.
pub fn loss_quantiles(theta_star: &Signal, fitter: &Fitter, sigma: f64, reps: usize, seed: u64, x: f64) -> Result<f64> {
    check_mc(sigma, reps)?;
    if !(x > 0.0) {
        return Err(Error::invalid("x", format!("must be positive, got {x}")));
    }
    let draws = replicate(theta_star, std::slice::from_ref(fitter), sigma, reps, &[seed]);
    let losses: Vec<Option<f64>> = draws.into_iter().map(|d| d.losses[0]).collect();
    let est = summarize(losses.iter().copied(), reps)?;
    let cut = est.risk + 4.0 * sigma * sigma * x / theta_star.len() as f64;
    let over = losses.iter().flatten().filter(|l| **l > cut).count();
    Ok(over as f64 / est.reps as f64)
}

/// Least-squares line `y = a + b x`; returns `(b, R^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 3 {
        return Err(Error::invalid("points", format!("need at least 3, got {}", x.len())));
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "abscissae are all equal"));
    }
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((sxy / sxx, r2))
}

/// Slope and `R^2` of `log risk` against `log n`.
pub fn loglog_slope(points: &[(usize, f64)]) -> Result<(f64, f64)> {
    if let Some(&(n, risk)) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::invalid("risk", format!("must be positive, got {risk} at n = {n}")));
    }
    let x: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    linear_fit(&x, &y)
}

/// `count` integers spaced evenly in `log` between `lo` and `hi`, rounded and
/// deduplicated.
pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 || lo >= hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

fn default_csv() -> String {
    "risk.csv".into()
}

fn default_summary() -> String {
    "summary.json".into()
}

/// File names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            csv: default_csv(),
            summary: default_summary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Also keys the noise streams.
    pub name: String,
    pub signal: SignalSpec,
    pub order: usize,
    pub sigma: f64,
    pub n_grid: Vec<usize>,
    pub estimators: Vec<EstimatorConfig>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
}

pub const BUILTIN_CONFIGS: [&str; 7] = ["vio1-rate", "vio2-rate", "f1-risk", "f2-risk", "f3-risk", "simpo", "rr0"];

fn rule(rule: TuningRule, gamma: f64) -> EstimatorConfig {
    let id = format!("rule-{}", format!("{rule:?}").to_lowercase());
    EstimatorConfig::labelled(&id, EstimatorSpec::Penalized { lambda: Penalty::Rule { rule, gamma } })
}

impl ExperimentConfig {
    pub fn builtin(name: &str) -> Result<Self> {
        let oracle = EstimatorConfig::new(EstimatorSpec::Constrained { v: Budget::Oracle });
        let lambda_star = EstimatorConfig::new(EstimatorSpec::Penalized {
            lambda: Penalty::LambdaStar { reps: 200 },
        });
        let cv = |one_se| EstimatorConfig::new(EstimatorSpec::Penalized {
            lambda: Penalty::Cv { folds: 5, one_se },
        });
        let base = |signal: Builtin, order, n_grid, estimators, reps| ExperimentConfig {
            name: name.to_string(),
            signal: SignalSpec::builtin(signal),
            order,
            sigma: 1.0,
            n_grid,
            estimators,
            reps,
            seed: 20240501,
            output: OutputPaths::default(),
        };
        let cfg = match name {
            "vio1-rate" => base(Builtin::Vio1, 1, log_spaced(1000, 5000, 8), vec![oracle], 100),
            "vio2-rate" => base(Builtin::Vio2, 2, log_spaced(500, 3000, 6), vec![oracle], 100),
            "f1-risk" => base(
                Builtin::F1,
                1,
                log_spaced(100, 3000, 10),
                vec![oracle, lambda_star, rule(TuningRule::Lach, 1.0), rule(TuningRule::Cdal, 0.5)],
                200,
            ),
            "f2-risk" => base(
                Builtin::F2,
                2,
                log_spaced(100, 2000, 10),
                vec![oracle, rule(TuningRule::Lachr, 1.0 / 16.0), rule(TuningRule::Cdalr, 1.0 / 16.0)],
                200,
            ),
            "f3-risk" => base(
                Builtin::F3,
                1,
                log_spaced(100, 3000, 10),
                vec![
                    oracle,
                    lambda_star,
                    rule(TuningRule::Lach, 1.0),
                    rule(TuningRule::Cdal, 0.5),
                    cv(false),
                    cv(true),
                ],
                200,
            ),
            "simpo" => ExperimentConfig {
                sigma: 0.01,
                ..base(
                    Builtin::SimpoStep,
                    1,
                    vec![128],
                    vec![EstimatorConfig::new(EstimatorSpec::Constrained { v: Budget::Fixed(1.0) })],
                    2000,
                )
            },
            "rr0" => ExperimentConfig {
                signal: SignalSpec::PiecewisePoly {
                    breakpoints: vec![],
                    coefficients: vec![vec![0.0]],
                    grid: Default::default(),
                },
                ..base(Builtin::F1, 1, vec![500], vec![rule(TuningRule::Rr0, 1.0)], 500)
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown builtin `{other}`; choose one of {}",
                    BUILTIN_CONFIGS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let r = DiffOrder::new(self.order)?;
        self.signal.validate()?;
        if self.signal.max_degree() + 1 > self.order {
            return bad(format!("signal degree {} exceeds order {} - 1", self.signal.max_degree(), self.order));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly increasing".into());
        }
        if self.n_grid[0] < 2 * r.get() + 1 {
            return bad(format!("n must be at least {} for order {}", 2 * r.get() + 1, r.get()));
        }
        if self.estimators.is_empty() {
            return bad("no estimators".into());
        }
        let mut ids: Vec<String> = Vec::new();
        for e in &self.estimators {
            e.validate(r.get())?;
            let id = e.id();
            if ids.contains(&id) {
                return bad(format!("duplicate estimator id `{id}`"));
            }
            ids.push(id);
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub n: usize,
    pub estimator: String,
    pub risk: f64,
    pub stderr: f64,
    pub reps: usize,
}

/// Penalty or budget used at one grid point. Data-driven levels report
/// their median and quartiles over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub n: usize,
    pub estimator: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q3: Option<f64>,
    /// Monte-Carlo standard error of `lambda*`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub estimator: String,
    /// Slope of `log risk` on `log n`; absent with fewer than three points.
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    /// `R^2` of `n * risk` on `log n`.
    pub n_risk_r_squared: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<RiskRecord>,
    pub curves: Vec<CurveSummary>,
    pub levels: Vec<LevelRecord>,
    pub config: ExperimentConfig,
}

fn quartiles(mut v: Vec<f64>) -> (f64, f64, f64) {
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        if i + 1 < v.len() {
            v[i] + frac * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    (at(0.25), at(0.5), at(0.75))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let r = DiffOrder::new(config.order)?;
    let ids: Vec<String> = config.estimators.iter().map(EstimatorConfig::id).collect();
    let exp = label_key(&config.name);
    let mut records = Vec::new();
    let mut levels = Vec::new();
    let mut failures = vec![0usize; ids.len()];
    for &n in &config.n_grid {
        let theta = sample_signal(&config.signal, n)?;
        let mut fitters = Vec::with_capacity(ids.len());
        for (e, id) in config.estimators.iter().zip(&ids) {
            let tag = if matches!(e.spec, EstimatorSpec::Penalized { lambda: Penalty::Cv { .. } }) {
                CV_TAG
            } else {
                LAMBDA_STAR_TAG
            };
            let res = resolve(&e.spec, &theta, r, config.sigma, derive_seed(&[config.seed, exp, n as u64, tag]))?;
            if let Some(value) = res.level {
                levels.push(LevelRecord {
                    n,
                    estimator: id.clone(),
                    value,
                    q1: None,
                    q3: None,
                    stderr: res.lambda_star.as_ref().map(|l| l.stderr),
                });
            }
            fitters.push(res.fitter);
        }
        let draws = replicate(&theta, &fitters, config.sigma, config.reps, &[config.seed, exp, n as u64]);
        for (i, id) in ids.iter().enumerate() {
            let est = summarize(draws.iter().map(|d| d.losses[i]), config.reps).map_err(|e| {
                log::error!("estimator {id} at n = {n}: {e}");
                e
            })?;
            failures[i] += est.failures;
            records.push(RiskRecord {
                n,
                estimator: id.clone(),
                risk: est.risk,
                stderr: est.stderr,
                reps: est.reps,
            });
            let chosen: Vec<f64> = draws.iter().filter_map(|d| d.lambdas[i]).collect();
            if !chosen.is_empty() {
                let (q1, med, q3) = quartiles(chosen);
                levels.push(LevelRecord {
                    n,
                    estimator: id.clone(),
                    value: med,
                    q1: Some(q1),
                    q3: Some(q3),
                    stderr: None,
                });
            }
        }
        log::info!("{}: n = {n} done", config.name);
    }
    let curves = ids
        .iter()
        .zip(failures)
        .map(|(id, failures)| {
            let pts: Vec<(usize, f64)> = records.iter().filter(|r| &r.estimator == id).map(|r| (r.n, r.risk)).collect();
            let fit = loglog_slope(&pts).ok();
            let x: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.0 as f64 * p.1).collect();
            CurveSummary {
                estimator: id.clone(),
                slope: fit.map(|f| f.0),
                r_squared: fit.map(|f| f.1),
                n_risk_r_squared: linear_fit(&x, &y).ok().map(|f| f.1),
                failures,
            }
        })
        .collect();
    Ok(ExperimentReport {
        records,
        curves,
        levels,
        config: config.clone(),
    })
}

impl ExperimentReport {
    pub fn curve(&self, estimator: &str) -> Option<&CurveSummary> {
        self.curves.iter().find(|c| c.estimator == estimator)
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for rec in &self.records {
            w.serialize(rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes the CSV and the JSON summary into `dir`; returns their paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(&self.config.output.csv);
        let json_path = dir.join(&self.config.output.summary);
        std::fs::write(&csv_path, self.csv_string()?)?;
        let summary = serde_json::json!({
            "curves": self.curves,
            "levels": self.levels,
            "config": self.config,
        });
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&json_path, text + "\n")?;
        Ok((csv_path, json_path))
    }
}
