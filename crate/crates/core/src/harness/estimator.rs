use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knots::{knot_profile, DEFAULT_KNOT_TOL};
use crate::linalg::{variation, DiffOrder, Signal};
use crate::solvers::{
    effective_penalty, fit_constrained, fit_penalized, select_lambda_cv, tv1d_exact, SolverOptions,
};
use crate::subdiff::{lambda_star, tuning_rules, LambdaStar, TuningRule};

fn default_lambda_reps() -> usize {
    200
}

fn default_folds() -> usize {
    5
}

/// Budget of the constrained estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// `V = V^(r)(theta*)`.
    Oracle,
    Fixed(f64),
}

/// Penalty level `lambda` of the penalized estimator; the solver uses
/// `sigma * n^(r-1) * lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    Fixed(f64),
    LambdaStar {
        #[serde(default = "default_lambda_reps")]
        reps: usize,
    },
    Rule {
        rule: TuningRule,
        gamma: f64,
    },
    /// Cross-validated on each data set; `one_se` picks the one-standard-error
    /// level instead of the minimizer.
    Cv {
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default)]
        one_se: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    /// `theta_hat = Y`.
    Identity,
    Constrained { v: Budget },
    Penalized { lambda: Penalty },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: EstimatorSpec,
}

impl EstimatorConfig {
    pub fn new(spec: EstimatorSpec) -> Self {
        EstimatorConfig { label: None, spec }
    }

    pub fn labelled(label: &str, spec: EstimatorSpec) -> Self {
        EstimatorConfig {
            label: Some(label.to_string()),
            spec,
        }
    }

    pub fn id(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        match self.spec {
            EstimatorSpec::Identity => "identity".into(),
            EstimatorSpec::Constrained { v: Budget::Oracle } => "constrained-oracle".into(),
            EstimatorSpec::Constrained { v: Budget::Fixed(v) } => format!("constrained-{v}"),
            EstimatorSpec::Penalized { lambda } => match lambda {
                Penalty::Fixed(l) => format!("penalized-{l}"),
                Penalty::LambdaStar { .. } => "lambda-star".into(),
                Penalty::Rule { rule, gamma } => {
                    format!("rule-{}-{gamma}", format!("{rule:?}").to_lowercase())
                }
                Penalty::Cv { one_se: false, .. } => "cv-min".into(),
                Penalty::Cv { one_se: true, .. } => "cv-1se".into(),
            },
        }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidConfig(format!("estimator {}: {reason}", self.id())));
        match self.spec {
            EstimatorSpec::Identity | EstimatorSpec::Constrained { v: Budget::Oracle } => Ok(()),
            EstimatorSpec::Constrained { v: Budget::Fixed(v) } => {
                if v.is_finite() && v >= 0.0 {
                    Ok(())
                } else {
                    bad(format!("budget must be nonnegative, got {v}"))
                }
            }
            EstimatorSpec::Penalized { lambda } => match lambda {
                Penalty::Fixed(l) if !(l.is_finite() && l >= 0.0) => {
                    bad(format!("lambda must be nonnegative, got {l}"))
                }
                Penalty::LambdaStar { reps: 0 } => bad("lambda-star needs reps > 0".into()),
                Penalty::Rule { gamma, .. } if !(gamma.is_finite() && gamma > 0.0) => {
                    bad(format!("gamma must be positive, got {gamma}"))
                }
                Penalty::Rule { rule: TuningRule::Lach | TuningRule::Cdal, .. } if r != 1 => {
                    bad("this rule is for r = 1".into())
                }
                Penalty::Rule { rule: TuningRule::Lachr | TuningRule::Cdalr, .. } if r < 2 => {
                    bad("this rule is for r >= 2".into())
                }
                Penalty::Cv { folds, .. } if folds < 2 => bad("cv needs at least 2 folds".into()),
                _ => Ok(()),
            },
        }
    }
}

/// An estimator with every level fixed for one `theta*`.
#[derive(Debug, Clone)]
pub enum Fitter {
    Identity,
    Constrained { r: DiffOrder, v: f64 },
    Penalized { r: DiffOrder, mu: f64 },
    Cv { r: DiffOrder, folds: usize, one_se: bool, seed: u64 },
}

/// Outcome of one fit; `lambda` is the level chosen from the data, if any.
#[derive(Debug, Clone)]
pub struct Fit {
    pub fitted: Vec<f64>,
    pub lambda: Option<f64>,
}

/// Multipliers of `sqrt(n log(en))` times a noise estimate spanned by the
/// cross-validation grid.
const CV_GRID_POINTS: usize = 30;
const CV_GRID_LO: f64 = 1e-3;
const CV_GRID_HI: f64 = 10.0;

/// Noise level from the median absolute first difference.
fn mad_sigma(y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    (med / (0.6745 * std::f64::consts::SQRT_2)).max(f64::MIN_POSITIVE)
}

pub(crate) fn cv_grid(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let base = mad_sigma(y) * (n * (std::f64::consts::E * n).ln()).sqrt();
    let (lo, hi) = (CV_GRID_LO.ln(), CV_GRID_HI.ln());
    (0..CV_GRID_POINTS)
        .map(|i| base * (lo + (hi - lo) * i as f64 / (CV_GRID_POINTS - 1) as f64).exp())
        .collect()
}

fn checked(result: crate::solvers::SolverResult) -> Result<Vec<f64>> {
    if !result.converged {
        return Err(Error::NotConverged {
            iterations: result.iterations,
        });
    }
    Ok(result.fitted.into_inner())
}

impl Fitter {
    /// `draw` indexes the replication; only the cross-validation folds use it.
    pub fn fit(&self, y: &Signal, draw: u64) -> Result<Fit> {
        let opts = SolverOptions::default();
        let fitted = match *self {
            Fitter::Identity => y.as_slice().to_vec(),
            Fitter::Constrained { r, v } => checked(fit_constrained(y, r, v, &opts)?)?,
            Fitter::Penalized { r, mu } => penalized(y, r, mu, &opts)?,
            Fitter::Cv { r, folds, one_se, seed } => {
                let grid = cv_grid(y.as_slice());
                let sel = select_lambda_cv(y, r, &grid, folds, crate::rng::derive_seed(&[seed, draw]))?;
                let lambda = if one_se { sel.lambda_one_se } else { sel.lambda_min };
                let mu = (y.len() as f64).powi(r.get() as i32 - 1) * lambda;
                return Ok(Fit {
                    fitted: penalized(y, r, mu, &opts)?,
                    lambda: Some(lambda),
                });
            }
        };
        Ok(Fit { fitted, lambda: None })
    }
}

fn penalized(y: &Signal, r: DiffOrder, mu: f64, opts: &SolverOptions) -> Result<Vec<f64>> {
    if r.get() == 1 {
        return Ok(tv1d_exact(y, mu)?.into_inner());
    }
    checked(fit_penalized(y, r, mu, opts)?)
}

/// Levels fixed for one grid point, reported alongside the risks.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub fitter: Fitter,
    /// `V` for constrained estimators, `lambda` for penalized ones.
    pub level: Option<f64>,
    pub lambda_star: Option<LambdaStar>,
}

/// Fixes the tuning of `spec` for target `theta_star`. `seed` keys the
/// Monte-Carlo draws of `lambda*` and the cross-validation folds.
pub fn resolve(spec: &EstimatorSpec, theta_star: &Signal, r: DiffOrder, sigma: f64, seed: u64) -> Result<Resolved> {
    let n = theta_star.len();
    let penalized = |lambda: f64| Fitter::Penalized {
        r,
        mu: effective_penalty(n, r, sigma, lambda),
    };
    Ok(match *spec {
        EstimatorSpec::Identity => Resolved {
            fitter: Fitter::Identity,
            level: None,
            lambda_star: None,
        },
        EstimatorSpec::Constrained { v } => {
            let v = match v {
                Budget::Oracle => variation(theta_star, r)?,
                Budget::Fixed(v) => v,
            };
            Resolved {
                fitter: Fitter::Constrained { r, v },
                level: Some(v),
                lambda_star: None,
            }
        }
        EstimatorSpec::Penalized { lambda } => match lambda {
            Penalty::Fixed(l) => Resolved {
                fitter: penalized(l),
                level: Some(l),
                lambda_star: None,
            },
            Penalty::LambdaStar { reps } => {
                let ls = lambda_star(theta_star, r, reps, seed)?;
                Resolved {
                    fitter: penalized(ls.lambda_star),
                    level: Some(ls.lambda_star),
                    lambda_star: Some(ls),
                }
            }
            Penalty::Rule { rule, gamma } => {
                let profile = knot_profile(theta_star, r, DEFAULT_KNOT_TOL)?;
                let l = tuning_rules(&profile, gamma, rule)?;
                Resolved {
                    fitter: penalized(l),
                    level: Some(l),
                    lambda_star: None,
                }
            }
            Penalty::Cv { folds, one_se } => Resolved {
                fitter: Fitter::Cv { r, folds, one_se, seed },
                level: None,
                lambda_star: None,
            },
        },
    })
}
