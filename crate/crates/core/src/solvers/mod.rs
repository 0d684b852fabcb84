//! Penalized and constrained trend filtering, exact first-order TV, L0
//! segmentation, isotonic regression and cross-validated tuning.

pub(crate) mod active_set;
mod admm;
mod cv;
mod isotonic;
mod l0;
mod tv1d;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diff_raw, l1, max_abs, poly_project, DiffOrder, DtLeastSquares, Signal};
use active_set::{
    box_lsq, box_newton, constrained_pattern, pattern_dual, statuses_from_diffs, Bound, Status,
};
use admm::{AdmmExit, ZStep};

pub use cv::{select_lambda_cv, CvSelection};
pub use isotonic::isotonic;
pub use l0::fit_l0_r1;

/// How the penalized problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenalizedMethod {
    /// Projected Newton on the dual box problem with an exact active-set
    /// finish; splitting if that stalls.
    #[default]
    Auto,
    /// Splitting only (still finished exactly when `polish` is set).
    Splitting,
}

/// How the constrained problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstrainedMethod {
    /// Search over the multiplier, falling back to splitting if it fails.
    #[default]
    Auto,
    Splitting,
    /// Bisection over the penalty using penalized solves.
    PathSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Splitting penalty; adapted by residual balancing.
    pub rho: f64,
    pub warm_start: Option<Signal>,
    /// Try to finish with an exact active-set solve once the support settles.
    pub polish: bool,
    pub penalized_method: PenalizedMethod,
    pub constrained_method: ConstrainedMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 50_000,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            rho: 1.0,
            warm_start: None,
            polish: true,
            penalized_method: PenalizedMethod::Auto,
            constrained_method: ConstrainedMethod::Auto,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        for (name, v) in [("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol), ("rho", self.rho)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub fitted: Signal,
    pub objective: f64,
    /// `||D theta - z||` for splitting iterates; zero after an exact
    /// active-set finish.
    pub primal_residual: f64,
    /// Splitting dual residual, or the largest KKT violation after an exact
    /// active-set finish.
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Multiplier of the budget constraint (constrained fits only).
    pub multiplier: Option<f64>,
}

/// Penalty `sigma * n^(r-1) * lambda` used by the penalized estimator.
pub fn effective_penalty(n: usize, r: DiffOrder, sigma: f64, lambda: f64) -> f64 {
    sigma * (n as f64).powi(r.get() as i32 - 1) * lambda
}

/// Budget on `||D^(r) theta||_1` for a variation bound `v`.
pub fn constrained_budget(n: usize, r: DiffOrder, v: f64) -> f64 {
    v * (n as f64).powi(1 - r.get() as i32)
}

fn penalized_objective(y: &[f64], theta: &[f64], r: usize, mu: f64) -> f64 {
    let fit: f64 = y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    let pen = if mu > 0.0 { mu * l1(&diff_raw(theta, r)) } else { 0.0 };
    0.5 * fit + pen
}

fn squared_loss(y: &[f64], theta: &[f64]) -> f64 {
    0.5 * y.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn check_input(y: &Signal, r: DiffOrder, name: &'static str, value: f64, opts: &SolverOptions) -> Result<()> {
    r.check_len(y.len())?;
    opts.validate()?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::invalid(name, format!("must be nonnegative, got {value}")));
    }
    Ok(())
}

/// Unconstrained dual least-squares solution `argmin ||y - D^T u||`; its
/// sup-norm is the smallest penalty at which the fit is polynomial.
pub(crate) fn dual_ls(y: &[f64], r: DiffOrder) -> Result<Vec<f64>> {
    let cols: Vec<usize> = (0..y.len() - r.get()).collect();
    let sol = DtLeastSquares::new(y.len(), r.get(), &cols).solve(&[y])?;
    Ok(sol.into_iter().next().expect("one rhs").coef)
}

struct Penalized {
    result: SolverResult,
    statuses: Option<Vec<Status>>,
    /// Dual solution scaled to `|u| <= 1`.
    dual: Option<Vec<f64>>,
}

fn exact_result(y: &[f64], fitted: Vec<f64>, r: usize, mu: f64) -> Result<SolverResult> {
    let objective = penalized_objective(y, &fitted, r, mu);
    Ok(SolverResult {
        fitted: Signal::new(fitted)?,
        objective,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        converged: true,
        multiplier: None,
    })
}

type Exact = (SolverResult, Vec<Status>, Vec<f64>);

fn penalized_from_pattern(
    y: &[f64],
    r: DiffOrder,
    mu: f64,
    start: Vec<Status>,
    tol: f64,
) -> Result<Option<Exact>> {
    let g: Vec<f64> = y.iter().map(|v| v / mu).collect();
    let bounds = vec![Bound::Box; start.len()];
    let Some(sol) = box_lsq(&g, r, &bounds, start, tol, 100)? else {
        return Ok(None);
    };
    let fitted: Vec<f64> = sol.residual.iter().map(|v| v * mu).collect();
    let objective = penalized_objective(y, &fitted, r.get(), mu);
    let result = SolverResult {
        fitted: Signal::new(fitted)?,
        objective,
        primal_residual: 0.0,
        dual_residual: sol.violation,
        iterations: sol.iterations,
        converged: true,
        multiplier: None,
    };
    Ok(Some((result, sol.statuses, sol.u)))
}

fn penalized_newton(
    y: &[f64],
    r: DiffOrder,
    mu: f64,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Option<Exact>> {
    let g: Vec<f64> = y.iter().map(|v| v / mu).collect();
    let bounds = vec![Bound::Box; start.len()];
    let Some(sol) = box_newton(&g, r, &bounds, start, tol, max_iter)? else {
        return Ok(None);
    };
    let fitted: Vec<f64> = sol.residual.iter().map(|v| v * mu).collect();
    let objective = penalized_objective(y, &fitted, r.get(), mu);
    let result = SolverResult {
        fitted: Signal::new(fitted)?,
        objective,
        primal_residual: 0.0,
        dual_residual: sol.violation,
        iterations: sol.iterations,
        converged: true,
        multiplier: None,
    };
    Ok(Some((result, sol.statuses, sol.u)))
}

fn penalized_internal(
    y: &[f64],
    r: DiffOrder,
    mu: f64,
    opts: &SolverOptions,
    hint: Option<Vec<Status>>,
    warm_dual: Option<&[f64]>,
) -> Result<Penalized> {
    let ro = r.get();
    if mu == 0.0 {
        return Ok(Penalized {
            result: exact_result(y, y.to_vec(), ro, 0.0)?,
            statuses: None,
            dual: None,
        });
    }
    let u_ls = dual_ls(y, r)?;
    if max_abs(&u_ls) <= mu {
        return Ok(Penalized {
            result: exact_result(y, poly_project(y, ro), ro, mu)?,
            statuses: Some(vec![Status::Free; y.len() - ro]),
            dual: Some(u_ls.iter().map(|v| v / mu).collect()),
        });
    }
    let tol = opts.abs_tol;
    if opts.penalized_method == PenalizedMethod::Auto {
        let hint = hint.or_else(|| {
            opts.warm_start
                .as_ref()
                .filter(|w| w.len() == y.len())
                .map(|w| statuses_from_diffs(&diff_raw(w, ro), tol * (1.0 + max_abs(w))))
        });
        if let Some(start) = hint {
            if let Some((result, statuses, u)) = penalized_from_pattern(y, r, mu, start, tol)? {
                return Ok(Penalized {
                    result,
                    statuses: Some(statuses),
                    dual: Some(u),
                });
            }
        }
        if ro == 1 || warm_dual.is_some() {
            let start: Vec<f64> = match warm_dual {
                Some(u) => u.to_vec(),
                None => u_ls.iter().map(|v| v / mu).collect(),
            };
            if let Some((result, statuses, u)) = penalized_newton(y, r, mu, &start, tol, 200)? {
                return Ok(Penalized {
                    result,
                    statuses: Some(statuses),
                    dual: Some(u),
                });
            }
        }
        if ro >= 2 {
            let mut polish = |state: &admm::AdmmState| -> Result<Option<Exact>> {
                let start = statuses_from_diffs(&state.z, 0.0);
                let out = match penalized_from_pattern(y, r, mu, start.clone(), tol)? {
                    Some(found) => Some(found),
                    None => {
                        let g: Vec<f64> = y.iter().map(|v| v / mu).collect();
                        let u0 = pattern_dual(&g, r, &start)?;
                        penalized_newton(y, r, mu, &u0, tol, 50)?
                    }
                };
                Ok(out.map(|(mut res, st, u)| {
                    res.iterations += state.iterations;
                    (res, st, u)
                }))
            };
            match admm::run_tv(y, r, mu, opts, &mut polish)? {
                AdmmExit::Polished((result, statuses, u)) => {
                    return Ok(Penalized {
                        result,
                        statuses: Some(statuses),
                        dual: Some(u),
                    })
                }
                AdmmExit::Plain(state) => {
                    if state.converged {
                        let objective = penalized_objective(y, &state.theta, ro, mu);
                        return Ok(Penalized {
                            result: SolverResult {
                                fitted: Signal::new(state.theta)?,
                                objective,
                                primal_residual: state.primal_residual,
                                dual_residual: state.dual_residual,
                                iterations: state.iterations,
                                converged: true,
                                multiplier: None,
                            },
                            statuses: None,
                            dual: None,
                        });
                    }
                }
            }
        }
        log::debug!("exact penalized paths stalled (n={}, r={ro}, mu={mu}); plain splitting", y.len());
    }
    let mut polish = |state: &admm::AdmmState| -> Result<Option<Exact>> {
        let start = statuses_from_diffs(&state.z, 0.0);
        let out = penalized_from_pattern(y, r, mu, start, tol)?;
        Ok(out.map(|(mut res, st, u)| {
            res.iterations += state.iterations;
            (res, st, u)
        }))
    };
    match admm::run(y, r, ZStep::Shrink(mu), opts, &mut polish)? {
        AdmmExit::Polished((result, statuses, u)) => Ok(Penalized {
            result,
            statuses: Some(statuses),
            dual: Some(u),
        }),
        AdmmExit::Plain(state) => {
            let objective = penalized_objective(y, &state.theta, ro, mu);
            let dual = state.dual.iter().map(|v| v / mu).collect();
            Ok(Penalized {
                result: SolverResult {
                    fitted: Signal::new(state.theta)?,
                    objective,
                    primal_residual: state.primal_residual,
                    dual_residual: state.dual_residual,
                    iterations: state.iterations,
                    converged: state.converged,
                    multiplier: None,
                },
                statuses: None,
                dual: Some(dual),
            })
        }
    }
}

/// Minimizer of `1/2||y - theta||^2 + mu ||D^(r) theta||_1`.
pub fn fit_penalized(y: &Signal, r: DiffOrder, mu: f64, opts: &SolverOptions) -> Result<SolverResult> {
    check_input(y, r, "mu", mu, opts)?;
    let out = penalized_internal(y, r, mu, opts, None, None)?;
    if !out.result.converged {
        log::warn!(
            "penalized solve (n={}, r={}, mu={mu}) stopped after {} iterations",
            y.len(),
            r.get(),
            out.result.iterations
        );
    }
    Ok(out.result)
}

/// Penalized fit with the penalty given as `lambda` at noise level `sigma`.
pub fn fit_penalized_scaled(
    y: &Signal,
    r: DiffOrder,
    lambda: f64,
    sigma: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    fit_penalized(y, r, effective_penalty(y.len(), r, sigma, lambda), opts)
}

/// Exact minimizer of `1/2||y - theta||^2 + mu * V(theta)` for `r = 1`.
pub fn tv1d_exact(y: &Signal, mu: f64) -> Result<Signal> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid("mu", format!("must be nonnegative, got {mu}")));
    }
    Signal::new(tv1d::tv1d(y, mu))
}

fn constrained_result(y: &[f64], pat: active_set::ConstrainedPattern, iterations: usize) -> Result<SolverResult> {
    let objective = squared_loss(y, &pat.theta);
    Ok(SolverResult {
        fitted: Signal::new(pat.theta)?,
        objective,
        primal_residual: 0.0,
        dual_residual: pat.violation,
        iterations: iterations + pat.iterations,
        converged: true,
        multiplier: Some(pat.mu),
    })
}

fn constrained_splitting(
    y: &[f64],
    r: DiffOrder,
    budget: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let tol = opts.abs_tol;
    let mut polish = |state: &admm::AdmmState| -> Result<Option<SolverResult>> {
        let start = statuses_from_diffs(&state.z, 0.0);
        match constrained_pattern(y, r, budget, start, tol, 100)?.solved {
            Some(pat) => Ok(Some(constrained_result(y, pat, state.iterations)?)),
            None => Ok(None),
        }
    };
    match admm::run(y, r, ZStep::Ball(budget), opts, &mut polish)? {
        AdmmExit::Polished(res) => Ok(res),
        AdmmExit::Plain(state) => {
            let objective = squared_loss(y, &state.theta);
            Ok(SolverResult {
                fitted: Signal::new(state.theta)?,
                objective,
                primal_residual: state.primal_residual,
                dual_residual: state.dual_residual,
                iterations: state.iterations,
                converged: state.converged,
                multiplier: Some(max_abs(&state.dual)),
            })
        }
    }
}

/// Safeguarded search over the penalty. Each penalized fit fixes a support
/// pattern; the exact constrained solve for that pattern either certifies
/// the answer or predicts the next penalty, with bisection as the fallback.
fn constrained_path(
    y: &[f64],
    r: DiffOrder,
    budget: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let ro = r.get();
    let tol = opts.abs_tol;
    let mut lo = 0.0;
    let mut hi = max_abs(&dual_ls(y, r)?);
    let bisect = |lo: f64, hi: f64| {
        if lo == 0.0 {
            hi / 4.0
        } else if hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        }
    };
    let mut mid = bisect(lo, hi);
    let mut hint: Option<Vec<Status>> = None;
    let mut dual: Option<Vec<f64>> = None;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut total = 0;
    let mut predicted = false;
    for step in 1..=300 {
        let (theta, statuses) = if ro == 1 {
            let theta = tv1d::tv1d(y, mid);
            let st = statuses_from_diffs(&diff_raw(&theta, 1), 0.0);
            (theta, st)
        } else {
            let out = penalized_internal(y, r, mid, opts, hint.take(), dual.as_deref())?;
            total += out.result.iterations;
            let theta = out.result.fitted.into_inner();
            dual = out.dual;
            let st = out.statuses.unwrap_or_else(|| {
                statuses_from_diffs(&diff_raw(&theta, ro), tol * (1.0 + max_abs(&theta)))
            });
            (theta, st)
        };
        if l1(&diff_raw(&theta, ro)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        let out = constrained_pattern(y, r, budget, statuses.clone(), tol, 100)?;
        if let Some(pat) = out.solved {
            return constrained_result(y, pat, total + step);
        }
        hint = Some(statuses);
        best = Some((theta, mid));
        if hi - lo <= 1e-15 * hi {
            break;
        }
        // alternate predicted steps with bisection so the bracket keeps shrinking
        mid = match out.mu_hint.filter(|m| *m > lo && *m < hi && !predicted) {
            Some(m) => {
                predicted = true;
                m
            }
            None => {
                predicted = false;
                bisect(lo, hi)
            }
        };
    }
    let (theta, mu) = best.expect("at least one search step");
    let gap = (l1(&diff_raw(&theta, ro)) - budget).abs();
    let objective = squared_loss(y, &theta);
    log::warn!("constrained search ended without an exact certificate (budget gap {gap:e})");
    Ok(SolverResult {
        fitted: Signal::new(theta)?,
        objective,
        primal_residual: gap,
        dual_residual: f64::INFINITY,
        iterations: total,
        converged: false,
        multiplier: Some(mu),
    })
}

/// Minimizer of `1/2||y - theta||^2` subject to
/// `||D^(r) theta||_1 <= v * n^(1-r)`.
pub fn fit_constrained(y: &Signal, r: DiffOrder, v: f64, opts: &SolverOptions) -> Result<SolverResult> {
    check_input(y, r, "V", v, opts)?;
    let ro = r.get();
    let budget = constrained_budget(y.len(), r, v);
    if l1(&diff_raw(y, ro)) <= budget {
        return Ok(SolverResult {
            multiplier: Some(0.0),
            ..exact_result(y, y.to_vec(), ro, 0.0)?
        });
    }
    if budget == 0.0 {
        let fitted = poly_project(y, ro);
        let objective = squared_loss(y, &fitted);
        return Ok(SolverResult {
            fitted: Signal::new(fitted)?,
            objective,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            converged: true,
            multiplier: Some(max_abs(&dual_ls(y, r)?)),
        });
    }
    let res = match opts.constrained_method {
        ConstrainedMethod::PathSearch => constrained_path(y, r, budget, opts)?,
        ConstrainedMethod::Splitting => constrained_splitting(y, r, budget, opts)?,
        ConstrainedMethod::Auto => {
            let first = constrained_path(y, r, budget, opts)?;
            if first.converged {
                first
            } else {
                let second = constrained_splitting(y, r, budget, opts)?;
                if second.converged {
                    second
                } else {
                    first
                }
            }
        }
    };
    if !res.converged {
        log::warn!(
            "constrained solve (n={}, r={ro}, V={v}) did not converge",
            y.len()
        );
    }
    Ok(res)
}
