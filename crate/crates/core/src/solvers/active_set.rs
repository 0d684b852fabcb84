//! Active-set refinement for problems whose dual lives on the rows of
//! `D^(r)`: given a guess of which dual coordinates sit at their bounds, the
//! remaining ones are found by a banded least-squares solve, and the guess is
//! corrected until the KKT conditions hold.

use crate::error::Result;
use crate::linalg::{diff_raw, diff_transpose, max_abs, DiffOrder, DtLeastSquares};

/// Status of one dual coordinate `u_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Free,
    Upper,
    Lower,
}

impl Status {
    pub fn from_sign(x: f64) -> Status {
        if x > 0.0 {
            Status::Upper
        } else if x < 0.0 {
            Status::Lower
        } else {
            Status::Free
        }
    }

    fn value(self) -> f64 {
        match self {
            Status::Free => 0.0,
            Status::Upper => 1.0,
            Status::Lower => -1.0,
        }
    }
}

/// Statuses read off a difference vector: nonzero entries sit at the bound
/// matching their sign.
pub(crate) fn statuses_from_diffs(d: &[f64], tol: f64) -> Vec<Status> {
    d.iter()
        .map(|v| if v.abs() > tol { Status::from_sign(*v) } else { Status::Free })
        .collect()
}

/// Bound on one dual coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Bound {
    /// `|u_j| <= 1` (scaled by the problem's bound).
    Box,
    /// `u_j` pinned to the given value.
    Locked(f64),
}

/// Solution of `min ||g - D^T u||` over `u` with `|u_j| <= 1` on box
/// coordinates and locked values elsewhere.
#[derive(Debug, Clone)]
pub(crate) struct BoxLsqSolution {
    pub u: Vec<f64>,
    /// `g - D^T u`.
    pub residual: Vec<f64>,
    pub statuses: Vec<Status>,
    pub iterations: usize,
    /// Largest KKT violation at the returned point.
    pub violation: f64,
}

fn col_lists(statuses: &[Status], bounds: &[Bound]) -> Vec<usize> {
    statuses
        .iter()
        .zip(bounds)
        .enumerate()
        .filter(|(_, (s, b))| **s == Status::Free && matches!(b, Bound::Box))
        .map(|(j, _)| j)
        .collect()
}

/// Primal-dual active set iterations for the box-constrained problem.
///
/// Returns `Ok(None)` when the active set does not settle within `max_iter`.
pub(crate) fn box_lsq(
    g: &[f64],
    r: DiffOrder,
    bounds: &[Bound],
    start: Vec<Status>,
    tol: f64,
    max_iter: usize,
) -> Result<Option<BoxLsqSolution>> {
    let n = g.len();
    let m = bounds.len();
    debug_assert_eq!(m + r.get(), n);
    let mut statuses = start;
    let mut best_violations = usize::MAX;
    let mut stalls = 0;
    for it in 1..=max_iter {
        let mut fixed = vec![0.0; m];
        for j in 0..m {
            fixed[j] = match bounds[j] {
                Bound::Locked(v) => v,
                Bound::Box => statuses[j].value(),
            };
        }
        let dt_fixed = diff_transpose(&fixed, r);
        let h: Vec<f64> = g.iter().zip(&dt_fixed).map(|(a, b)| a - b).collect();
        let cols = col_lists(&statuses, bounds);
        let sol = DtLeastSquares::new(n, r.get(), &cols).solve(&[&h])?;
        let mut u = fixed;
        for (a, &j) in cols.iter().enumerate() {
            u[j] = sol[0].coef[a];
        }
        let residual = sol.into_iter().next().expect("one rhs").residual;
        // gradient of 1/2||g - D^T u||^2 is -D residual
        let mult = diff_raw(&residual, r.get());
        let mult_tol = tol * (1.0 + max_abs(&mult));
        let mut violations = 0;
        let mut violation = 0.0f64;
        let mut next = statuses.clone();
        for j in 0..m {
            if let Bound::Locked(_) = bounds[j] {
                continue;
            }
            match statuses[j] {
                Status::Free => {
                    let excess = u[j].abs() - 1.0;
                    if excess > tol {
                        next[j] = Status::from_sign(u[j]);
                        violations += 1;
                    }
                    violation = violation.max(excess.max(0.0));
                }
                Status::Upper => {
                    if mult[j] < -mult_tol {
                        next[j] = Status::Free;
                        violations += 1;
                    }
                    violation = violation.max((-mult[j]).max(0.0));
                }
                Status::Lower => {
                    if mult[j] > mult_tol {
                        next[j] = Status::Free;
                        violations += 1;
                    }
                    violation = violation.max(mult[j].max(0.0));
                }
            }
        }
        if violations == 0 {
            return Ok(Some(BoxLsqSolution {
                u,
                residual,
                statuses,
                iterations: it,
                violation,
            }));
        }
        if violations < best_violations {
            best_violations = violations;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > 8 {
                return Ok(None);
            }
        }
        statuses = next;
    }
    Ok(None)
}

fn clip(u: f64, bound: Bound) -> f64 {
    match bound {
        Bound::Box => u.clamp(-1.0, 1.0),
        Bound::Locked(v) => v,
    }
}

/// Dual point implied by a pattern: bound coordinates at their bounds, the
/// rest from the least-squares solve, clipped into the box.
pub(crate) fn pattern_dual(g: &[f64], r: DiffOrder, statuses: &[Status]) -> Result<Vec<f64>> {
    let fixed: Vec<f64> = statuses.iter().map(|s| s.value()).collect();
    let dt = diff_transpose(&fixed, r);
    let h: Vec<f64> = g.iter().zip(&dt).map(|(a, b)| a - b).collect();
    let cols: Vec<usize> = (0..statuses.len()).filter(|&j| statuses[j] == Status::Free).collect();
    let sol = DtLeastSquares::new(g.len(), r.get(), &cols).solve(&[&h])?;
    let mut u = fixed;
    for (a, &j) in cols.iter().enumerate() {
        u[j] = sol[0].coef[a].clamp(-1.0, 1.0);
    }
    Ok(u)
}

/// Projected Newton iterations for the same box-constrained problem,
/// finished by [`box_lsq`] once the binding set stops changing.
///
/// Free coordinates take a Newton step (a banded least-squares solve),
/// binding ones a scaled gradient step, and an Armijo search runs along the
/// projection arc.
pub(crate) fn box_newton(
    g: &[f64],
    r: DiffOrder,
    bounds: &[Bound],
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Option<BoxLsqSolution>> {
    let n = g.len();
    let m = bounds.len();
    let ro = r.get();
    let hdiag = crate::linalg::diff_coefficients(ro).iter().map(|c| c * c).sum::<f64>();
    let mut u: Vec<f64> = start.iter().zip(bounds).map(|(v, b)| clip(*v, *b)).collect();
    let residual_of = |u: &[f64]| -> Vec<f64> {
        let dt = diff_transpose(u, r);
        g.iter().zip(&dt).map(|(a, b)| a - b).collect()
    };
    let mut res = residual_of(&u);
    let mut f = 0.5 * res.iter().map(|v| v * v).sum::<f64>();
    let mut prev: Option<Vec<Status>> = None;
    let mut finish_tries = 0;
    for _ in 0..max_iter {
        let grad: Vec<f64> = diff_raw(&res, ro).iter().map(|v| -v).collect();
        let mut pg = 0.0f64;
        for j in 0..m {
            if let Bound::Box = bounds[j] {
                pg = pg.max((u[j] - clip(u[j] - grad[j], Bound::Box)).abs());
            }
        }
        let eps = pg.min(1e-3);
        let statuses: Vec<Status> = (0..m)
            .map(|j| match bounds[j] {
                Bound::Box if u[j] >= 1.0 - eps && grad[j] < 0.0 => Status::Upper,
                Bound::Box if u[j] <= -1.0 + eps && grad[j] > 0.0 => Status::Lower,
                _ => Status::Free,
            })
            .collect();
        let settled = prev.as_ref() == Some(&statuses);
        if (settled || pg <= tol) && finish_tries < 20 {
            finish_tries += 1;
            if let Some(sol) = box_lsq(g, r, bounds, statuses.clone(), tol, 3)? {
                return Ok(Some(sol));
            }
        }
        let cols: Vec<usize> = (0..m)
            .filter(|&j| statuses[j] == Status::Free && matches!(bounds[j], Bound::Box))
            .collect();
        let step = DtLeastSquares::new(n, ro, &cols).solve(&[&res])?;
        let mut d = vec![0.0; m];
        for (a, &j) in cols.iter().enumerate() {
            d[j] = step[0].coef[a];
        }
        for j in 0..m {
            if statuses[j] != Status::Free {
                d[j] = -grad[j] / hdiag;
            }
        }
        let newton_gain: f64 = cols.iter().map(|&j| -grad[j] * d[j]).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial: Vec<f64> = (0..m).map(|j| clip(u[j] + alpha * d[j], bounds[j])).collect();
            let trial_res = residual_of(&trial);
            let ft = 0.5 * trial_res.iter().map(|v| v * v).sum::<f64>();
            let bound_gain: f64 = (0..m)
                .filter(|&j| statuses[j] != Status::Free)
                .map(|j| grad[j] * (u[j] - trial[j]))
                .sum();
            if f - ft >= 1e-4 * (alpha * newton_gain + bound_gain) {
                let moved = trial.iter().zip(&u).any(|(a, b)| a != b);
                u = trial;
                res = trial_res;
                f = ft;
                accepted = moved;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no progress possible at working precision
            return box_lsq(g, r, bounds, statuses, tol, 3);
        }
        prev = Some(statuses);
    }
    Ok(None)
}

/// Solution of the budget-constrained problem for a fixed pattern.
#[derive(Debug, Clone)]
pub(crate) struct ConstrainedPattern {
    pub theta: Vec<f64>,
    pub mu: f64,
    pub iterations: usize,
    pub violation: f64,
}

/// Outcome of [`constrained_pattern`]; `mu_hint` is the multiplier that
/// meets the budget under the starting pattern, when one exists.
#[derive(Debug, Clone)]
pub(crate) struct PatternOutcome {
    pub solved: Option<ConstrainedPattern>,
    pub mu_hint: Option<f64>,
}

/// Active-set iterations for `min 1/2||y - theta||^2` s.t. `||D theta||_1 <= budget`
/// when the constraint is active: for a pattern the fit is affine in the
/// multiplier `mu`, which is then fixed by the budget.
pub(crate) fn constrained_pattern(
    y: &[f64],
    r: DiffOrder,
    budget: f64,
    start: Vec<Status>,
    tol: f64,
    max_iter: usize,
) -> Result<PatternOutcome> {
    let mut mu_hint = None;
    let solved = constrained_pattern_inner(y, r, budget, start, tol, max_iter, &mut mu_hint)?;
    Ok(PatternOutcome { solved, mu_hint })
}

fn constrained_pattern_inner(
    y: &[f64],
    r: DiffOrder,
    budget: f64,
    start: Vec<Status>,
    tol: f64,
    max_iter: usize,
    mu_hint: &mut Option<f64>,
) -> Result<Option<ConstrainedPattern>> {
    let n = y.len();
    let m = n - r.get();
    let mut statuses = start;
    let mut best_violations = usize::MAX;
    let mut stalls = 0;
    for it in 1..=max_iter {
        let signs: Vec<f64> = statuses.iter().map(|s| s.value()).collect();
        if signs.iter().all(|s| *s == 0.0) {
            return Ok(None);
        }
        let q = diff_transpose(&signs, r);
        let cols: Vec<usize> = (0..m).filter(|&j| statuses[j] == Status::Free).collect();
        let sols = DtLeastSquares::new(n, r.get(), &cols).solve(&[y, &q])?;
        let (a, b) = (&sols[0], &sols[1]);
        let da = diff_raw(&a.residual, r.get());
        let db = diff_raw(&b.residual, r.get());
        let sa: f64 = (0..m).map(|j| signs[j] * da[j]).sum();
        let sb: f64 = (0..m).map(|j| signs[j] * db[j]).sum();
        if sb <= 0.0 {
            return Ok(None);
        }
        let mu = (sa - budget) / sb;
        if it == 1 && mu > 0.0 {
            *mu_hint = Some(mu);
        }
        if mu <= 0.0 {
            return Ok(None);
        }
        let theta: Vec<f64> = a
            .residual
            .iter()
            .zip(&b.residual)
            .map(|(p, q)| p - mu * q)
            .collect();
        let dtheta: Vec<f64> = da.iter().zip(&db).map(|(p, q)| p - mu * q).collect();
        let scale = 1.0 + max_abs(&dtheta);
        let mut u = signs.clone();
        for (k, &j) in cols.iter().enumerate() {
            u[j] = a.coef[k] / mu - b.coef[k];
        }
        let mut next = statuses.clone();
        let mut violations = 0;
        let mut violation = 0.0f64;
        for j in 0..m {
            match statuses[j] {
                Status::Free => {
                    let excess = u[j].abs() - 1.0;
                    if excess > tol {
                        next[j] = Status::from_sign(u[j]);
                        violations += 1;
                    }
                    violation = violation.max(excess.max(0.0));
                }
                s => {
                    let signed = s.value() * dtheta[j];
                    if signed < -tol * scale {
                        next[j] = Status::Free;
                        violations += 1;
                    }
                    violation = violation.max((-signed / scale).max(0.0));
                }
            }
        }
        if violations == 0 {
            return Ok(Some(ConstrainedPattern {
                theta,
                mu,
                iterations: it,
                violation,
            }));
        }
        if violations < best_violations {
            best_violations = violations;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > 8 {
                return Ok(None);
            }
        }
        statuses = next;
    }
    Ok(None)
}
