//! `lambda(z)`: the dilation of the subdifferential that comes closest to `z`.

use super::{affine_coefficients, min_norm_affine, warn_conditioning, SubdiffSpec};
use crate::error::{Error, Result};
use crate::linalg::{diff_raw, diff_transpose, dot, max_abs, norm2, DtLeastSquares};
use crate::solvers::active_set::{box_newton, Bound, Status};
use crate::solvers::SolverOptions;

struct Joint {
    solved: Option<f64>,
    /// Optimal scale for the starting pattern, when positive.
    hint: Option<f64>,
}

/// Active-set iterations in `(lambda, u)`: sign rows sit at `lambda * s`,
/// bound box rows at `+-lambda`, and the rest plus `lambda` come from one
/// least-squares solve.
fn joint_pattern(
    z: &[f64],
    spec: &SubdiffSpec,
    start: Vec<Status>,
    tol: f64,
    max_iter: usize,
) -> Result<Joint> {
    let n = spec.n;
    let r = spec.order()?;
    let bounds = spec.bounds();
    let m = bounds.len();
    let mut statuses = start;
    let mut hint = None;
    let mut best = usize::MAX;
    let mut stalls = 0;
    for it in 1..=max_iter {
        let mut e = vec![0.0; m];
        let mut cols = Vec::new();
        for j in 0..m {
            e[j] = match (bounds[j], statuses[j]) {
                (Bound::Locked(s), _) => s,
                (Bound::Box, Status::Upper) => 1.0,
                (Bound::Box, Status::Lower) => -1.0,
                (Bound::Box, Status::Free) => {
                    cols.push(j);
                    0.0
                }
            };
        }
        let p = diff_transpose(&e, r);
        let sols = DtLeastSquares::new(n, r.get(), &cols).solve(&[z, &p])?;
        let (zs, ps) = (&sols[0], &sols[1]);
        let pp = dot(&ps.residual, &ps.residual);
        if pp <= 0.0 {
            break;
        }
        let lambda = dot(&zs.residual, &ps.residual) / pp;
        if it == 1 && lambda > 0.0 {
            hint = Some(lambda);
        }
        if lambda <= 0.0 {
            break;
        }
        let mut u: Vec<f64> = e.iter().map(|v| lambda * v).collect();
        for (a, &j) in cols.iter().enumerate() {
            u[j] = zs.coef[a] - lambda * ps.coef[a];
        }
        let rho: Vec<f64> = zs
            .residual
            .iter()
            .zip(&ps.residual)
            .map(|(a, b)| a - lambda * b)
            .collect();
        let mult = diff_raw(&rho, r.get());
        let mult_tol = tol * (1.0 + max_abs(&mult));
        let mut next = statuses.clone();
        let mut violations = 0;
        for j in 0..m {
            if let Bound::Locked(_) = bounds[j] {
                continue;
            }
            match statuses[j] {
                Status::Free => {
                    if u[j].abs() > lambda * (1.0 + tol) {
                        next[j] = Status::from_sign(u[j]);
                        violations += 1;
                    }
                }
                Status::Upper => {
                    if mult[j] < -mult_tol {
                        next[j] = Status::Free;
                        violations += 1;
                    }
                }
                Status::Lower => {
                    if mult[j] > mult_tol {
                        next[j] = Status::Free;
                        violations += 1;
                    }
                }
            }
        }
        if violations == 0 {
            return Ok(Joint {
                solved: Some(lambda),
                hint,
            });
        }
        if violations < best {
            best = violations;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > 8 {
                break;
            }
        }
        statuses = next;
    }
    Ok(Joint { solved: None, hint })
}

/// Scale `lambda >= 0` minimizing the distance from `z` to `lambda` times
/// the subdifferential, over `(v, lambda)` jointly.
///
/// An active-set solve in `(lambda, u)` is tried first. If it cycles, a
/// safeguarded search over `lambda` follows: each step solves the bounded
/// problem at fixed `lambda`, whose pattern either certifies the optimum or
/// predicts the next `lambda`, and the derivative sign keeps a bracket.
pub fn lambda_z(spec: &SubdiffSpec, z: &[f64], opts: &SolverOptions) -> Result<f64> {
    spec.require_signs()?;
    opts.validate()?;
    if z.len() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: z.len(),
        });
    }
    warn_conditioning(spec.r, spec.n);
    let r = spec.order()?;
    let bounds = spec.bounds();
    let m = bounds.len();
    // lambda = 0 is optimal iff no feasible direction decreases the distance
    let dz = diff_raw(z, r.get());
    let slope: f64 = (0..m)
        .map(|j| match bounds[j] {
            Bound::Locked(s) => s * dz[j],
            Bound::Box => dz[j].abs(),
        })
        .sum();
    if slope <= 0.0 {
        return Ok(0.0);
    }
    let tol = opts.abs_tol;
    let first = joint_pattern(z, spec, vec![Status::Free; m], tol, 50)?;
    if let Some(lambda) = first.solved {
        return Ok(lambda);
    }
    let mut lo = 0.0;
    let mut hi = norm2(z) / norm2(&min_norm_affine(spec)?) * (1.0 + 1e-9);
    let mut lambda = first.hint.filter(|l| *l < hi).unwrap_or(0.5 * hi);
    let mut t: Vec<f64> = affine_coefficients(spec)?
        .iter()
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();
    let mut predicted = true;
    for _ in 0..200 {
        let g: Vec<f64> = z.iter().map(|v| v / lambda).collect();
        let sol = box_newton(&g, r, &bounds, &t, tol, 500)?
            .ok_or(Error::NotConverged { iterations: 500 })?;
        // sign of the derivative of the squared distance at lambda
        let dt = diff_transpose(&sol.u, r);
        if dot(&sol.residual, &dt) < 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        t = sol.u;
        let out = joint_pattern(z, spec, sol.statuses, tol, 30)?;
        if let Some(found) = out.solved {
            return Ok(found);
        }
        if hi - lo <= 1e-13 * hi {
            return Ok(0.5 * (lo + hi));
        }
        lambda = match out.hint.filter(|l| *l > lo && *l < hi && !predicted) {
            Some(l) => {
                predicted = true;
                l
            }
            None => {
                predicted = false;
                0.5 * (lo + hi)
            }
        };
    }
    Err(Error::NotConverged { iterations: 200 })
}
