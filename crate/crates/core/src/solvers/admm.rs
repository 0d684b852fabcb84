//! Alternating-direction splitting on `theta`, `z = D^(r) theta`.

use crate::error::Result;
use crate::linalg::{diff_raw, diff_transpose, dtd_band, norm2, BandedCholesky, DiffOrder};

use super::SolverOptions;

#[derive(Debug, Clone, Copy)]
pub(crate) enum ZStep {
    /// Soft thresholding at `mu / rho`.
    Shrink(f64),
    /// Euclidean projection onto the L1 ball of the given radius.
    Ball(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct AdmmState {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    /// Unscaled dual variable `rho * w`.
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

/// Outcome of a polishing attempt; `Some` stops the iterations.
pub(crate) type Polish<'a, T> = dyn FnMut(&AdmmState) -> Result<Option<T>> + 'a;

pub(crate) enum AdmmExit<T> {
    Polished(T),
    Plain(AdmmState),
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Projection onto `{x : ||x||_1 <= radius}` by sorting.
pub(crate) fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (j + 1) as f64;
        if m - t > 0.0 {
            shift = t;
        } else {
            break;
        }
    }
    v.iter().map(|x| soft(*x, shift)).collect()
}

pub(crate) fn run<T>(
    y: &[f64],
    r: DiffOrder,
    step: ZStep,
    opts: &SolverOptions,
    polish: &mut Polish<'_, T>,
) -> Result<AdmmExit<T>> {
    let n = y.len();
    let ro = r.get();
    let m = n - ro;
    let mut rho = opts.rho;
    let mut chol = BandedCholesky::factor(n, ro, &dtd_band(n, ro, rho))?;
    let mut theta = match &opts.warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        _ => y.to_vec(),
    };
    let mut dtheta = diff_raw(&theta, ro);
    let mut z = match step {
        ZStep::Shrink(_) => dtheta.clone(),
        ZStep::Ball(radius) => project_l1_ball(&dtheta, radius),
    };
    // scaled dual
    let mut w = vec![0.0; m];
    let mut next_polish = 20;
    let mut state = AdmmState {
        theta: Vec::new(),
        z: Vec::new(),
        dual: Vec::new(),
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        converged: false,
    };
    let mut v = vec![0.0; m];
    for it in 1..=opts.max_iterations {
        for j in 0..m {
            v[j] = z[j] - w[j];
        }
        let dt = diff_transpose(&v, r);
        for i in 0..n {
            theta[i] = y[i] + rho * dt[i];
        }
        chol.solve_in_place(&mut theta);
        dtheta = diff_raw(&theta, ro);
        for j in 0..m {
            v[j] = dtheta[j] + w[j];
        }
        let z_new = match step {
            ZStep::Shrink(mu) => v.iter().map(|x| soft(*x, mu / rho)).collect(),
            ZStep::Ball(radius) => project_l1_ball(&v, radius),
        };
        let mut dz = vec![0.0; m];
        let mut rp = vec![0.0; m];
        for j in 0..m {
            dz[j] = z_new[j] - z[j];
            rp[j] = dtheta[j] - z_new[j];
            w[j] += rp[j];
        }
        z = z_new;
        let primal = norm2(&rp);
        let dual = rho * norm2(&diff_transpose(&dz, r));
        let eps_pri =
            (m as f64).sqrt() * opts.abs_tol + opts.rel_tol * norm2(&dtheta).max(norm2(&z));
        let eps_dual = (n as f64).sqrt() * opts.abs_tol
            + opts.rel_tol * rho * norm2(&diff_transpose(&w, r));
        let converged = primal <= eps_pri && dual <= eps_dual;
        let last = it == opts.max_iterations;
        if converged || last || it == next_polish {
            state.theta = theta.clone();
            state.z = z.clone();
            state.dual = w.iter().map(|x| rho * x).collect();
            state.iterations = it;
            state.primal_residual = primal;
            state.dual_residual = dual;
            state.converged = converged;
            if opts.polish {
                if let Some(t) = polish(&state)? {
                    return Ok(AdmmExit::Polished(t));
                }
            }
            if converged || last {
                return Ok(AdmmExit::Plain(state));
            }
            if it == next_polish {
                next_polish *= 2;
            }
        }
        if it % 10 == 0 && it <= 2000 {
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                w.iter_mut().for_each(|x| *x /= factor);
                chol = BandedCholesky::factor(n, ro, &dtd_band(n, ro, rho))?;
            }
        }
    }
    Ok(AdmmExit::Plain(state))
}

/// Splitting on `alpha = D^(r-1) theta` with the penalty moved onto
/// `||D^(1) alpha||_1`, so the `alpha` step is an exact 1-D TV solve.
/// Needs `r >= 2`. The reported `z` is `D^(1) alpha`; `dual` is left empty.
pub(crate) fn run_tv<T>(
    y: &[f64],
    r: DiffOrder,
    mu: f64,
    opts: &SolverOptions,
    polish: &mut Polish<'_, T>,
) -> Result<AdmmExit<T>> {
    let n = y.len();
    let q = r.get() - 1;
    debug_assert!(q >= 1);
    let lower = DiffOrder::new(q)?;
    let m = n - q;
    let mut rho = opts.rho * mu;
    let mut chol = BandedCholesky::factor(n, q, &dtd_band(n, q, rho))?;
    let mut theta = match &opts.warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        _ => y.to_vec(),
    };
    let mut alpha = super::tv1d::tv1d(&diff_raw(&theta, q), mu / rho);
    let mut w = vec![0.0; m];
    let mut next_polish = 10;
    let mut v = vec![0.0; m];
    let mut state = AdmmState {
        theta: Vec::new(),
        z: Vec::new(),
        dual: Vec::new(),
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        converged: false,
    };
    for it in 1..=opts.max_iterations {
        for j in 0..m {
            v[j] = alpha[j] + w[j];
        }
        let dt = diff_transpose(&v, lower);
        for i in 0..n {
            theta[i] = y[i] + rho * dt[i];
        }
        chol.solve_in_place(&mut theta);
        let dtheta = diff_raw(&theta, q);
        for j in 0..m {
            v[j] = dtheta[j] - w[j];
        }
        let alpha_new = super::tv1d::tv1d(&v, mu / rho);
        let mut da = vec![0.0; m];
        let mut rp = vec![0.0; m];
        for j in 0..m {
            da[j] = alpha_new[j] - alpha[j];
            rp[j] = alpha_new[j] - dtheta[j];
            w[j] += rp[j];
        }
        alpha = alpha_new;
        let primal = norm2(&rp);
        let dual = rho * norm2(&diff_transpose(&da, lower));
        let eps_pri =
            (m as f64).sqrt() * opts.abs_tol + opts.rel_tol * norm2(&dtheta).max(norm2(&alpha));
        let eps_dual = (n as f64).sqrt() * opts.abs_tol
            + opts.rel_tol * rho * norm2(&diff_transpose(&w, lower));
        let converged = primal <= eps_pri && dual <= eps_dual;
        let last = it == opts.max_iterations;
        if converged || last || it == next_polish {
            state.theta = theta.clone();
            state.z = diff_raw(&alpha, 1);
            state.iterations = it;
            state.primal_residual = primal;
            state.dual_residual = dual;
            state.converged = converged;
            if opts.polish {
                if let Some(t) = polish(&state)? {
                    return Ok(AdmmExit::Polished(t));
                }
            }
            if converged || last {
                return Ok(AdmmExit::Plain(state));
            }
            if it == next_polish {
                next_polish = next_polish * 3 / 2;
            }
        }
        if it % 10 == 0 && it <= 2000 {
            let factor = if primal > 10.0 * dual {
                2.0
            } else if dual > 10.0 * primal {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                w.iter_mut().for_each(|x| *x /= factor);
                chol = BandedCholesky::factor(n, q, &dtd_band(n, q, rho))?;
            }
        }
    }
    Ok(AdmmExit::Plain(state))
}
