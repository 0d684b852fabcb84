//! The subdifferential of `theta -> ||D^(r) theta||_1`, its minimum-norm
//! elements, the scale `lambda(z)` of the closest dilated subdifferential,
//! its Gaussian average and the explicit tuning rules.
//!
//! Everything is expressed through `a_j(v) = sum_(i >= j) C(r+i-j-1, r-1) v_i`.
//! Vectors with `a_1 = ... = a_r = 0` are exactly `D^T u`, and then
//! `a_(r+j) = u_j`, so the constraints become bounds on `u`.

use std::sync::Once;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knots::{knot_profile, KnotProfile, DEFAULT_KNOT_TOL};
use crate::linalg::{diff_raw, diff_transpose, norm2, DiffOrder, DtLeastSquares, Signal};
use crate::rng::{gaussian_vector, stream_rng};
use crate::solvers::active_set::{box_newton, Bound};
use crate::solvers::SolverOptions;

mod lambda;

pub use lambda::lambda_z;

/// Row classification of the subdifferential at some `theta*`. Rows are
/// 1-based as in `a_1, ..., a_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdiffSpec {
    pub r: usize,
    pub n: usize,
    /// `1..=r`, where `a_j(v) = 0`.
    pub zero_rows: Vec<usize>,
    /// Rows `j > r` with `(D^(r) theta*)_(j-r) != 0`, where `a_j(v) = s_j`.
    pub sign_rows: Vec<(usize, i8)>,
    /// Remaining rows, where `|a_j(v)| <= 1`.
    pub box_rows: Vec<usize>,
}

impl SubdiffSpec {
    /// Spec with the given sign rows; every other row above `r` is a box row.
    pub fn new(r: DiffOrder, n: usize, sign_rows: Vec<(usize, i8)>) -> Result<Self> {
        r.check_len(n)?;
        let r = r.get();
        let mut is_sign = vec![false; n + 1];
        for &(j, s) in &sign_rows {
            if j <= r || j > n {
                return Err(Error::InvalidSpec(format!("sign row {j} outside {}..={n}", r + 1)));
            }
            if s != 1 && s != -1 {
                return Err(Error::InvalidSpec(format!("sign {s} at row {j}")));
            }
            if is_sign[j] {
                return Err(Error::InvalidSpec(format!("row {j} listed twice")));
            }
            is_sign[j] = true;
        }
        let mut sign_rows = sign_rows;
        sign_rows.sort_unstable();
        Ok(SubdiffSpec {
            r,
            n,
            zero_rows: (1..=r).collect(),
            box_rows: ((r + 1)..=n).filter(|&j| !is_sign[j]).collect(),
            sign_rows,
        })
    }

    /// Spec of the subdifferential at a signal with the given knots.
    pub fn from_profile(profile: &KnotProfile) -> Result<Self> {
        let r = DiffOrder::new(profile.order)?;
        let rows = profile
            .knot_indices
            .iter()
            .zip(&profile.signs)
            .map(|(&k, &s)| (k + profile.order - 1, s))
            .collect();
        Self::new(r, profile.n, rows)
    }

    pub fn order(&self) -> Result<DiffOrder> {
        DiffOrder::new(self.r)
    }

    /// Checks that the rows partition `1..=n` as required.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(self.order()?, self.n, self.sign_rows.clone())?;
        if rebuilt.zero_rows != self.zero_rows || rebuilt.box_rows != self.box_rows {
            return Err(Error::InvalidSpec("rows do not partition 1..=n".into()));
        }
        Ok(())
    }

    /// Bounds on `u = (a_(r+1), ..., a_n)`: locked at the sign on sign rows.
    pub(crate) fn bounds(&self) -> Vec<Bound> {
        let mut b = vec![Bound::Box; self.n - self.r];
        for &(j, s) in &self.sign_rows {
            b[j - self.r - 1] = Bound::Locked(s as f64);
        }
        b
    }

    /// `u` with the signs on sign rows and zeros elsewhere.
    pub(crate) fn sign_vector(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n - self.r];
        for &(j, v) in &self.sign_rows {
            s[j - self.r - 1] = v as f64;
        }
        s
    }

    /// 0-based indices of box rows in `u` coordinates.
    pub(crate) fn box_cols(&self) -> Vec<usize> {
        self.box_rows.iter().map(|j| j - self.r - 1).collect()
    }

    pub(crate) fn require_signs(&self) -> Result<()> {
        if self.sign_rows.is_empty() {
            return Err(Error::ZeroDifferences);
        }
        Ok(())
    }
}

/// `(a_1(v), ..., a_n(v))`: `r`-fold suffix sums.
pub fn a_transform(v: &[f64], r: DiffOrder) -> Vec<f64> {
    let mut a = v.to_vec();
    for _ in 0..r.get() {
        for i in (0..a.len().saturating_sub(1)).rev() {
            a[i] += a[i + 1];
        }
    }
    a
}

/// Inverse of [`a_transform`]: `r`-fold backward differences.
pub fn a_transform_inverse(a: &[f64], r: DiffOrder) -> Vec<f64> {
    let mut v = a.to_vec();
    for _ in 0..r.get() {
        for i in 0..v.len().saturating_sub(1) {
            v[i] -= v[i + 1];
        }
    }
    v
}

/// Classifies the rows at `theta_star`; differences count as nonzero under
/// the same relative rule as [`knot_profile`].
pub fn build_spec(theta_star: &[f64], r: DiffOrder, rel_tol: f64) -> Result<SubdiffSpec> {
    SubdiffSpec::from_profile(&knot_profile(theta_star, r, rel_tol)?)
}

/// Whether `v` lies in the subdifferential described by `spec`, up to `tol`.
pub fn subdiff_membership(v: &[f64], spec: &SubdiffSpec, tol: f64) -> Result<bool> {
    if v.len() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: v.len(),
        });
    }
    let a = a_transform(v, spec.order()?);
    let zero = spec.zero_rows.iter().all(|&j| a[j - 1].abs() <= tol);
    let sign = spec.sign_rows.iter().all(|&(j, s)| (a[j - 1] - s as f64).abs() <= tol);
    let boxed = spec.box_rows.iter().all(|&j| a[j - 1].abs() <= 1.0 + tol);
    Ok(zero && sign && boxed)
}

pub(crate) fn warn_conditioning(r: usize, n: usize) {
    static WARN: Once = Once::new();
    if r == 2 && n > 500 {
        WARN.call_once(|| {
            log::warn!("subdifferential programs at r=2 and n={n} are badly conditioned; treat results as best effort");
        });
    }
}

/// Least-norm element `v0` of the affine hull: equalities on zero and sign
/// rows only, solved by banded QR.
pub fn min_norm_affine(spec: &SubdiffSpec) -> Result<Vec<f64>> {
    spec.require_signs()?;
    let r = spec.order()?;
    let q = diff_transpose(&spec.sign_vector(), r);
    let cols = spec.box_cols();
    let sol = DtLeastSquares::new(spec.n, spec.r, &cols).solve(&[&q])?;
    Ok(sol.into_iter().next().expect("one rhs").residual)
}

/// Coefficients `u` with `v0 = D^T u`, box entries unclipped.
pub(crate) fn affine_coefficients(spec: &SubdiffSpec) -> Result<Vec<f64>> {
    let r = spec.order()?;
    let q = diff_transpose(&spec.sign_vector(), r);
    let cols = spec.box_cols();
    let sol = DtLeastSquares::new(spec.n, spec.r, &cols).solve(&[&q])?;
    let mut u = spec.sign_vector();
    for (a, &j) in cols.iter().enumerate() {
        u[j] = -sol[0].coef[a];
    }
    Ok(u)
}

/// Least-norm element `v*` of the subdifferential.
///
/// Solved as a bounded least-squares problem in `u = (a_(r+1), ..., a_n)`
/// by projected Newton with an exact active-set finish; the projected
/// gradient at the returned point is checked against `1e-7`.
pub fn min_norm_subdiff(spec: &SubdiffSpec, opts: &SolverOptions) -> Result<Vec<f64>> {
    spec.require_signs()?;
    opts.validate()?;
    warn_conditioning(spec.r, spec.n);
    let r = spec.order()?;
    let bounds = spec.bounds();
    let start = affine_coefficients(spec)?;
    let g = vec![0.0; spec.n];
    let sol = box_newton(&g, r, &bounds, &start, opts.abs_tol, 1000)?
        .ok_or(Error::NotConverged { iterations: 1000 })?;
    let v: Vec<f64> = sol.residual.iter().map(|x| -x).collect();
    // projected gradient of 1/2||D^T u||^2 over the box
    let grad = diff_raw(&v, spec.r);
    let mut pg = 0.0f64;
    for (j, b) in bounds.iter().enumerate() {
        if let Bound::Box = b {
            pg = pg.max((sol.u[j] - (sol.u[j] - grad[j]).clamp(-1.0, 1.0)).abs());
        }
    }
    if pg > 1e-7 {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
        });
    }
    Ok(v)
}

/// Explicit tuning rules for `lambda` in the penalty `sigma * n^(r-1) * lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningRule {
    /// `gamma * sqrt(n / #sign changes * log(e n / (k+1)))`.
    Lach,
    /// `gamma * sqrt(n log(e n))`.
    Cdal,
    /// `gamma * sqrt(n log(e n / (k+1)))`.
    Lachr,
    /// `gamma * sqrt(n log(e n))`.
    Cdalr,
    /// `sqrt(6 n log(e n))`; `gamma` is ignored.
    Rr0,
}

pub fn tuning_rules(profile: &KnotProfile, gamma: f64, rule: TuningRule) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let first_order = matches!(rule, TuningRule::Lach | TuningRule::Cdal);
    let higher_order = matches!(rule, TuningRule::Lachr | TuningRule::Cdalr);
    if (first_order && profile.order != 1) || (higher_order && profile.order < 2) {
        return Err(Error::Precondition(format!(
            "rule {rule:?} does not apply to order {}",
            profile.order
        )));
    }
    let n = profile.n as f64;
    let log_en = (std::f64::consts::E * n).ln();
    let log_k = (std::f64::consts::E * n / (profile.k() + 1) as f64).ln();
    Ok(match rule {
        TuningRule::Lach => {
            let changes = profile.sign_change_count();
            if changes == 0 {
                return Err(Error::Precondition(
                    "the lach rule needs at least one sign change".into(),
                ));
            }
            gamma * (n / changes as f64 * log_k).sqrt()
        }
        TuningRule::Cdal | TuningRule::Cdalr => gamma * (n * log_en).sqrt(),
        TuningRule::Lachr => gamma * (n * log_k).sqrt(),
        TuningRule::Rr0 => (6.0 * n * log_en).sqrt(),
    })
}

/// Monte-Carlo estimate of the theoretical penalty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStar {
    pub lambda_star: f64,
    pub stderr: f64,
    pub v0_norm: f64,
    pub vstar_norm: f64,
    pub reps: usize,
    pub seed: u64,
    /// Draws whose `lambda(z)` solve failed; they are left out of the mean.
    pub failures: usize,
}

/// `n^(1-r) * (mean of lambda(Z) over reps Gaussian draws + 2 / ||v0||)`.
///
/// Draw `m` uses stream `m` of the generator keyed by `seed`.
pub fn lambda_star(theta_star: &Signal, r: DiffOrder, reps: usize, seed: u64) -> Result<LambdaStar> {
    if reps == 0 {
        return Err(Error::invalid("reps", "must be positive"));
    }
    let spec = build_spec(theta_star, r, DEFAULT_KNOT_TOL)?;
    spec.require_signs()?;
    let opts = SolverOptions::default();
    let v0_norm = norm2(&min_norm_affine(&spec)?);
    let vstar_norm = norm2(&min_norm_subdiff(&spec, &opts)?);
    let n = spec.n;
    let draws: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|m| {
            let z = gaussian_vector(&mut stream_rng(&[seed], m as u64), n);
            lambda_z(&spec, &z, &opts)
        })
        .collect();
    let ok: Vec<f64> = draws.iter().filter_map(|d| d.as_ref().ok().copied()).collect();
    let failures = reps - ok.len();
    if ok.is_empty() {
        return Err(draws.into_iter().find_map(|d| d.err()).expect("some draw failed"));
    }
    if failures > 0 {
        log::warn!("{failures} of {reps} lambda(z) draws failed");
    }
    let count = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / count;
    let sd = if ok.len() > 1 {
        (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    let scale = (n as f64).powi(1 - r.get() as i32);
    Ok(LambdaStar {
        lambda_star: scale * (mean + 2.0 / v0_norm),
        stderr: scale * sd / count.sqrt(),
        v0_norm,
        vstar_norm,
        reps,
        seed,
        failures,
    })
}
