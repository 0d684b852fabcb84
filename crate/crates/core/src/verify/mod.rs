//! Exact matrix identities for the difference operators and the sharp
//! inequalities derived from them.
//!
//! With `X` the polynomial design (`X_ij = C(i-1, j-1)`) and `S` the
//! reconstruction kernel (`S_ij = C(i-j-1, r-1)`), every signal is
//! `theta = X h + S D^(r) theta`. The matrix `A = S^T (I - P_X) S` then
//! inverts the banded Toeplitz matrix `T_ij = (-1)^(i-j) C(2r, r+i-j)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{binomial, binomial_i, diff_raw, l1, norm2, poly_project, DiffOrder};

#[cfg(test)]
mod tests;

/// The matrices `X`, `S`, `A` and `T` for a given `(n, r)`.
#[derive(Debug, Clone)]
pub struct ApxMatrices {
    pub n: usize,
    pub r: usize,
    pub x: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

fn exact(a: i64, b: i64) -> Result<f64> {
    let v = binomial_i(a, b)?;
    // integers above 2^53 lose exactness as floats
    if v > 1u64 << 53 {
        return Err(Error::BinomialOverflow { n: a as u64, k: b as u64 });
    }
    Ok(v as f64)
}

pub fn build_matrices(n: usize, r: DiffOrder) -> Result<ApxMatrices> {
    let r = r.get();
    if n < r + 1 {
        return Err(Error::TooShort { len: n, order: r, needed: r + 1 });
    }
    let m = n - r;
    let (ni, ri) = (n as i64, r as i64);
    // the identity checks compare against C(n+r, 2r+1)
    exact(ni + ri, 2 * ri + 1)?;

    let mut x = DMatrix::zeros(n, r);
    for i in 0..n {
        for j in 0..r {
            x[(i, j)] = exact(i as i64, j as i64)?;
        }
    }
    let mut s = DMatrix::zeros(n, m);
    for i in 1..=n {
        for j in 1..=m {
            if i >= j + r {
                s[(i - 1, j - 1)] = exact((i - j - 1) as i64, ri - 1)?;
            }
        }
    }
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let off = i as i64 - j as i64;
            let sign = if off.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            t[(i, j)] = sign * exact(2 * ri, ri + off)?;
        }
    }

    let mut resid = s.clone();
    for mut col in resid.column_iter_mut() {
        let v: Vec<f64> = col.iter().copied().collect();
        let mut out = v.clone();
        // projecting twice removes what rounding left in the column space
        for _ in 0..2 {
            let p = poly_project(&out, r);
            out.iter_mut().zip(&p).for_each(|(o, q)| *o -= q);
        }
        col.copy_from_slice(&out);
    }
    let a = resid.transpose() * &resid;
    Ok(ApxMatrices { n, r, x, s, a, t })
}

/// `||T A - I||_max <= tol`.
pub fn check_inverse(m: &ApxMatrices, tol: f64) -> bool {
    let prod = &m.t * &m.a;
    let dim = prod.nrows();
    (0..dim).all(|i| (0..dim).all(|j| {
        let target = if i == j { 1.0 } else { 0.0 };
        (prod[(i, j)] - target).abs() <= tol
    }))
}

pub(crate) fn rowsum_closed_form(n: usize, r: usize) -> Result<f64> {
    Ok(binomial((n + r) as u64, (2 * r + 1) as u64)? as f64 / binomial(2 * r as u64, r as u64)? as f64)
}

/// `1^T A 1 = C(n+r, 2r+1) / C(2r, r)` to relative `1e-8`.
pub fn check_rowsum(m: &ApxMatrices) -> Result<bool> {
    let expected = rowsum_closed_form(m.n, m.r)?;
    let got = m.a.sum();
    Ok((got - expected).abs() <= 1e-8 * expected)
}

pub fn check_positive(m: &ApxMatrices) -> bool {
    m.a.min() > -1e-12
}

/// The first column of `A` against
/// `x_i = C(r+i-2, r-1) C(n-i, n-r-i) / C(n+r-1, n-1)`.
pub fn check_first_column(m: &ApxMatrices) -> Result<bool> {
    let (n, r) = (m.n as i64, m.r as i64);
    let scale = exact(n + r - 1, n - 1)?;
    for i in 1..=(n - r) {
        let x = exact(r + i - 2, r - 1)? * exact(n - i, n - r - i)? / scale;
        if (m.a[(i as usize - 1, 0)] - x).abs() > 1e-8 * x.abs() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `A` is symmetric and symmetric about its anti-diagonal.
pub fn check_persymmetric(m: &ApxMatrices, tol: f64) -> bool {
    let a = &m.a;
    let dim = a.nrows();
    let scale = tol * a.amax().max(1.0);
    (0..dim).all(|i| {
        (0..dim).all(|j| {
            (a[(i, j)] - a[(j, i)]).abs() <= scale
                && (a[(i, j)] - a[(dim - 1 - j, dim - 1 - i)]).abs() <= scale
        })
    })
}

/// `min_j (D^(r) theta)_j * sqrt(1^T A 1) <= ||theta||`, and the same for
/// `-theta`.
pub fn min_diff_bound(theta: &[f64], r: DiffOrder) -> Result<bool> {
    r.check_len(theta.len())?;
    let d = diff_raw(theta, r.get());
    let root = rowsum_closed_form(theta.len(), r.get())?.sqrt();
    let norm = norm2(theta);
    let slack = 1e-9 * (norm + 1e-300);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(lo * root <= norm + slack && -hi * root <= norm + slack)
}

/// Squared distance of `theta` from the degree `r-1` polynomials is at most
/// `n^(2r-1) ||D^(r) theta||_1^2`.
pub fn variance_variation(theta: &[f64], r: DiffOrder) -> Result<bool> {
    r.check_len(theta.len())?;
    let n = theta.len() as f64;
    let p = poly_project(theta, r.get());
    let resid: f64 = theta.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
    let bound = n.powi(2 * r.get() as i32 - 1) * l1(&diff_raw(theta, r.get())).powi(2);
    let scale: f64 = theta.iter().map(|v| v * v).sum();
    Ok(resid <= bound + 1e-10 * scale)
}

/// One line of the identity table.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteRow {
    pub check: &'static str,
    pub r: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub cases: usize,
    pub failures: usize,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Runs the exact identities for every `r` in `1..=3` and
/// `n` in `r+2..=n_max`.
pub fn identity_suite(n_max: usize, tol: f64) -> Result<Vec<SuiteRow>> {
    type Check = fn(&ApxMatrices, f64) -> Result<bool>;
    let checks: [(&'static str, Check); 5] = [
        ("inverse", |m, tol| Ok(check_inverse(m, tol))),
        ("rowsum", |m, _| check_rowsum(m)),
        ("positive", |m, _| Ok(check_positive(m))),
        ("first-column", |m, _| check_first_column(m)),
        ("persymmetric", |m, tol| Ok(check_persymmetric(m, tol))),
    ];
    let mut rows = Vec::new();
    for r in 1..=3 {
        let mats: Vec<ApxMatrices> = (r + 2..=n_max)
            .map(|n| build_matrices(n, DiffOrder::new(r)?))
            .collect::<Result<_>>()?;
        for (name, check) in checks {
            let mut failures = 0;
            for m in &mats {
                if !check(m, tol)? {
                    failures += 1;
                }
            }
            rows.push(SuiteRow {
                check: name,
                r,
                n_min: r + 2,
                n_max,
                cases: mats.len(),
                failures,
            });
        }
    }
    Ok(rows)
}
