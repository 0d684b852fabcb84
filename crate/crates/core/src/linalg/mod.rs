//! Discrete difference operators, exact binomials and the reconstruction
//! formula expressing a vector through its r-th differences.

mod banded;
mod poly;

pub use banded::{dtd_band, BandedCholesky, DtLeastSquares};
pub use poly::{poly_basis, poly_project};

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real signal of length `n >= 1` with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal);
        }
        Ok(Signal(values))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Signal::new(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Signal {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Signal::new(v)
    }
}

impl From<Signal> for Vec<f64> {
    fn from(s: Signal) -> Vec<f64> {
        s.0
    }
}

/// Order `r >= 1` of a difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct DiffOrder(usize);

impl DiffOrder {
    pub fn new(r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidOrder);
        }
        Ok(DiffOrder(r))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Checks that a signal of length `n` has at least one r-th difference.
    pub fn check_len(self, n: usize) -> Result<()> {
        if n <= self.0 {
            return Err(Error::TooShort {
                len: n,
                order: self.0,
                needed: self.0 + 1,
            });
        }
        Ok(())
    }
}

impl TryFrom<usize> for DiffOrder {
    type Error = Error;

    fn try_from(r: usize) -> Result<Self> {
        DiffOrder::new(r)
    }
}

impl From<DiffOrder> for usize {
    fn from(r: DiffOrder) -> usize {
        r.0
    }
}

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return Err(Error::BinomialOverflow { n, k });
        }
    }
    Ok(acc as u64)
}

/// Binomial with the convention `C(a, b) = 0` for negative `a` or `b > a`.
pub(crate) fn binomial_i(a: i64, b: i64) -> Result<u64> {
    if a < 0 || b < 0 || b > a {
        return Ok(0);
    }
    binomial(a as u64, b as u64)
}

/// Coefficients `c_k = (-1)^(r-k) C(r, k)` so that `(D^(r) x)_a = sum_k c_k x_(a+k)`.
pub fn diff_coefficients(r: usize) -> Vec<f64> {
    (0..=r)
        .map(|k| {
            let c = binomial(r as u64, k as u64).expect("order too large") as f64;
            if (r - k) % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect()
}

/// First differences `(x_2 - x_1, ..., x_n - x_(n-1))`.
fn first_diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// r-th order differences `D^(r) theta`, a vector of length `n - r`.
pub fn diff(theta: &[f64], r: DiffOrder) -> Result<Vec<f64>> {
    r.check_len(theta.len())?;
    let mut out = first_diff(theta);
    for _ in 1..r.get() {
        out = first_diff(&out);
    }
    Ok(out)
}

/// Differences of order `r` without the length check; `r = 0` returns a copy.
pub(crate) fn diff_raw(theta: &[f64], r: usize) -> Vec<f64> {
    let mut out = theta.to_vec();
    for _ in 0..r {
        out = first_diff(&out);
    }
    out
}

/// Applies `D^(r)^T` to `u` (length `n - r`), producing a vector of length `n`.
pub fn diff_transpose(u: &[f64], r: DiffOrder) -> Vec<f64> {
    let mut w = u.to_vec();
    for _ in 0..r.get() {
        let m = w.len();
        let mut out = vec![0.0; m + 1];
        for i in 0..=m {
            let left = if i > 0 { w[i - 1] } else { 0.0 };
            let right = if i < m { w[i] } else { 0.0 };
            out[i] = left - right;
        }
        w = out;
    }
    w
}

/// The leading entries `(D^(j-1) theta)_1` for `j = 1..=r`.
pub fn heads(theta: &[f64], r: DiffOrder) -> Result<Vec<f64>> {
    r.check_len(theta.len())?;
    let mut out = Vec::with_capacity(r.get());
    let mut cur = theta.to_vec();
    for _ in 0..r.get() {
        out.push(cur[0]);
        cur = first_diff(&cur);
    }
    Ok(out)
}

/// Rebuilds `theta` from its r-th differences `s` and its heads:
/// `theta_i = sum_(j <= i-r) C(i-j-1, r-1) s_j + sum_(j <= r) C(i-1, j-1) heads_j`.
pub fn reconstruct(s: &[f64], heads: &[f64], n: usize, r: DiffOrder) -> Result<Signal> {
    let r = r.get();
    if n <= r {
        return Err(Error::TooShort {
            len: n,
            order: r,
            needed: r + 1,
        });
    }
    if s.len() != n - r {
        return Err(Error::DimensionMismatch {
            expected: n - r,
            got: s.len(),
        });
    }
    if heads.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: heads.len(),
        });
    }
    // weights depend only on i - j, so tabulate them once
    let spline_w: Vec<f64> = (0..n)
        .map(|d| binomial_i(d as i64 - 1, r as i64 - 1).map(|c| c as f64))
        .collect::<Result<_>>()?;
    let mut theta = vec![0.0; n];
    for i in 1..=n {
        let mut acc = 0.0;
        for j in 1..=(i.saturating_sub(r)) {
            acc += spline_w[i - j] * s[j - 1];
        }
        for j in 1..=r {
            acc += binomial_i(i as i64 - 1, j as i64 - 1)? as f64 * heads[j - 1];
        }
        theta[i - 1] = acc;
    }
    Signal::new(theta).map_err(|_| Error::InvalidParameter {
        name: "s",
        reason: "reconstruction produced non-finite values".into(),
    })
}

/// `V^(r)(theta) = n^(r-1) * ||D^(r) theta||_1`.
pub fn variation(theta: &[f64], r: DiffOrder) -> Result<f64> {
    let d = diff(theta, r)?;
    let n = theta.len() as f64;
    Ok(n.powi(r.get() as i32 - 1) * l1(&d))
}

/// Number of r-th differences whose magnitude exceeds `tol`.
pub fn sparsity(theta: &[f64], r: DiffOrder, tol: f64) -> Result<usize> {
    Ok(diff(theta, r)?.iter().filter(|d| d.abs() > tol).count())
}

pub(crate) fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
