use crate::error::{Error, Result};

use super::diff_coefficients;

/// Cholesky factor `L L^T` of a symmetric positive definite band matrix.
///
/// Storage is row-major lower band: `l[i * (p + 1) + d] = L[i][i - d]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    p: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a matrix given in the same lower band layout as the factor.
    pub fn factor(n: usize, p: usize, band: &[f64]) -> Result<Self> {
        if band.len() != n * (p + 1) {
            return Err(Error::DimensionMismatch {
                expected: n * (p + 1),
                got: band.len(),
            });
        }
        let w = p + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let jlo = i.saturating_sub(p);
            for j in jlo..=i {
                let mut sum = band[i * w + (i - j)];
                let klo = jlo.max(j.saturating_sub(p));
                for k in klo..j {
                    sum -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::Precondition(
                            "band matrix is not positive definite".into(),
                        ));
                    }
                    l[i * w] = sum.sqrt();
                } else {
                    l[i * w + (i - j)] = sum / l[j * w];
                }
            }
        }
        Ok(BandedCholesky { n, p, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, p, w) = (self.n, self.p, self.p + 1);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..(i + w).min(n) {
                s -= self.l[k * w + (k - i)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
    }
}

/// Lower band of `I + rho * D^(r)^T D^(r)` for a length-`n` signal.
pub fn dtd_band(n: usize, r: usize, rho: f64) -> Vec<f64> {
    let w = r + 1;
    let c = diff_coefficients(r);
    let mut band = vec![0.0; n * w];
    for i in 0..n {
        band[i * w] = 1.0;
    }
    for a in 0..n.saturating_sub(r) {
        for k in 0..=r {
            for l in 0..=k {
                band[(a + k) * w + (k - l)] += rho * c[k] * c[l];
            }
        }
    }
    band
}

/// Least squares `min_w ||b - D_C^T w||` where `D_C` keeps the rows of
/// `D^(r)` listed in `cols`, solved by a banded Givens QR factorization.
#[derive(Debug, Clone)]
pub struct DtLeastSquares<'a> {
    n: usize,
    r: usize,
    cols: &'a [usize],
}

/// Coefficients and residual `b - D_C^T w` for one right-hand side.
#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub coef: Vec<f64>,
    pub residual: Vec<f64>,
}

impl<'a> DtLeastSquares<'a> {
    /// `cols` must be strictly increasing difference indices in `0..n - r`.
    pub fn new(n: usize, r: usize, cols: &'a [usize]) -> Self {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(cols.last().is_none_or(|&c| c + r < n));
        DtLeastSquares { n, r, cols }
    }

    pub fn solve(&self, rhs: &[&[f64]]) -> Result<Vec<LsqSolution>> {
        let (n, r, m) = (self.n, self.r, self.cols.len());
        for b in rhs {
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
        }
        let coefs = diff_coefficients(r);
        let w = r + 1;
        let nr = rhs.len();
        let mut rband = vec![0.0; m * w];
        let mut filled = vec![false; m];
        let mut qtb = vec![0.0; nr * m];
        let mut buf = vec![0.0; w];
        let mut t = vec![0.0; nr];
        let mut lo = 0usize;
        for i in 0..n {
            while lo < m && self.cols[lo] + r < i {
                lo += 1;
            }
            if lo >= m || self.cols[lo] > i {
                continue;
            }
            buf.iter_mut().for_each(|v| *v = 0.0);
            let mut a = lo;
            while a < m && self.cols[a] <= i {
                buf[a - lo] = coefs[i - self.cols[a]];
                a += 1;
            }
            for (k, b) in rhs.iter().enumerate() {
                t[k] = b[i];
            }
            let mut p = lo;
            while p < m {
                if buf[0] == 0.0 {
                    if buf.iter().all(|v| *v == 0.0) {
                        break;
                    }
                    buf.rotate_left(1);
                    buf[r] = 0.0;
                    p += 1;
                    continue;
                }
                if !filled[p] {
                    for e in 0..w {
                        rband[p * w + e] = if p + e < m { buf[e] } else { 0.0 };
                    }
                    for k in 0..nr {
                        qtb[k * m + p] = t[k];
                    }
                    filled[p] = true;
                    break;
                }
                let a0 = rband[p * w];
                let b0 = buf[0];
                let h = a0.hypot(b0);
                let (c, s) = (a0 / h, b0 / h);
                for e in 0..w {
                    let rv = rband[p * w + e];
                    let bv = buf[e];
                    rband[p * w + e] = c * rv + s * bv;
                    buf[e] = -s * rv + c * bv;
                }
                for k in 0..nr {
                    let q = qtb[k * m + p];
                    qtb[k * m + p] = c * q + s * t[k];
                    t[k] = -s * q + c * t[k];
                }
                buf[0] = 0.0;
                buf.rotate_left(1);
                buf[r] = 0.0;
                p += 1;
            }
        }
        if filled.iter().any(|f| !f) {
            return Err(Error::Precondition(
                "difference rows are rank deficient".into(),
            ));
        }
        let mut out = Vec::with_capacity(nr);
        for (k, b) in rhs.iter().enumerate() {
            let mut coef = vec![0.0; m];
            for a in (0..m).rev() {
                let mut s = qtb[k * m + a];
                for e in 1..w {
                    if a + e < m {
                        s -= rband[a * w + e] * coef[a + e];
                    }
                }
                coef[a] = s / rband[a * w];
            }
            let mut residual = b.to_vec();
            for (a, &col) in self.cols.iter().enumerate() {
                for (kk, ck) in coefs.iter().enumerate() {
                    residual[col + kk] -= ck * coef[a];
                }
            }
            out.push(LsqSolution { coef, residual });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diff_raw, diff_transpose, DiffOrder};

    fn dense(n: usize, p: usize, band: &[f64]) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for d in 0..=p.min(i) {
                m[i][i - d] = band[i * (p + 1) + d];
                m[i - d][i] = band[i * (p + 1) + d];
            }
        }
        m
    }

    #[test]
    fn cholesky_solves_normal_system() {
        for r in 1..=3 {
            let n = 17;
            let band = dtd_band(n, r, 2.5);
            let chol = BandedCholesky::factor(n, r, &band).unwrap();
            let m = dense(n, r, &band);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut x = b.clone();
            chol.solve_in_place(&mut x);
            for i in 0..n {
                let ax: f64 = (0..n).map(|j| m[i][j] * x[j]).sum();
                assert!((ax - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn band_matches_operator() {
        let n = 9;
        let r = 2;
        let band = dtd_band(n, r, 1.0);
        let m = dense(n, r, &band);
        let x: Vec<f64> = (0..n).map(|i| (i * i) as f64 * 0.1 - 1.0).collect();
        let dx = diff_raw(&x, r);
        let dtdx = diff_transpose(&dx, DiffOrder::new(r).unwrap());
        for i in 0..n {
            let mx: f64 = (0..n).map(|j| m[i][j] * x[j]).sum();
            assert!((mx - (x[i] + dtdx[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let n = 14;
        for r in 1..=3 {
            let cols: Vec<usize> = (0..n - r).filter(|c| c % 3 != 1).collect();
            let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
            let sol = DtLeastSquares::new(n, r, &cols).solve(&[&b]).unwrap();
            let d = diff_raw(&sol[0].residual, r);
            for &c in &cols {
                assert!(d[c].abs() < 1e-10, "r={r} col={c} {}", d[c]);
            }
        }
    }

    #[test]
    fn empty_column_set_returns_rhs() {
        let b = [1.0, 2.0, 3.0];
        let sol = DtLeastSquares::new(3, 1, &[]).solve(&[&b]).unwrap();
        assert_eq!(sol[0].residual, b.to_vec());
    }
}
