//! Best piecewise-constant fit with a bounded number of jumps.

use crate::error::{Error, Result};
use crate::linalg::Signal;

/// Exact minimizer of `1/2||y - theta||^2` over signals with at most `k`
/// jumps, by segmented least squares.
///
/// Ties go to fewer jumps, then to the leftmost change points.
pub fn fit_l0_r1(y: &Signal, k: usize) -> Result<Signal> {
    let n = y.len();
    if k >= n {
        return Err(Error::invalid(
            "k",
            format!("at most {} jumps fit {n} points, got {k}", n - 1),
        ));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + c[i];
        s2[i + 1] = s2[i] + c[i] * c[i];
    }
    // squared error of the mean fit on y[a..b]
    let cost = |a: usize, b: usize| {
        let len = (b - a) as f64;
        let s = s1[b] - s1[a];
        (s2[b] - s2[a] - s * s / len).max(0.0)
    };
    let eps = 1e-12 * (1.0 + s2[n]);
    let segs = k + 1;
    // best[m][j]: error of the first j points in m + 1 segments
    let mut best = vec![vec![f64::INFINITY; n + 1]; segs];
    let mut from = vec![vec![0usize; n + 1]; segs];
    for j in 1..=n {
        best[0][j] = cost(0, j);
    }
    for m in 1..segs {
        for j in (m + 1)..=n {
            let mut b = f64::INFINITY;
            let mut arg = m;
            for s in m..j {
                let v = best[m - 1][s] + cost(s, j);
                if v < b - eps {
                    b = v;
                    arg = s;
                }
            }
            best[m][j] = b;
            from[m][j] = arg;
        }
    }
    let mut m_best = 0;
    for m in 1..segs {
        if best[m][n] < best[m_best][n] - eps {
            m_best = m;
        }
    }
    let mut out = vec![0.0; n];
    let mut end = n;
    let mut m = m_best;
    loop {
        let start = if m == 0 { 0 } else { from[m][end] };
        let seg_mean = y[start..end].iter().sum::<f64>() / (end - start) as f64;
        out[start..end].iter_mut().for_each(|v| *v = seg_mean);
        if m == 0 {
            break;
        }
        end = start;
        m -= 1;
    }
    Signal::new(out)
}
