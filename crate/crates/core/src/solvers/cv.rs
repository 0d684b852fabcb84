//! Grid cross-validation for the penalized estimator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DiffOrder, Signal};

use super::{fit_penalized, tv1d, SolverOptions};

/// Outcome of [`select_lambda_cv`]; errors are listed in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub lambda_min: f64,
    pub lambda_one_se: f64,
    pub cv_error: Vec<f64>,
    pub cv_stderr: Vec<f64>,
}

/// Fold label of every point; the two endpoints (label `None`) always train.
/// Each run of `folds` consecutive interior points receives a shuffled copy
/// of the labels.
fn fold_labels(n: usize, folds: usize, seed: u64) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![None; n];
    let mut perm: Vec<usize> = (0..folds).collect();
    let interior: Vec<usize> = (1..n - 1).collect();
    for chunk in interior.chunks(folds) {
        perm.shuffle(&mut rng);
        for (i, &idx) in chunk.iter().enumerate() {
            labels[idx] = Some(perm[i]);
        }
    }
    labels
}

/// K-fold cross-validation over `grid`. Training points are refit as if
/// equally spaced, with penalty `n^(r-1) * lambda` for the full length `n`,
/// and held-out values are predicted by linear interpolation.
///
/// Returns the minimizing `lambda` and the largest `lambda` whose error is
/// within one standard error of the minimum.
pub fn select_lambda_cv(
    y: &Signal,
    r: DiffOrder,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvSelection> {
    let n = y.len();
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must be nonempty"));
    }
    if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::invalid("grid", format!("entries must be nonnegative, got {bad}")));
    }
    if folds < 2 {
        return Err(Error::invalid("folds", format!("need at least 2, got {folds}")));
    }
    let interior = n.saturating_sub(2);
    if interior < folds {
        return Err(Error::Precondition(format!(
            "{n} points leave {interior} interior points for {folds} folds"
        )));
    }
    let largest_fold = interior.div_ceil(folds);
    if n - largest_fold < r.get() + 1 {
        return Err(Error::Precondition(format!(
            "training folds of {} points are too short for order {}",
            n - largest_fold,
            r.get()
        )));
    }
    let labels = fold_labels(n, folds, seed);
    let scale = (n as f64).powi(r.get() as i32 - 1);
    let opts = SolverOptions::default();
    let mut errors = vec![vec![0.0; folds]; grid.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != Some(f)).collect();
        let held: Vec<usize> = (0..n).filter(|&i| labels[i] == Some(f)).collect();
        let yt = Signal::new(train.iter().map(|&i| y[i]).collect())?;
        let mut warm: Option<Signal> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            let mu = scale * lambda;
            let fit = if r.get() == 1 {
                tv1d::tv1d(&yt, mu)
            } else {
                let o = SolverOptions {
                    warm_start: warm.clone(),
                    ..opts.clone()
                };
                let res = fit_penalized(&yt, r, mu, &o)?;
                warm = Some(res.fitted.clone());
                res.fitted.into_inner()
            };
            let mut sse = 0.0;
            let mut t = 0;
            for &i in &held {
                while train[t + 1] < i {
                    t += 1;
                }
                let (a, b) = (train[t], train[t + 1]);
                let w = (i - a) as f64 / (b - a) as f64;
                let pred = (1.0 - w) * fit[t] + w * fit[t + 1];
                sse += (y[i] - pred).powi(2);
            }
            errors[g][f] = sse / held.len() as f64;
        }
    }
    let kf = folds as f64;
    let cv_error: Vec<f64> = errors.iter().map(|e| e.iter().sum::<f64>() / kf).collect();
    let cv_stderr: Vec<f64> = errors
        .iter()
        .zip(&cv_error)
        .map(|(e, m)| {
            let var = e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (kf - 1.0);
            (var / kf).sqrt()
        })
        .collect();
    let mut imin = 0;
    for g in 1..grid.len() {
        if cv_error[g] < cv_error[imin] {
            imin = g;
        }
    }
    let cutoff = cv_error[imin] + cv_stderr[imin];
    let lambda_one_se = grid
        .iter()
        .zip(&cv_error)
        .filter(|(_, e)| **e <= cutoff)
        .map(|(l, _)| *l)
        .fold(grid[imin], f64::max);
    Ok(CvSelection {
        lambda_min: grid[imin],
        lambda_one_se,
        cv_error,
        cv_stderr,
    })
}
