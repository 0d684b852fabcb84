//! Knots and signs of a signal, the adaptive-rate quantities built from its
//! segment lengths, and synthetic test signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diff_raw, max_abs, DiffOrder, Signal};

/// Relative tolerance used when extracting knots from solver output.
pub const DEFAULT_KNOT_TOL: f64 = 1e-8;

/// Knot positions, signs and segment lengths of a signal for a given order.
///
/// Knot indices are 1-based: `j` is a knot when
/// `(D^(r-1) theta)_(j-1) != (D^(r-1) theta)_j`, with `2 <= j <= n - r + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotProfile {
    pub order: usize,
    pub n: usize,
    pub knot_indices: Vec<usize>,
    pub signs: Vec<i8>,
    pub segment_lengths: Vec<usize>,
}

impl KnotProfile {
    /// Builds a profile from segment lengths `n_0..n_k` and knot signs.
    pub fn from_segments(n: usize, order: usize, lengths: &[usize], signs: &[i8]) -> Result<Self> {
        let r = DiffOrder::new(order)?;
        r.check_len(n)?;
        if lengths.len() != signs.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: signs.len() + 1,
                got: lengths.len(),
            });
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::Precondition("knot signs must be +1 or -1".into()));
        }
        if lengths.iter().sum::<usize>() != n || lengths.contains(&0) {
            return Err(Error::Precondition(
                "segment lengths must be positive and sum to n".into(),
            ));
        }
        let k = signs.len();
        let mut knot_indices = Vec::with_capacity(k);
        if k > 0 {
            if lengths[0] < order {
                return Err(Error::Precondition(format!(
                    "first segment must have length at least {order}"
                )));
            }
            let mut j = lengths[0] + 2 - order;
            knot_indices.push(j);
            for len in &lengths[1..k] {
                j += len;
                knot_indices.push(j);
            }
            if j > n + 1 - order {
                return Err(Error::Precondition("last knot out of range".into()));
            }
        }
        Ok(KnotProfile {
            order,
            n,
            knot_indices,
            signs: signs.to_vec(),
            segment_lengths: lengths.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.knot_indices.len()
    }

    /// Sign `r_i` with the boundary convention `r_0 = r_(k+1) = 0`.
    pub fn boundary_sign(&self, i: usize) -> i8 {
        if i == 0 || i > self.k() {
            0
        } else {
            self.signs[i - 1]
        }
    }

    /// `1{r_i != r_(i+1)}` for segment `i` in `0..=k`.
    pub fn changes_sign(&self, i: usize) -> bool {
        self.boundary_sign(i) != self.boundary_sign(i + 1)
    }

    /// `sum_(i=0)^k 1{r_i != r_(i+1)}`.
    pub fn sign_change_count(&self) -> usize {
        (0..=self.k()).filter(|&i| self.changes_sign(i)).count()
    }
}

/// Extracts the knot profile of `theta`.
///
/// A jump of `D^(r-1) theta` counts as a knot when its magnitude exceeds
/// `rel_tol * max(1, ||D^(r-1) theta||_inf)`.
pub fn knot_profile(theta: &[f64], r: DiffOrder, rel_tol: f64) -> Result<KnotProfile> {
    r.check_len(theta.len())?;
    let n = theta.len();
    let order = r.get();
    let d = diff_raw(theta, order - 1);
    let thresh = rel_tol * max_abs(&d).max(1.0);
    let mut knot_indices = Vec::new();
    let mut signs = Vec::new();
    for j in 2..=(n + 1 - order) {
        let jump = d[j - 1] - d[j - 2];
        if jump.abs() > thresh {
            knot_indices.push(j);
            signs.push(if jump > 0.0 { 1 } else { -1 });
        }
    }
    let k = knot_indices.len();
    let mut segment_lengths = Vec::with_capacity(k + 1);
    if k == 0 {
        segment_lengths.push(n);
    } else {
        segment_lengths.push(knot_indices[0] + order - 2);
        for w in knot_indices.windows(2) {
            segment_lengths.push(w[1] - w[0]);
        }
        segment_lengths.push(n + 2 - order - knot_indices[k - 1]);
    }
    Ok(KnotProfile {
        order,
        n,
        knot_indices,
        signs,
        segment_lengths,
    })
}

/// `delta_r` of a profile; equals `n^(1/2 - r)` when there are no knots.
pub fn delta_r(profile: &KnotProfile) -> f64 {
    let n = profile.n as f64;
    let expo = 1.0 - 2.0 * profile.order as f64;
    let k = profile.k();
    if k == 0 {
        return n.powf(0.5 - profile.order as f64);
    }
    let cap = n / (k as f64 + 1.0);
    let term = |i: usize| (profile.segment_lengths[i] as f64).min(cap).powf(expo);
    let mut sum = term(0) + term(k);
    for i in 1..k {
        if profile.changes_sign(i) {
            sum += term(i);
        }
    }
    sum.sqrt()
}

/// `Delta_r` of a profile.
pub fn capital_delta_r(profile: &KnotProfile) -> f64 {
    let n = profile.n as f64;
    let r = profile.order as f64;
    let kp1 = profile.k() as f64 + 1.0;
    let log_term = (std::f64::consts::E * n / kp1).ln();
    let d = delta_r(profile);
    kp1 / n * log_term
        + d * d / n * (n / kp1).powf(2.0 * r - 1.0) * log_term
        + (d / n.sqrt()).powf(1.0 / r)
}

/// Minimum length condition: `n_i >= c n / (k+1)` for each `i` with `r_i != r_(i+1)`.
pub fn min_length_ok(profile: &KnotProfile, c: f64) -> bool {
    let bound = c * profile.n as f64 / (profile.k() as f64 + 1.0);
    (0..=profile.k())
        .filter(|&i| profile.changes_sign(i))
        .all(|i| profile.segment_lengths[i] as f64 >= bound)
}

/// Upper bound `(1 + c^(1-2r) + c^((1-2r)/(2r))) (k+1)/n log(en/(k+1))` on
/// `Delta_r`, valid under the minimum length condition with constant `c`.
pub fn ghos_bound(profile: &KnotProfile, c: f64) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "c",
            reason: "must lie in (0, 1]".into(),
        });
    }
    if !min_length_ok(profile, c) {
        return Err(Error::Precondition(
            "profile violates the minimum length condition".into(),
        ));
    }
    let n = profile.n as f64;
    let r = profile.order as f64;
    let kp1 = profile.k() as f64 + 1.0;
    let e = 1.0 - 2.0 * r;
    Ok((1.0 + c.powf(e) + c.powf(e / (2.0 * r))) * kp1 / n * (std::f64::consts::E * n / kp1).ln())
}

/// Sampling grid for function-defined signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Grid {
    /// `x_i = i / n`, `i = 1..=n`.
    Index,
    /// `n` equally spaced points from 0 to 1 inclusive.
    #[default]
    Linspace,
}

impl Grid {
    pub fn points(self, n: usize) -> Result<Vec<f64>> {
        match self {
            Grid::Index => Ok((1..=n).map(|i| i as f64 / n as f64).collect()),
            Grid::Linspace => {
                if n < 2 {
                    return Err(Error::InvalidSpec("linspace grid needs n >= 2".into()));
                }
                Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
            }
        }
    }
}

/// Named test signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    /// Piecewise constant with four jumps.
    F1,
    /// Continuous piecewise linear with three slope changes.
    F2,
    /// Blocks-like piecewise constant with ten jumps.
    F3,
    /// Zeros followed by a single final value of 5.
    Vio1,
    /// `floor(n/2)` zeros followed by fives.
    Vio2,
    /// Zeros then ones, first one at index `ceil(n/2)`.
    SimpoStep,
}

const F3_BLOCKS: [(f64, f64, f64); 10] = [
    (0.1, 0.13, 14.77),
    (0.13, 0.15, -3.69),
    (0.15, 0.23, 7.39),
    (0.23, 0.25, -7.39),
    (0.25, 0.4, 11.08),
    (0.4, 0.44, -4.43),
    (0.44, 0.65, 3.32),
    (0.65, 0.76, 19.21),
    (0.76, 0.78, 7.76),
    (0.78, 0.81, 15.51),
];

fn indicator(lo: f64, hi: f64, x: f64) -> f64 {
    if lo < x && x <= hi {
        1.0
    } else {
        0.0
    }
}

impl Builtin {
    /// Function value for the function-defined builtins (`F1`, `F2`, `F3`).
    pub fn eval(self, x: f64) -> Option<f64> {
        match self {
            Builtin::F1 => Some(
                2.0 * indicator(0.2, 0.4, x)
                    + 4.0 * indicator(0.4, 0.6, x)
                    + indicator(0.6, 0.8, x)
                    + 4.0 * indicator(0.8, 1.0, x),
            ),
            Builtin::F2 => Some(
                -44.0 * (x - 0.25).max(0.0) + 48.0 * (x - 0.5).max(0.0)
                    - 56.0 * (x - 0.75).max(0.0)
                    + 28.0 * x,
            ),
            Builtin::F3 => Some(
                F3_BLOCKS
                    .iter()
                    .map(|&(lo, hi, h)| h * indicator(lo, hi, x))
                    .sum(),
            ),
            _ => None,
        }
    }
}

/// Description of a synthetic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalSpec {
    /// Polynomial pieces on `(b_(i-1), b_i]`, each given by coefficients of
    /// `1, x, x^2, ...` in the global coordinate.
    PiecewisePoly {
        breakpoints: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        #[serde(default)]
        grid: Grid,
    },
    Builtin {
        name: Builtin,
        #[serde(default)]
        grid: Grid,
    },
}

impl SignalSpec {
    pub fn builtin(name: Builtin) -> Self {
        SignalSpec::Builtin {
            name,
            grid: Grid::Linspace,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SignalSpec::PiecewisePoly {
            breakpoints,
            coefficients,
            ..
        } = self
        {
            if breakpoints.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
                return Err(Error::InvalidSpec("breakpoints must lie in (0, 1)".into()));
            }
            if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSpec(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
            if coefficients.len() != breakpoints.len() + 1 {
                return Err(Error::InvalidSpec(format!(
                    "{} breakpoints need {} pieces, got {}",
                    breakpoints.len(),
                    breakpoints.len() + 1,
                    coefficients.len()
                )));
            }
            if coefficients
                .iter()
                .any(|c| c.is_empty() || c.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::InvalidSpec(
                    "each piece needs finite coefficients".into(),
                ));
            }
        }
        Ok(())
    }

    /// Largest polynomial degree used by the spec.
    pub fn max_degree(&self) -> usize {
        match self {
            SignalSpec::PiecewisePoly { coefficients, .. } => coefficients
                .iter()
                .map(|c| c.len().saturating_sub(1))
                .max()
                .unwrap_or(0),
            SignalSpec::Builtin { name: Builtin::F2, .. } => 1,
            SignalSpec::Builtin { .. } => 0,
        }
    }
}

/// Evaluates a signal spec at `n` points.
pub fn sample_signal(spec: &SignalSpec, n: usize) -> Result<Signal> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidSpec("n must be positive".into()));
    }
    let values = match spec {
        SignalSpec::PiecewisePoly {
            breakpoints,
            coefficients,
            grid,
        } => grid
            .points(n)?
            .into_iter()
            .map(|x| {
                let piece = breakpoints.iter().filter(|b| **b < x).count();
                coefficients[piece]
                    .iter()
                    .rev()
                    .fold(0.0, |acc, c| acc * x + c)
            })
            .collect(),
        SignalSpec::Builtin { name, grid } => match name {
            Builtin::Vio1 => (1..=n).map(|i| if i == n { 5.0 } else { 0.0 }).collect(),
            Builtin::Vio2 => (1..=n).map(|i| if i <= n / 2 { 0.0 } else { 5.0 }).collect(),
            Builtin::SimpoStep => {
                let jump = n.div_ceil(2);
                (1..=n).map(|i| if i < jump { 0.0 } else { 1.0 }).collect()
            }
            f => grid
                .points(n)?
                .into_iter()
                .map(|x| f.eval(x).expect("function builtin"))
                .collect(),
        },
    };
    Signal::new(values)
}
