//! Lower bounds on the training sample needed to estimate the transaction
//! distribution well enough for randomized tests to work.

use std::f64::consts::E;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel::epsilon_budget;
use crate::stats::search;

/// Default fixed `zeta`. It lands every published unbounded-budget row
/// within half a percent.
pub const DEFAULT_ZETA: f64 = 0.075;
pub const DEFAULT_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZetaStrategy {
    Fixed(f64),
    /// Maximize over `zeta_i = 0.01 * 100^(i/points)`, `i = 1..=points`.
    Grid { points: usize },
}

impl Default for ZetaStrategy {
    fn default() -> Self {
        ZetaStrategy::Fixed(DEFAULT_ZETA)
    }
}

impl ZetaStrategy {
    pub fn describe(&self) -> String {
        match self {
            ZetaStrategy::Fixed(z) => format!("fixed zeta={z}"),
            ZetaStrategy::Grid { points } => format!("max over {points} log-spaced zeta in (0.01,1]"),
        }
    }

    fn grid(&self) -> Vec<f64> {
        match *self {
            ZetaStrategy::Fixed(z) => vec![z],
            ZetaStrategy::Grid { points } => (1..=points)
                .map(|i| 0.01 * 100f64.powf(i as f64 / points as f64))
                .collect(),
        }
    }
}

/// Lower bound on the worst-case expected L1 error of any estimator of a
/// distribution on `s` points from `n` samples, for a free parameter
/// `zeta` in (0, 1]. The value may be negative, in which case it says
/// nothing.
pub fn hjw_lower_bound(n: u64, s: u64, zeta: f64) -> Result<f64> {
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::domain(format!("zeta must lie in (0, 1], got {zeta}")));
    }
    if n == 0 || s == 0 {
        return Err(Error::domain("n and S must be positive"));
    }
    let (n, s) = (n as f64, s as f64);
    let x = (1.0 + zeta) * n / s;
    let main = if x > E / 16.0 {
        (E / x).sqrt() / 8.0
    } else {
        (-2.0 * x).exp()
    };
    let ln_s = s.ln();
    Ok(main - (-zeta * zeta * n / 24.0).exp() - 12.0 * (-zeta * zeta * s / (32.0 * ln_s * ln_s)).exp())
}

/// `sqrt(beta / (1 - beta))`, the Cantelli margin that turns a bound on
/// expected error into one holding with probability `beta`.
pub fn cantelli_lambda(beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok((beta / (1.0 - beta)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimaxQuery {
    pub r: f64,
    pub alpha: f64,
    /// Test budget; `None` is unbounded.
    pub tests: Option<u64>,
    pub support: u64,
    /// Estimation failure budget for finite test budgets; `None` is alpha/2.
    pub beta: Option<f64>,
    pub zeta: ZetaStrategy,
}

impl MinimaxQuery {
    pub fn new(r: f64, alpha: f64, tests: Option<u64>, support: u64) -> Self {
        MinimaxQuery {
            r,
            alpha,
            tests,
            support,
            beta: None,
            zeta: ZetaStrategy::default(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.alpha / 2.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::domain(format!("r must lie in (0, 1), got {}", self.r)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.support < 2 {
            return Err(Error::domain("support size must be at least 2"));
        }
        match self.zeta {
            ZetaStrategy::Fixed(z) if !(z > 0.0 && z <= 1.0) => {
                Err(Error::domain(format!("zeta must lie in (0, 1], got {z}")))
            }
            ZetaStrategy::Grid { points: 0 } => Err(Error::domain("zeta grid needs at least one point")),
            _ => Ok(()),
        }
    }

    /// Bound at `n` under the zeta strategy, with the zeta that attains it.
    pub fn bound(&self, n: u64) -> Result<(f64, f64)> {
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for z in self.zeta.grid() {
            let b = hjw_lower_bound(n, self.support, z)?;
            if b > best.0 {
                best = (b, z);
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    pub formula: &'static str,
}

/// Expected L1 error above which testing can be defeated.
pub fn detection_threshold(q: &MinimaxQuery) -> Result<Threshold> {
    q.validate()?;
    match q.tests {
        None => Ok(Threshold {
            value: 2.0 * q.r + cantelli_lambda(q.alpha)?,
            formula: "2r + sqrt(alpha/(1-alpha))",
        }),
        Some(t) => {
            let beta = q.beta();
            Ok(Threshold {
                value: epsilon_budget(q.alpha, beta, q.r, t)? + cantelli_lambda(beta)?,
                formula: "2((alpha-beta)^(1/T) + r - 1) + sqrt(beta/(1-beta))",
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub min_training_n: u64,
    pub zeta_used: f64,
    pub threshold: f64,
    pub formula: &'static str,
    pub bound_at_n: f64,
    /// Bound at `min_training_n - 1`, when that is a valid sample size.
    pub bound_at_prev: Option<f64>,
}

/// Training sample size at which the lower bound falls to the detection
/// threshold: `bound(n) <= threshold < bound(n - 1)`, taken at the large-n
/// end where the bound decays like `n^(-1/2)`. At small `n` the penalty
/// terms drive the bound negative, so the smallest `n` with
/// `bound(n) <= threshold` is meaningless.
pub fn min_training_sample(q: &MinimaxQuery) -> Result<BoundReport> {
    let th = detection_threshold(q)?;
    if th.value <= 0.0 {
        return Err(Error::infeasible(format!(
            "detection threshold {} is not positive: no training sample helps",
            th.value
        )));
    }
    let mut err = None;
    let mut below = |n: u64| match q.bound(n) {
        Ok((b, _)) => b <= th.value,
        Err(e) => {
            err.get_or_insert(e);
            true
        }
    };
    let mut hi = search::bracket_up(1 << 20, &mut below)
        .ok_or_else(|| Error::infeasible("bound never falls below the threshold"))?;
    let mut lo = hi;
    while lo > 1 && below(lo) {
        hi = lo;
        lo /= 2;
    }
    let n = if below(lo) { lo } else { search::first_true(lo, hi, &mut below) };
    if let Some(e) = err {
        return Err(e);
    }
    let (bound_at_n, zeta_used) = q.bound(n)?;
    let bound_at_prev = if n > 1 { Some(q.bound(n - 1)?.0) } else { None };
    Ok(BoundReport {
        min_training_n: n,
        zeta_used,
        threshold: th.value,
        formula: th.formula,
        bound_at_n,
        bound_at_prev,
    })
}
