//! Passive testing: how many voters a contest needs before an attack shows
//! up as an excess of spoiled ballots.
//!
//! Benign spoils are Poisson with mean `N*b`. An attack that flips enough
//! votes to overturn a margin `m` touches `m/2` of the ballots, and a
//! fraction `d` of those voters notice and spoil, adding `N*(m/2)*d` to the
//! mean. The alarm fires when the count reaches `k`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{search, PoissonModel};

/// How the miss probability is read off the alarm threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissConvention {
    /// A miss is a count at most `k - 2`: a count of exactly `k - 1` is
    /// neither a false alarm nor a miss. This reproduces the published
    /// tables cell for cell.
    #[default]
    QuantileGap,
    /// A miss is any count below `k`.
    Strict,
}

impl MissConvention {
    fn gap(self) -> u64 {
        match self {
            MissConvention::QuantileGap => 1,
            MissConvention::Strict => 0,
        }
    }

    /// Smallest alarm threshold the convention allows.
    fn min_threshold(self) -> u64 {
        1 + self.gap()
    }

    pub fn name(self) -> &'static str {
        match self {
            MissConvention::QuantileGap => "quantile-gap",
            MissConvention::Strict => "strict",
        }
    }
}

impl std::str::FromStr for MissConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile-gap" => Ok(MissConvention::QuantileGap),
            "strict" => Ok(MissConvention::Strict),
            other => Err(Error::Config(format!("unknown miss convention `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassiveDesign {
    pub margin: f64,
    pub detect_rate: f64,
    pub base_rate: f64,
    pub fp_budget: f64,
    pub fn_budget: f64,
    pub convention: MissConvention,
}

fn unit_open(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1), got {x}")))
    }
}

impl PassiveDesign {
    /// Validated design with the default miss convention. A zero margin or
    /// detection rate is accepted here and rejected as infeasible by the
    /// solver.
    pub fn new(margin: f64, detect_rate: f64, base_rate: f64, fp_budget: f64, fn_budget: f64) -> Result<Self> {
        for (name, x) in [("margin", margin), ("detect_rate", detect_rate)] {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::domain(format!("{name} must lie in [0, 1), got {x}")));
            }
        }
        unit_open("base_rate", base_rate)?;
        unit_open("fp budget", fp_budget)?;
        unit_open("fn budget", fn_budget)?;
        Ok(PassiveDesign {
            margin,
            detect_rate,
            base_rate,
            fp_budget,
            fn_budget,
            convention: MissConvention::default(),
        })
    }

    pub fn with_convention(mut self, convention: MissConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Extra per-voter spoil rate caused by the attack.
    pub fn attack_rate(&self) -> f64 {
        self.margin / 2.0 * self.detect_rate
    }

    pub fn attacked_rate(&self) -> f64 {
        self.base_rate + self.attack_rate()
    }

    fn fp_ok(&self, n: u64, k: u64) -> bool {
        benign(n, self).sf(k) <= self.fp_budget
    }

    fn fn_ok(&self, n: u64, k: u64) -> bool {
        miss_prob(n, self, k) <= self.fn_budget
    }

    /// The alarm threshold used at contest size `n`: the smallest `k` meeting
    /// the fp budget, but no smaller than the convention allows.
    pub fn threshold_at(&self, n: u64) -> u64 {
        let q = crate::stats::poisson_upper_quantile(benign(n, self), self.fp_budget)
            .expect("fp budget validated");
        q.max(self.convention.min_threshold())
    }

    /// Whether contest size `n` admits a threshold meeting both budgets.
    pub fn feasible_at(&self, n: u64) -> bool {
        n > 0 && self.fn_ok(n, self.threshold_at(n))
    }
}

fn benign(n: u64, d: &PassiveDesign) -> PoissonModel {
    PoissonModel::new(n as f64 * d.base_rate).expect("validated rate")
}

fn attacked(n: u64, d: &PassiveDesign) -> PoissonModel {
    PoissonModel::new(n as f64 * d.attacked_rate()).expect("validated rate")
}

/// Miss probability at threshold `k` under the design's convention.
fn miss_prob(n: u64, d: &PassiveDesign, k: u64) -> f64 {
    let g = d.convention.gap();
    if k <= g {
        0.0
    } else {
        attacked(n, d).cdf(k - 1 - g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassiveSolution {
    pub contest_size: u64,
    pub alarm_threshold: u64,
    pub achieved_fp: f64,
    /// Miss probability under the design's convention.
    pub achieved_fn: f64,
    /// `P{count < k}` under attack, whatever the convention.
    pub strict_fn: f64,
}

/// `(P{benign >= k}, P{attacked < k})` at contest size `n`.
pub fn passive_power(n: u64, design: &PassiveDesign, k: u64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::domain("alarm threshold must be at least 1"));
    }
    Ok((benign(n, design).sf(k), attacked(n, design).cdf(k - 1)))
}

/// Smallest contest size at which some alarm threshold meets both budgets.
///
/// For a fixed threshold `k` the fp constraint holds on `N <= R_k` and the
/// fn constraint on `N >= M_k`. The threshold actually used at `N` is the
/// smallest one meeting the fp budget, so threshold `k` governs the plateau
/// `(R_{k-1}, R_k]`, and the answer is the left end of the first plateau
/// whose fn-feasible part is nonempty. Feasibility in `N` is a sawtooth, so
/// the plateaus are searched rather than `N` itself.
pub fn min_contest_size(design: &PassiveDesign) -> Result<PassiveSolution> {
    if design.attack_rate() <= 0.0 {
        return Err(Error::infeasible(
            "attack is statistically invisible: margin and detection rate must both be positive",
        ));
    }
    let k_min = design.convention.min_threshold();
    let r = |k: u64| -> Result<u64> {
        if k < k_min {
            return Ok(0);
        }
        let hi = search::bracket_up(1, |n| !design.fp_ok(n, k))
            .ok_or_else(|| Error::domain("fp plateau search overflowed"))?;
        Ok(search::last_true(0, hi, |n| design.fp_ok(n, k)))
    };
    let m = |k: u64| -> Result<u64> {
        let hi = search::bracket_up(1, |n| design.fn_ok(n, k))
            .ok_or_else(|| Error::domain("fn search overflowed"))?;
        Ok(search::first_true(1, hi, |n| design.fn_ok(n, k)))
    };
    // Left end of plateau k's feasible part, if any.
    let plateau = |k: u64| -> Result<Option<u64>> {
        let lo = if k == k_min { 1 } else { r(k - 1)? + 1 };
        let n = lo.max(m(k)?);
        Ok((n <= r(k)?).then_some(n))
    };

    let mut err = None;
    let mut reaches = |k: u64| match (m(k), r(k)) {
        (Ok(mk), Ok(rk)) => mk <= rk,
        (Err(e), _) | (_, Err(e)) => {
            err.get_or_insert(e);
            true
        }
    };
    let hi = search::bracket_up(k_min, &mut reaches)
        .ok_or_else(|| Error::infeasible("no alarm threshold separates the two rates"))?;
    let k0 = search::first_true(k_min, hi, &mut reaches);
    if let Some(e) = err {
        return Err(e);
    }

    let mut k = k0.saturating_sub(64).max(k_min);
    let n = loop {
        if let Some(n) = plateau(k)? {
            break n;
        }
        k += 1;
        if k > k0 + 1_000_000 {
            return Err(Error::infeasible("no feasible plateau found"));
        }
    };

    if !design.feasible_at(n) || design.feasible_at(n - 1) {
        return Err(Error::domain(format!("minimality certificate failed at N = {n}")));
    }
    let k = design.threshold_at(n);
    Ok(PassiveSolution {
        contest_size: n,
        alarm_threshold: k,
        achieved_fp: benign(n, design).sf(k),
        achieved_fn: miss_prob(n, design, k),
        strict_fn: attacked(n, design).cdf(k - 1),
    })
}

#[derive(Debug, Clone)]
pub struct PassiveRow {
    pub margin: f64,
    pub detect_rate: f64,
    /// One cell per base rate, in column order.
    pub cells: Vec<std::result::Result<PassiveSolution, String>>,
}

#[derive(Debug, Clone)]
pub struct PassiveTable {
    pub budget: f64,
    pub base_rates: Vec<f64>,
    pub rows: Vec<PassiveRow>,
}

/// Solves every (margin, detect rate, base rate) cell with fp = fn =
/// `budget`. Rows run over margins, then detection rates; columns are the
/// base rates.
pub fn table_passive(
    budget: f64,
    margins: &[f64],
    detect_rates: &[f64],
    base_rates: &[f64],
    convention: MissConvention,
) -> Result<PassiveTable> {
    if margins.is_empty() || detect_rates.is_empty() || base_rates.is_empty() {
        return Err(Error::domain("passive table grids must be nonempty"));
    }
    let mut designs = Vec::new();
    for &m in margins {
        for &d in detect_rates {
            for &b in base_rates {
                designs.push(PassiveDesign::new(m, d, b, budget, budget)?.with_convention(convention));
            }
        }
    }
    let mut cells = designs
        .par_iter()
        .map(|d| min_contest_size(d).map_err(|e| e.to_string()))
        .collect::<Vec<_>>()
        .into_iter();
    let mut rows = Vec::new();
    for &margin in margins {
        for &detect_rate in detect_rates {
            rows.push(PassiveRow {
                margin,
                detect_rate,
                cells: cells.by_ref().take(base_rates.len()).collect(),
            });
        }
    }
    Ok(PassiveTable {
        budget,
        base_rates: base_rates.to_vec(),
        rows,
    })
}

/// Margins, detection rates and base rates of the published passive tables.
pub const TABLE_MARGINS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];
pub const TABLE_DETECT_RATES: [f64; 2] = [0.07, 0.25];
pub const TABLE_BASE_RATES: [f64; 3] = [0.005, 0.01, 0.015];
