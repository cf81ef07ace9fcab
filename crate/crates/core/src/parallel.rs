//! Closed-form detection probabilities for pre-election and parallel
//! testing, and the sample-size solvers built on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{ln_no_replacement_miss_prob, search};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")))
    }
}

fn check_open(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// Budgets are met up to rounding: an exact tie computed in floating point
/// can land an ulp or two on the wrong side.
fn tie(budget: f64) -> f64 {
    budget * (1.0 + 1e-12)
}

/// `1 - (1-p)^n`: chance that at least one of `n` independent tests hits an
/// event of probability `p`.
pub fn detection_prob_iid(p: f64, n: u64) -> Result<f64> {
    check_prob("p", p)?;
    if n == 0 || p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    Ok(-(n as f64 * (-p).ln_1p()).exp_m1())
}

/// Smallest `t` with `1 - (1-p)^t >= confidence`.
pub fn min_tests_iid(p: f64, confidence: f64) -> Result<u64> {
    check_prob("p", p)?;
    check_open("confidence", confidence)?;
    if p == 0.0 {
        return Err(Error::infeasible("an event of probability 0 is never detected"));
    }
    if p == 1.0 {
        return Ok(1);
    }
    let guess = ((-confidence).ln_1p() / (-p).ln_1p()).ceil().max(1.0) as u64;
    let ok = |t: u64| detection_prob_iid(p, t).map(|d| 1.0 - d <= tie(1.0 - confidence)).unwrap_or(false);
    // The closed form can be one off after rounding; settle it exactly.
    let mut t = guess;
    while t > 1 && ok(t - 1) {
        t -= 1;
    }
    while !ok(t) {
        t += 1;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleBoundQuery {
    pub population: u64,
    pub flawed: u64,
    pub confidence: f64,
}

/// Smallest number of printouts, drawn without replacement, that contains
/// a flawed one with probability at least `confidence`.
pub fn oracle_min_samples(q: &OracleBoundQuery) -> Result<u64> {
    check_open("confidence", q.confidence)?;
    if q.flawed > q.population {
        return Err(Error::domain("more flawed printouts than printouts"));
    }
    if q.flawed == 0 {
        return Err(Error::infeasible("no flawed printouts to find"));
    }
    let alpha = 1.0 - q.confidence;
    let miss = |n: u64| {
        ln_no_replacement_miss_prob(q.population, q.flawed, n)
            .expect("flawed <= population")
            .prob()
    };
    // n = V - F + 1 draws always include a flawed unit.
    Ok(search::first_true(1, q.population - q.flawed + 1, |n| miss(n) <= tie(alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfUp,
    Floor,
    Ceil,
}

/// How test transactions are matched against altered voter transactions
/// when sizing the electorate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case", tag = "sampling", content = "rounding")]
pub enum ElectorateConvention {
    /// Each test independently falls in the altered class with probability
    /// `r`.
    #[default]
    WithReplacement,
    /// Tests are a simple random sample of the voters' transactions, of which
    /// `round(r * voters)` are altered.
    WithoutReplacement(Rounding),
}

impl ElectorateConvention {
    pub fn describe(&self) -> String {
        match self {
            ElectorateConvention::WithReplacement => "iid tests, miss = (1-r)^tests".into(),
            ElectorateConvention::WithoutReplacement(r) => format!(
                "tests without replacement over voter transactions, altered = {}(r*voters)",
                match r {
                    Rounding::HalfUp => "round-half-up",
                    Rounding::Floor => "floor",
                    Rounding::Ceil => "ceil",
                }
            ),
        }
    }
}

impl std::str::FromStr for ElectorateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use ElectorateConvention::*;
        Ok(match s {
            "with-replacement" => WithReplacement,
            "without-replacement" | "without-replacement-half-up" => WithoutReplacement(Rounding::HalfUp),
            "without-replacement-floor" => WithoutReplacement(Rounding::Floor),
            "without-replacement-ceil" => WithoutReplacement(Rounding::Ceil),
            other => return Err(Error::Config(format!("unknown electorate convention `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetedTestQuery {
    pub tests_per_bmd_per_day: u64,
    pub bmd_daily_capacity: u64,
    pub altered_fraction: f64,
    pub confidence: f64,
    pub convention: ElectorateConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElectorateSolution {
    pub voters: u64,
    pub bmds: u64,
    pub tests: u64,
    /// Altered transactions assumed (only meaningful without replacement).
    pub altered: u64,
    pub detection_prob: f64,
    pub convention: ElectorateConvention,
}

fn round_altered(r: f64, voters: u64, rounding: Rounding) -> u64 {
    let x = r * voters as f64;
    let f = match rounding {
        Rounding::HalfUp => (x + 0.5).floor(),
        Rounding::Floor => x.floor(),
        Rounding::Ceil => x.ceil(),
    };
    (f as u64).min(voters)
}

/// Detection probability with `bmds` machines under the query's convention,
/// and the altered count it assumed.
pub fn electorate_detection(q: &BudgetedTestQuery, bmds: u64) -> Result<(f64, u64)> {
    let voters = bmds * q.bmd_daily_capacity;
    let tests = bmds * q.tests_per_bmd_per_day;
    match q.convention {
        ElectorateConvention::WithReplacement => Ok((detection_prob_iid(q.altered_fraction, tests)?, 0)),
        ElectorateConvention::WithoutReplacement(rounding) => {
            let f = round_altered(q.altered_fraction, voters, rounding);
            let miss = ln_no_replacement_miss_prob(voters, f, tests)?.prob();
            Ok((1.0 - miss, f))
        }
    }
}

/// Upper end of the machine-count scan.
const MAX_BMDS: u64 = 10_000_000;

/// Smallest number of BMDs (each running `tests_per_bmd_per_day` tests among
/// `bmd_daily_capacity` transactions) at which the altered class is caught
/// with probability at least `confidence`.
pub fn min_electorate_for_budget(q: &BudgetedTestQuery) -> Result<ElectorateSolution> {
    if q.tests_per_bmd_per_day == 0 || q.tests_per_bmd_per_day > q.bmd_daily_capacity {
        return Err(Error::domain("need 1 <= tests per BMD <= BMD capacity"));
    }
    if !(q.altered_fraction > 0.0 && q.altered_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "altered fraction must lie in (0, 1], got {}",
            q.altered_fraction
        )));
    }
    check_open("confidence", q.confidence)?;
    // Scanned rather than bisected: rounding the altered count makes the
    // without-replacement probability jump around.
    for bmds in 1..=MAX_BMDS {
        let (p, altered) = electorate_detection(q, bmds)?;
        if p >= q.confidence {
            return Ok(ElectorateSolution {
                voters: bmds * q.bmd_daily_capacity,
                bmds,
                tests: bmds * q.tests_per_bmd_per_day,
                altered,
                detection_prob: p,
                convention: q.convention,
            });
        }
    }
    Err(Error::infeasible(format!("no electorate of up to {MAX_BMDS} BMDs reaches the confidence")))
}

/// Largest shift in a contest's margin obtainable by altering a fraction
/// `x` of all ballots, when the contest is on `share` of the ballots and a
/// fraction `undervote` of those skip it: `2x / (share * (1 - undervote))`.
pub fn margin_leverage(x: f64, share: f64, undervote: f64) -> Result<f64> {
    let denom = share * (1.0 - undervote);
    if !(denom > 0.0) || !x.is_finite() {
        return Err(Error::domain("contest share times (1 - undervote rate) must be positive"));
    }
    Ok(2.0 * x / denom)
}

/// `2((alpha - beta)^(1/T) + r - 1)`: the largest L1 estimation error at
/// which `T` tests drawn from the estimate still catch an `r` fraction.
/// Negative when no estimate is good enough.
pub fn epsilon_budget(alpha: f64, beta: f64, r: f64, t: u64) -> Result<f64> {
    check_open("r", r)?;
    check_prob("alpha", alpha)?;
    check_prob("beta", beta)?;
    if beta >= alpha {
        return Err(Error::infeasible("no test count works unless beta < alpha"));
    }
    if t == 0 {
        return Err(Error::domain("test budget must be positive"));
    }
    Ok(2.0 * (((alpha - beta).ln() / t as f64).exp_m1() + r))
}

/// Smallest `t` with `(1 + eps/2 - r)^t <= alpha - beta`.
pub fn min_tests_with_estimation_error(r: f64, eps: f64, alpha: f64, beta: f64) -> Result<u64> {
    check_open("r", r)?;
    check_prob("alpha", alpha)?;
    check_prob("beta", beta)?;
    if !(eps >= 0.0) {
        return Err(Error::domain(format!("epsilon must be nonnegative, got {eps}")));
    }
    if beta >= alpha {
        return Err(Error::infeasible("no test count works unless beta < alpha"));
    }
    if eps >= 2.0 * r {
        return Err(Error::infeasible(
            "estimation error of 2r or more can hide the altered transactions entirely",
        ));
    }
    let p = r - eps / 2.0;
    min_tests_iid(p, 1.0 - (alpha - beta))
}

/// One attack a tester must cover in the time ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackStep {
    pub label: String,
    /// Chance that a test in the triggering class is altered.
    pub flip_prob: f64,
    pub minutes_per_test: f64,
    /// Number of vote patterns the tests must be repeated for.
    pub variants: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub label: String,
    pub tests: u64,
    pub detection_prob: f64,
    pub minutes: f64,
    pub cumulative_minutes: f64,
}

/// Tests and machine time needed to cover each attack at `confidence`,
/// accumulated in order.
pub fn test_time_ledger(steps: &[AttackStep], confidence: f64) -> Result<Vec<LedgerRow>> {
    let mut total = 0.0;
    steps
        .iter()
        .map(|s| {
            if !(s.minutes_per_test >= 0.0) {
                return Err(Error::domain("minutes per test must be nonnegative"));
            }
            let tests = min_tests_iid(s.flip_prob, confidence)?;
            let minutes = tests as f64 * s.minutes_per_test * s.variants as f64;
            total += minutes;
            Ok(LedgerRow {
                label: s.label.clone(),
                tests,
                detection_prob: detection_prob_iid(s.flip_prob, tests)?,
                minutes,
                cumulative_minutes: total,
            })
        })
        .collect()
}
