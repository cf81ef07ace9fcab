//! Log-space probability kernels shared by the solvers.
//!
//! Poisson and binomial point masses use Loader's saddle-point form
//! (`stirlerr` + `bd0`), which keeps full relative precision at means in
//! the tens of thousands where `k ln(mu) - mu - ln k!` cancels badly. Tails
//! are accumulated relative to their largest term, so deep tails never
//! underflow before the final exponentiation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Stop adding tail terms once they fall below this fraction of the sum.
const TAIL_EPS: f64 = 1e-18;

/// Natural log of a probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn new(ln: f64) -> Self {
        debug_assert!(ln <= 1e-12 || ln.is_nan(), "log-probability {ln} above zero");
        LogProb(ln.min(0.0))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }
}

/// Poisson distribution with a known mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonModel {
    mean: f64,
}

impl PoissonModel {
    pub fn new(mean: f64) -> Result<Self> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(Error::domain(format!("Poisson mean must be finite and >= 0, got {mean}")));
        }
        Ok(PoissonModel { mean })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `ln P{X = k}`.
    pub fn ln_pmf(&self, k: u64) -> f64 {
        ln_dpois(k, self.mean)
    }

    /// `P{X >= k}`.
    pub fn sf(&self, k: u64) -> f64 {
        poisson_tails(self.mean, k).1
    }

    /// `P{X <= k}`.
    pub fn cdf(&self, k: u64) -> f64 {
        poisson_tails(self.mean, k.saturating_add(1)).0
    }

    /// `ln P{X >= k}`, accurate far into the tail.
    pub fn ln_sf(&self, k: u64) -> LogProb {
        if k == 0 {
            return LogProb::ONE;
        }
        if self.mean == 0.0 {
            return LogProb::ZERO;
        }
        if (k as f64) > self.mean {
            LogProb::new(ln_upper_sum(self.mean, k))
        } else {
            let lower = ln_lower_sum(self.mean, k - 1).exp();
            LogProb::new((-lower).ln_1p())
        }
    }
}

/// `P{X >= k}` for `X ~ Poisson(model.mean)`.
pub fn poisson_sf(model: PoissonModel, k: u64) -> f64 {
    model.sf(k)
}

/// `P{X <= k}` for `X ~ Poisson(model.mean)`.
pub fn poisson_cdf(model: PoissonModel, k: u64) -> f64 {
    model.cdf(k)
}

/// Smallest `k` with `P{X >= k} <= alpha`.
pub fn poisson_upper_quantile(model: PoissonModel, alpha: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let ok = |k: u64| model.sf(k) <= alpha;
    let start = (model.mean.ceil() as u64).max(1);
    let hi = search::bracket_up(start, ok)
        .ok_or_else(|| Error::domain("Poisson quantile search overflowed"))?;
    Ok(search::first_true(0, hi, ok))
}

/// `(P{X < k}, P{X >= k})`, computing the smaller tail directly.
fn poisson_tails(mean: f64, k: u64) -> (f64, f64) {
    if k == 0 {
        return (0.0, 1.0);
    }
    if mean == 0.0 {
        return (1.0, 0.0);
    }
    if (k as f64) > mean {
        let upper = ln_upper_sum(mean, k).exp();
        (1.0 - upper, upper)
    } else {
        let lower = ln_lower_sum(mean, k - 1).exp();
        (lower, 1.0 - lower)
    }
}

/// `ln sum_{j >= k} pmf(j)` for `k > mean`.
fn ln_upper_sum(mean: f64, k: u64) -> f64 {
    let head = ln_dpois(k, mean);
    let mut rel = 1.0;
    let mut term = 1.0;
    let mut j = k;
    loop {
        j += 1;
        term *= mean / j as f64;
        rel += term;
        if term < rel * TAIL_EPS {
            break;
        }
    }
    head + rel.ln()
}

/// `ln sum_{j <= k} pmf(j)` for `k <= mean`.
fn ln_lower_sum(mean: f64, k: u64) -> f64 {
    let head = ln_dpois(k, mean);
    let mut rel = 1.0;
    let mut term = 1.0;
    let mut j = k;
    while j > 0 {
        term *= j as f64 / mean;
        rel += term;
        j -= 1;
        if term < rel * TAIL_EPS {
            break;
        }
    }
    head + rel.ln()
}

/// Probability that a simple random sample of `draws` units, taken without
/// replacement from `population` units of which `flawed` are flawed, contains
/// no flawed unit.
pub fn no_replacement_miss_prob(population: u64, flawed: u64, draws: u64) -> Result<f64> {
    Ok(ln_no_replacement_miss_prob(population, flawed, draws)?.prob())
}

/// Log of [`no_replacement_miss_prob`]: `sum_{i<draws} ln(1 - flawed/(population - i))`.
pub fn ln_no_replacement_miss_prob(population: u64, flawed: u64, draws: u64) -> Result<LogProb> {
    if flawed > population {
        return Err(Error::domain(format!(
            "flawed count {flawed} exceeds population {population}"
        )));
    }
    if flawed == 0 {
        return Ok(LogProb::ONE);
    }
    if draws > population - flawed {
        return Ok(LogProb::ZERO);
    }
    let f = flawed as f64;
    let ln: f64 = (0..draws)
        .map(|i| (-f / (population - i) as f64).ln_1p())
        .sum();
    Ok(LogProb::new(ln))
}

/// `P{X >= k}` for `X ~ Binomial(trials, p)`.
pub fn binomial_sf(trials: u64, p: f64, k: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if k > trials {
        return Ok(0.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let q = 1.0 - p;
    let odds = p / q;
    let mean = trials as f64 * p;
    if (k as f64) > mean {
        // Upward from k.
        let head = ln_dbinom(k, trials, p);
        let mut rel = 1.0;
        let mut term = 1.0;
        let mut j = k;
        while j < trials {
            term *= (trials - j) as f64 / (j + 1) as f64 * odds;
            rel += term;
            j += 1;
            if term < rel * TAIL_EPS {
                break;
            }
        }
        Ok((head + f64::ln(rel)).exp())
    } else {
        // P{X <= k-1}, downward, then complement.
        let top = k - 1;
        let head = ln_dbinom(top, trials, p);
        let mut rel = 1.0;
        let mut term = 1.0;
        let mut j = top;
        while j > 0 {
            term *= j as f64 / (trials - j + 1) as f64 / odds;
            rel += term;
            j -= 1;
            if term < rel * TAIL_EPS {
                break;
            }
        }
        Ok(1.0 - (head + f64::ln(rel)).exp())
    }
}

/// `ln P{X = k}` for `X ~ Poisson(mean)`.
pub(crate) fn ln_dpois(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -mean;
    }
    let x = k as f64;
    -stirlerr(k) - bd0(x, mean) - 0.5 * (2.0 * PI * x).ln()
}

/// `ln P{X = k}` for `X ~ Binomial(n, p)`, `0 < p < 1`.
pub(crate) fn ln_dbinom(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if k == 0 {
        return n as f64 * (-p).ln_1p();
    }
    if k == n {
        return n as f64 * p.ln();
    }
    let (x, nf) = (k as f64, n as f64);
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(x, nf * p) - bd0(nf - x, nf * q);
    let lf = (2.0 * PI).ln() + x.ln() + (-x / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln k! - ((k + 1/2) ln k - k + ln sqrt(2 pi))`, the Stirling remainder.
fn stirlerr(k: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if k == 0 {
        return 0.0;
    }
    let n = k as f64;
    if k <= 15 {
        let ln_fact: f64 = (2..=k).map(|i| i as f64).product::<f64>().ln();
        return ln_fact - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if k > 500 {
        (S0 - S1 / nn) / n
    } else if k > 80 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if k > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        let mut j = 1.0;
        loop {
            ej *= v;
            let s1 = s + ej / (2.0 * j + 1.0);
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1.0;
        }
    }
    x * (x / np).ln() + np - x
}

/// Searches over monotone integer predicates.
pub mod search {
    /// Doubles `start` until `pred` holds; `None` on overflow.
    pub fn bracket_up(start: u64, mut pred: impl FnMut(u64) -> bool) -> Option<u64> {
        let mut hi = start.max(1);
        while !pred(hi) {
            hi = hi.checked_mul(2)?;
        }
        Some(hi)
    }

    /// Smallest `x` in `[lo, hi]` with `pred(x)`, given `pred(hi)` and a
    /// predicate that is false-then-true on the interval.
    pub fn first_true(mut lo: u64, mut hi: u64, mut pred: impl FnMut(u64) -> bool) -> u64 {
        if pred(lo) {
            return lo;
        }
        // invariant: !pred(lo) && pred(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Largest `x` in `[lo, hi]` with `pred(x)`, given `pred(lo)` and a
    /// predicate that is true-then-false on the interval.
    pub fn last_true(lo: u64, hi: u64, mut pred: impl FnMut(u64) -> bool) -> u64 {
        if pred(hi) {
            return hi;
        }
        first_true(lo, hi, |x| !pred(x)) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_ln_fact(k: u64) -> f64 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn stirlerr_matches_direct_log_factorial() {
        for k in [1u64, 2, 7, 15, 16, 30, 36, 81, 200, 501, 5000] {
            let n = k as f64;
            let direct = naive_ln_fact(k) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
            assert!((stirlerr(k) - direct).abs() < 1e-11 * (1.0 + naive_ln_fact(k)), "k={k}");
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for mean in [0.3, 5.0, 80.0, 2500.0] {
            let total: f64 = (0..(mean as u64 * 3 + 60)).map(|k| ln_dpois(k, mean).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "mean={mean} total={total}");
        }
        let total: f64 = (0..=40).map(|k| ln_dbinom(k, 40, 0.37).exp()).sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn degenerate_poisson() {
        let m = PoissonModel::new(0.0).unwrap();
        assert_eq!(poisson_sf(m, 1), 0.0);
        assert_eq!(poisson_sf(m, 0), 1.0);
        assert_eq!(poisson_upper_quantile(m, 0.05).unwrap(), 1);
        assert_eq!(m.ln_sf(3), LogProb::ZERO);
    }

    #[test]
    fn sf_at_zero_is_one() {
        for mean in [0.0, 1e-3, 4.0, 1e4] {
            assert_eq!(PoissonModel::new(mean).unwrap().sf(0), 1.0);
        }
    }

    #[test]
    fn negative_or_nan_mean_rejected() {
        assert!(matches!(PoissonModel::new(-1.0), Err(Error::Domain(_))));
        assert!(PoissonModel::new(f64::NAN).is_err());
    }

    #[test]
    fn quantile_rejects_bad_alpha() {
        let m = PoissonModel::new(3.0).unwrap();
        for a in [0.0, 1.0, -0.1, 1.5] {
            assert!(poisson_upper_quantile(m, a).is_err());
        }
    }

    #[test]
    fn deep_tail_stays_in_log_space() {
        let m = PoissonModel::new(5.0).unwrap();
        let ln = m.ln_sf(1000).ln();
        assert!(ln.is_finite() && ln < -3000.0);
        assert_eq!(m.sf(1000), 0.0);
    }

    #[test]
    fn miss_prob_edge_cases() {
        assert_eq!(no_replacement_miss_prob(100, 0, 50).unwrap(), 1.0);
        assert_eq!(no_replacement_miss_prob(10, 2, 9).unwrap(), 0.0);
        assert_eq!(no_replacement_miss_prob(10, 10, 1).unwrap(), 0.0);
        assert!(no_replacement_miss_prob(10, 11, 1).is_err());
        let v = no_replacement_miss_prob(10, 2, 3).unwrap();
        assert!((v - 336.0 / 720.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_edges() {
        assert_eq!(binomial_sf(20, 0.0, 1).unwrap(), 0.0);
        assert_eq!(binomial_sf(20, 1.0, 20).unwrap(), 1.0);
        assert_eq!(binomial_sf(20, 0.4, 21).unwrap(), 0.0);
        assert!(binomial_sf(20, 1.1, 2).is_err());
        let p = 0.3f64;
        let exact = p.powi(20);
        assert!((binomial_sf(20, p, 20).unwrap() - exact).abs() < 1e-20);
    }

    #[test]
    fn search_helpers() {
        assert_eq!(search::bracket_up(1, |x| x >= 37), Some(64));
        assert_eq!(search::first_true(0, 64, |x| x >= 37), 37);
        assert_eq!(search::last_true(0, 64, |x| x <= 37), 37);
        assert_eq!(search::last_true(0, 64, |x| x <= 99), 64);
        assert_eq!(search::first_true(5, 64, |_| true), 5);
    }
}
