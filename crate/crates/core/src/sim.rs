//! Monte Carlo play of the tester-versus-attacker game.
//!
//! Every trial draws from its own ChaCha stream, selected by the trial
//! index, so results do not depend on how trials are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::minimax::{hjw_lower_bound, DEFAULT_ZETA};
use crate::parallel::detection_prob_iid;
use crate::space::{estimate, l1_distance, Selector, Transaction, TransactionDistribution, TransactionSpace};
use crate::stats::PoissonModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlipMode {
    /// Each triggered transaction is altered independently with the flip
    /// probability.
    #[default]
    Independent,
    /// Exactly `floor(q * triggered)` transactions are altered.
    ExactCount,
}

#[derive(Debug, Clone)]
pub struct MalloryStrategy {
    pub trigger: Selector,
    pub flip_prob: f64,
    pub flip_mode: FlipMode,
    pub label: String,
}

#[derive(Debug, Clone)]
pub enum PatMode {
    /// Uniform over the whole transaction space.
    Uniform,
    /// Same distribution as the voters.
    Voters,
    Distribution(TransactionDistribution),
    /// Tests replayed from a fixed list, cycling if it is shorter than the
    /// test count.
    Script(Vec<Transaction>),
}

#[derive(Debug, Clone)]
pub struct PatStrategy {
    pub mode: PatMode,
    pub test_count: u64,
}

#[derive(Debug, Clone)]
pub struct PassiveParams {
    pub detect_rate: f64,
    pub base_rate: f64,
    pub alarm_threshold: u64,
    /// Altered voters matching this selector never notice.
    pub oblivious: Option<Selector>,
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub name: String,
    pub space: TransactionSpace,
    pub voter_dist: TransactionDistribution,
    pub n_voters: u64,
    pub mallory: MalloryStrategy,
    pub pat: Option<PatStrategy>,
    pub passive: Option<PassiveParams>,
    pub trials: u64,
    pub seed: u64,
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {x}")))
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::domain("a scenario needs at least one trial"));
        }
        if self.voter_dist.space() != &self.space {
            return Err(Error::domain("voter distribution is over a different space"));
        }
        if self.mallory.trigger.sets().len() != self.space.len() {
            return Err(Error::domain("trigger does not match the space"));
        }
        check_unit("flip probability", self.mallory.flip_prob)?;
        if let Some(pat) = &self.pat {
            match &pat.mode {
                PatMode::Distribution(d) if d.space() != &self.space => {
                    return Err(Error::domain("tester distribution is over a different space"))
                }
                PatMode::Script(s) if s.is_empty() => return Err(Error::domain("test script is empty")),
                PatMode::Script(s) => {
                    if let Some(t) = s.iter().find(|t| !self.space.contains(t)) {
                        return Err(Error::domain(format!("scripted test {t} is not in the space")));
                    }
                }
                _ => {}
            }
        }
        if let Some(p) = &self.passive {
            check_unit("detect rate", p.detect_rate)?;
            check_unit("base rate", p.base_rate)?;
        }
        Ok(())
    }
}

/// A frequency over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub hits: u64,
    pub trials: u64,
}

impl Estimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Estimate {
            value: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            hits,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelReport {
    pub scenario: String,
    pub seed: u64,
    pub tests: u64,
    pub detection: Estimate,
    /// Fraction of `n_voters` simulated voters whose transaction was altered.
    pub empirical_altered_fraction: f64,
    pub trigger_mass_under_tests: f64,
    pub analytic_detection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassiveReport {
    pub scenario: String,
    pub seed: u64,
    pub n_voters: u64,
    pub alarm_threshold: u64,
    pub fp: Estimate,
    #[serde(rename = "fn")]
    pub fn_: Estimate,
    pub mean_altered: f64,
    pub poisson_fp: f64,
    pub poisson_fn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub scenario: String,
    pub seed: u64,
    pub n_train: u64,
    pub trials: u64,
    pub mean_l1: f64,
    pub sd_l1: f64,
    pub min_l1: f64,
    pub max_l1: f64,
    pub support: u64,
    /// Worst-case lower bound at the same `n` and support, for comparison.
    pub lower_bound: f64,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` on a pool of `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn count_hits(trials: u64, trial: impl Fn(u64) -> bool + Sync) -> u64 {
    (0..trials).into_par_iter().filter(|&i| trial(i)).count() as u64
}

/// Stream reserved for drawing the simulated electorate.
const ELECTORATE_STREAM: u64 = u64::MAX;

fn altered_fraction(s: &SimScenario) -> f64 {
    if s.n_voters == 0 {
        return 0.0;
    }
    let mut rng = stream(s.seed, ELECTORATE_STREAM);
    let mut buf = Vec::new();
    let mut triggered = 0u64;
    let mut altered = 0u64;
    for _ in 0..s.n_voters {
        s.voter_dist.sample_into(&mut rng, &mut buf);
        if s.mallory.trigger.matches(&buf) {
            triggered += 1;
            if s.mallory.flip_mode == FlipMode::Independent && rng.random_bool(s.mallory.flip_prob) {
                altered += 1;
            }
        }
    }
    if s.mallory.flip_mode == FlipMode::ExactCount {
        altered = (s.mallory.flip_prob * triggered as f64).floor() as u64;
    }
    altered as f64 / s.n_voters as f64
}

/// Parallel testing: a trial detects the attack iff some test transaction
/// matches the trigger and is itself altered.
pub fn run_parallel_sim(s: &SimScenario) -> Result<ParallelReport> {
    s.validate()?;
    let pat = s
        .pat
        .as_ref()
        .ok_or_else(|| Error::Config(format!("scenario `{}` has no tester strategy", s.name)))?;
    let uniform;
    let test_dist = match &pat.mode {
        PatMode::Uniform => {
            uniform = TransactionDistribution::uniform(&s.space);
            Some(&uniform)
        }
        PatMode::Voters => Some(&s.voter_dist),
        PatMode::Distribution(d) => Some(d),
        PatMode::Script(_) => None,
    };
    let q = s.mallory.flip_prob;
    let trigger = &s.mallory.trigger;
    let n = pat.test_count;

    let hits = count_hits(s.trials, |i| {
        let mut rng = stream(s.seed, i);
        let mut buf = Vec::with_capacity(s.space.len());
        for j in 0..n {
            let matched = match (&pat.mode, test_dist) {
                (PatMode::Script(script), _) => trigger.matches(&script[(j % script.len() as u64) as usize].0),
                (_, Some(d)) => {
                    d.sample_into(&mut rng, &mut buf);
                    trigger.matches(&buf)
                }
                _ => unreachable!(),
            };
            if matched && rng.random_bool(q) {
                return true;
            }
        }
        false
    });

    let (mass, analytic) = match (&pat.mode, test_dist) {
        (PatMode::Script(script), _) => {
            let matching = (0..n)
                .filter(|&j| trigger.matches(&script[(j % script.len() as u64) as usize].0))
                .count() as u64;
            (matching as f64 / n.max(1) as f64, detection_prob_iid(q, matching)?)
        }
        (_, Some(d)) => {
            let m = d.mass(trigger).clamp(0.0, 1.0);
            (m, detection_prob_iid(m * q, n)?)
        }
        _ => unreachable!(),
    };

    Ok(ParallelReport {
        scenario: s.name.clone(),
        seed: s.seed,
        tests: n,
        detection: Estimate::from_counts(hits, s.trials),
        empirical_altered_fraction: altered_fraction(s),
        trigger_mass_under_tests: mass,
        analytic_detection: analytic,
    })
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Passive testing: counts spoiled ballots voter by voter (aggregated
/// exactly through binomial draws) and raises the alarm at the threshold.
/// Even trial streams run without the attack, odd ones with it.
pub fn run_passive_sim(s: &SimScenario) -> Result<PassiveReport> {
    s.validate()?;
    let p = s
        .passive
        .as_ref()
        .ok_or_else(|| Error::Config(format!("scenario `{}` has no passive parameters", s.name)))?;
    let n = s.n_voters;
    let m_trig = s.voter_dist.mass(&s.mallory.trigger).clamp(0.0, 1.0);
    let obl = match &p.oblivious {
        Some(o) if m_trig > 0.0 => {
            (s.voter_dist.mass(&s.mallory.trigger.intersect(o)) / m_trig).clamp(0.0, 1.0)
        }
        _ => 0.0,
    };
    let k = p.alarm_threshold;
    let q = s.mallory.flip_prob;
    let noticed = 1.0 - (1.0 - p.base_rate) * (1.0 - p.detect_rate);

    let false_alarms = count_hits(s.trials, |i| {
        let mut rng = stream(s.seed, 2 * i);
        binomial(&mut rng, n, p.base_rate) >= k
    });
    let mut altered_total = 0u64;
    let misses = {
        let per_trial: Vec<(bool, u64)> = (0..s.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(s.seed, 2 * i + 1);
                let triggered = binomial(&mut rng, n, m_trig);
                let altered = match s.mallory.flip_mode {
                    FlipMode::Independent => binomial(&mut rng, triggered, q),
                    FlipMode::ExactCount => (q * triggered as f64).floor() as u64,
                };
                let oblivious = binomial(&mut rng, altered, obl);
                let spoils = binomial(&mut rng, n - altered, p.base_rate)
                    + binomial(&mut rng, altered - oblivious, noticed)
                    + binomial(&mut rng, oblivious, p.base_rate);
                (spoils < k, altered)
            })
            .collect();
        let mut misses = 0;
        for (miss, altered) in per_trial {
            misses += miss as u64;
            altered_total += altered;
        }
        misses
    };

    let attack_rate = m_trig * q * (1.0 - obl) * p.detect_rate;
    let benign = PoissonModel::new(n as f64 * p.base_rate)?;
    let attacked = PoissonModel::new(n as f64 * (p.base_rate + attack_rate))?;
    Ok(PassiveReport {
        scenario: s.name.clone(),
        seed: s.seed,
        n_voters: n,
        alarm_threshold: k,
        fp: Estimate::from_counts(false_alarms, s.trials),
        fn_: Estimate::from_counts(misses, s.trials),
        mean_altered: altered_total as f64 / s.trials as f64,
        poisson_fp: benign.sf(k),
        poisson_fn: if k == 0 { 0.0 } else { attacked.cdf(k - 1) },
    })
}

/// L1 error of the plug-in estimate from `n_train` draws, over `trials`
/// independent training sets.
pub fn run_estimation_study(
    name: &str,
    true_dist: &TransactionDistribution,
    n_train: u64,
    trials: u64,
    seed: u64,
) -> Result<EstimationReport> {
    if n_train == 0 || trials == 0 {
        return Err(Error::domain("training size and trial count must be positive"));
    }
    let space = true_dist.space();
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let training: Vec<Transaction> = (0..n_train).map(|_| true_dist.sample(&mut rng)).collect();
            let est = estimate(space, &training)?;
            l1_distance(&est, true_dist)
        })
        .collect::<Result<_>>()?;
    let t = trials as f64;
    let mean = errors.iter().sum::<f64>() / t;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / t;
    let support = match true_dist.support() {
        Some((pts, _)) => pts.len() as u64,
        None => space.cardinality_u64().unwrap_or(u64::MAX),
    };
    Ok(EstimationReport {
        scenario: name.to_string(),
        seed,
        n_train,
        trials,
        mean_l1: mean,
        sd_l1: var.sqrt(),
        min_l1: errors.iter().copied().fold(f64::INFINITY, f64::min),
        max_l1: errors.iter().copied().fold(0.0, f64::max),
        support,
        lower_bound: hjw_lower_bound(n_train, support.max(2), DEFAULT_ZETA)?,
    })
}
