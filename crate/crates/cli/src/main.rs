use std::path::PathBuf;
use std::process::ExitCode;

use bmdlimits::config::{load_scenarios, load_space};
use bmdlimits::feasibility::{load_turnout, passive_feasibility_join, summarize, turnout_cdf, ThresholdSummary};
use bmdlimits::minimax::{min_training_sample, MinimaxQuery, ZetaStrategy, DEFAULT_ZETA};
use bmdlimits::parallel::{
    detection_prob_iid, epsilon_budget, margin_leverage, min_electorate_for_budget, min_tests_iid,
    min_tests_with_estimation_error, oracle_min_samples, test_time_ledger, AttackStep, BudgetedTestQuery,
    ElectorateConvention, OracleBoundQuery,
};
use bmdlimits::passive::{
    min_contest_size, MissConvention, PassiveDesign, TABLE_BASE_RATES, TABLE_DETECT_RATES, TABLE_MARGINS,
};
use bmdlimits::published;
use bmdlimits::sim::{run_estimation_study, run_parallel_sim, run_passive_sim, with_workers, Estimate};
use bmdlimits::space::{Preset, TransactionSpace};
use bmdlimits::stats::no_replacement_miss_prob;
use bmdlimits::table::{OutputFormat, Table};
use bmdlimits::{repro, Error};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "bmdlimits", version, about = "Detection limits of testing ballot-marking devices")]
struct Cli {
    /// Output format: csv, markdown or json-lines.
    #[arg(long, global = true, env = "BMDLIMITS_FORMAT", default_value = "csv")]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum contest size for spoiled-ballot monitoring.
    Passive(PassiveArgs),
    /// Detection probabilities and test counts for parallel testing.
    #[command(subcommand)]
    Parallel(ParallelCmd),
    /// Printouts an oracle must inspect to catch an altered one.
    Oracle(OracleArgs),
    /// Training-sample lower bounds for estimating the voter distribution.
    Minimax(MinimaxArgs),
    /// Size of a transaction space.
    Cardinality(CardinalityArgs),
    /// Run Monte Carlo scenarios from a TOML file.
    Simulate(SimulateArgs),
    /// Which jurisdictions are large enough for passive testing.
    Feasibility(FeasibilityArgs),
    /// Recompute every published figure and classify the match.
    Repro,
}

#[derive(Args)]
struct PassiveArgs {
    /// Margins (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_MARGINS.to_vec())]
    margin: Vec<f64>,
    /// Fractions of affected voters who notice and spoil.
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_DETECT_RATES.to_vec())]
    detect_rate: Vec<f64>,
    /// Benign spoil rates.
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_BASE_RATES.to_vec())]
    base_rate: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    fp: f64,
    #[arg(long = "fn", default_value_t = 0.05)]
    fn_: f64,
    /// quantile-gap (matches the published tables) or strict.
    #[arg(long, default_value = "quantile-gap")]
    convention: MissConvention,
    /// Lay out as margin x detect rate rows with one column per base rate.
    #[arg(long)]
    grid: bool,
}

#[derive(Subcommand)]
enum ParallelCmd {
    /// `1-(1-p)^n`, or the smallest n reaching a confidence.
    Iid {
        #[arg(long)]
        p: f64,
        #[arg(long, conflicts_with = "confidence", required_unless_present = "confidence")]
        tests: Option<u64>,
        #[arg(long)]
        confidence: Option<f64>,
    },
    /// Smallest electorate whose daily test budget reaches a confidence.
    Electorate {
        #[arg(long, default_value_t = 13)]
        tests_per_bmd: u64,
        #[arg(long, default_value_t = 140)]
        capacity: u64,
        #[arg(long)]
        altered: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        /// with-replacement, without-replacement[-floor|-ceil]
        #[arg(long, default_value = "with-replacement")]
        convention: ElectorateConvention,
    },
    /// Margin shift from altering a fraction of all ballots.
    Leverage {
        #[arg(long)]
        altered: f64,
        #[arg(long)]
        share: f64,
        #[arg(long, default_value_t = 0.0)]
        undervote: f64,
    },
    /// Largest estimation error a test budget tolerates.
    Epsilon {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        tests: u64,
    },
    /// Tests needed when tests are drawn from an estimate with L1 error epsilon.
    TestsWithError {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
    },
    /// Tests and tester time to cover a list of attacks.
    Ledger {
        /// label:flip_prob:minutes_per_test:variants (repeatable).
        #[arg(long = "attack")]
        attacks: Vec<String>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    population: u64,
    #[arg(long)]
    flawed: u64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Args)]
struct MinimaxArgs {
    /// Altered fractions.
    #[arg(long, value_delimiter = ',')]
    r: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    confidence: Vec<f64>,
    /// Test budgets; `inf` for unbounded.
    #[arg(long, value_delimiter = ',', value_parser = parse_limit)]
    tests: Vec<Limit>,
    #[arg(long, default_value_t = published::MINIMAX_SUPPORT)]
    support: u64,
    /// `fixed:Z` or `grid:POINTS`.
    #[arg(long, default_value_t = format!("fixed:{DEFAULT_ZETA}"))]
    zeta: String,
    /// Estimation failure budget for finite test budgets (default alpha/2).
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Clone, Copy)]
struct Limit(Option<u64>);

fn parse_limit(s: &str) -> Result<Limit, String> {
    match s {
        "inf" | "Inf" | "unbounded" => Ok(Limit(None)),
        _ => s.parse().map(|t| Limit(Some(t))).map_err(|_| format!("`{s}` is not a test count or `inf`")),
    }
}

fn parse_zeta(s: &str) -> Result<ZetaStrategy, Error> {
    let bad = || Error::Config(format!("zeta must be `fixed:Z` or `grid:POINTS`, got `{s}`"));
    match s.split_once(':') {
        Some(("fixed", z)) => z.parse().map(ZetaStrategy::Fixed).map_err(|_| bad()),
        Some(("grid", g)) => g.parse().map(|points| ZetaStrategy::Grid { points }).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

#[derive(Args)]
struct CardinalityArgs {
    #[arg(long, conflicts_with = "space", required_unless_present = "space")]
    preset: Option<Preset>,
    /// TOML file with a `[space]` table.
    #[arg(long)]
    space: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Override every scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override every scenario's trial count.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args)]
struct FeasibilityArgs {
    /// CSV with columns state,jurisdiction,turnout.
    #[arg(long)]
    data: PathBuf,
    /// Turnout thresholds to summarize against.
    #[arg(long, value_delimiter = ',')]
    threshold: Vec<u64>,
    /// Join against the passive design given by these flags.
    #[arg(long, requires_all = ["detect_rate", "base_rate"])]
    margin: Option<f64>,
    #[arg(long)]
    detect_rate: Option<f64>,
    #[arg(long)]
    base_rate: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    fp: f64,
    #[arg(long = "fn", default_value_t = 0.05)]
    fn_: f64,
    /// Print one row per jurisdiction for the join.
    #[arg(long, requires = "margin")]
    per_jurisdiction: bool,
    /// Print the empirical turnout CDF instead.
    #[arg(long)]
    cdf: bool,
}

enum Failure {
    Lib(Error),
    ReproFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    match run(cli.command, cli.format, &mut out) {
        Ok(()) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::ReproFailed) => {
            print!("{out}");
            eprintln!("error: some required reproduction rows failed");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command, format: OutputFormat, out: &mut String) -> Result<(), Failure> {
    let table = match cmd {
        Command::Passive(a) => passive(a)?,
        Command::Parallel(p) => parallel(p)?,
        Command::Oracle(a) => oracle(a)?,
        Command::Minimax(a) => minimax(a)?,
        Command::Cardinality(a) => cardinality(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Feasibility(a) => feasibility(a)?,
        Command::Repro => {
            let m = repro::manifest()?;
            out.push_str(&m.to_table().render(format));
            return if m.all_required_pass() { Ok(()) } else { Err(Failure::ReproFailed) };
        }
    };
    out.push_str(&table.render(format));
    Ok(())
}

fn passive(a: PassiveArgs) -> Result<Table, Error> {
    let mut solved = Vec::new();
    for &m in &a.margin {
        for &d in &a.detect_rate {
            for &b in &a.base_rate {
                let design = PassiveDesign::new(m, d, b, a.fp, a.fn_)?.with_convention(a.convention);
                solved.push((design, min_contest_size(&design)?));
            }
        }
    }
    if a.grid {
        let mut headers = vec!["margin".to_string(), "detect_rate".to_string()];
        headers.extend(a.base_rate.iter().map(|b| format!("N_base_{b}")));
        let mut t = Table::new(headers);
        for chunk in solved.chunks(a.base_rate.len()) {
            let mut row = vec![json!(chunk[0].0.margin), json!(chunk[0].0.detect_rate)];
            row.extend(chunk.iter().map(|(_, s)| json!(s.contest_size)));
            t.push(row);
        }
        return Ok(t);
    }
    let mut t = Table::new([
        "margin",
        "detect_rate",
        "base_rate",
        "fp_budget",
        "fn_budget",
        "contest_size",
        "alarm_threshold",
        "achieved_fp",
        "achieved_fn",
        "strict_fn",
        "convention",
    ]);
    for (d, s) in solved {
        t.push(vec![
            json!(d.margin),
            json!(d.detect_rate),
            json!(d.base_rate),
            json!(d.fp_budget),
            json!(d.fn_budget),
            json!(s.contest_size),
            json!(s.alarm_threshold),
            json!(s.achieved_fp),
            json!(s.achieved_fn),
            json!(s.strict_fn),
            json!(d.convention.name()),
        ]);
    }
    Ok(t)
}

fn single(pairs: &[(&str, Value)]) -> Table {
    let mut t = Table::new(pairs.iter().map(|p| p.0));
    t.push(pairs.iter().map(|p| p.1.clone()).collect());
    t
}

fn parallel(cmd: ParallelCmd) -> Result<Table, Error> {
    Ok(match cmd {
        ParallelCmd::Iid { p, tests, confidence } => {
            let n = match (tests, confidence) {
                (Some(n), _) => n,
                (None, Some(c)) => min_tests_iid(p, c)?,
                (None, None) => unreachable!("clap requires one"),
            };
            single(&[("p", json!(p)), ("tests", json!(n)), ("detection_prob", json!(detection_prob_iid(p, n)?))])
        }
        ParallelCmd::Electorate {
            tests_per_bmd,
            capacity,
            altered,
            confidence,
            convention,
        } => {
            let s = min_electorate_for_budget(&BudgetedTestQuery {
                tests_per_bmd_per_day: tests_per_bmd,
                bmd_daily_capacity: capacity,
                altered_fraction: altered,
                confidence,
                convention,
            })?;
            single(&[
                ("voters", json!(s.voters)),
                ("bmds", json!(s.bmds)),
                ("tests", json!(s.tests)),
                // with replacement there is no integer altered count
                ("altered", if matches!(s.convention, ElectorateConvention::WithReplacement) { Value::Null } else { json!(s.altered) }),
                ("detection_prob", json!(s.detection_prob)),
                ("convention", json!(s.convention.describe())),
            ])
        }
        ParallelCmd::Leverage { altered, share, undervote } => single(&[
            ("altered", json!(altered)),
            ("share", json!(share)),
            ("undervote", json!(undervote)),
            ("margin_shift", json!(margin_leverage(altered, share, undervote)?)),
        ]),
        ParallelCmd::Epsilon { alpha, beta, r, tests } => {
            single(&[("epsilon", json!(epsilon_budget(alpha, beta, r, tests)?))])
        }
        ParallelCmd::TestsWithError { r, epsilon, alpha, beta } => {
            single(&[("tests", json!(min_tests_with_estimation_error(r, epsilon, alpha, beta)?))])
        }
        ParallelCmd::Ledger { attacks, confidence } => {
            let steps = if attacks.is_empty() {
                vec![
                    step("attack-1", 0.5, 10.0, 5),
                    step("attack-2", 0.25, 5.0, 5),
                    step("attack-3", 0.25, 5.0, 5),
                ]
            } else {
                attacks.iter().map(|s| parse_attack(s)).collect::<Result<_, _>>()?
            };
            let mut t = Table::new(["attack", "tests", "detection_prob", "minutes", "cumulative_minutes"]);
            for r in test_time_ledger(&steps, confidence)? {
                t.push(vec![
                    json!(r.label),
                    json!(r.tests),
                    json!(r.detection_prob),
                    json!(r.minutes),
                    json!(r.cumulative_minutes),
                ]);
            }
            t
        }
    })
}

fn step(label: &str, flip_prob: f64, minutes_per_test: f64, variants: u64) -> AttackStep {
    AttackStep {
        label: label.into(),
        flip_prob,
        minutes_per_test,
        variants,
    }
}

fn parse_attack(s: &str) -> Result<AttackStep, Error> {
    let bad = || Error::Config(format!("attack must be label:flip_prob:minutes:variants, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [label, q, min, var] = parts[..] else {
        return Err(bad());
    };
    Ok(step(
        label,
        q.parse().map_err(|_| bad())?,
        min.parse().map_err(|_| bad())?,
        var.parse().map_err(|_| bad())?,
    ))
}

fn oracle(a: OracleArgs) -> Result<Table, Error> {
    let q = OracleBoundQuery {
        population: a.population,
        flawed: a.flawed,
        confidence: a.confidence,
    };
    let n = oracle_min_samples(&q)?;
    Ok(single(&[
        ("population", json!(a.population)),
        ("flawed", json!(a.flawed)),
        ("confidence", json!(a.confidence)),
        ("samples", json!(n)),
        ("miss_prob", json!(no_replacement_miss_prob(a.population, a.flawed, n)?)),
        ("miss_prob_one_fewer", json!(no_replacement_miss_prob(a.population, a.flawed, n - 1)?)),
    ]))
}

fn minimax(a: MinimaxArgs) -> Result<Table, Error> {
    let zeta = parse_zeta(&a.zeta)?;
    let rows: Vec<(f64, Option<u64>, f64)> = if a.r.is_empty() && a.confidence.is_empty() && a.tests.is_empty() {
        published::MINIMAX.iter().map(|&(c, t, r, _)| (c, t, r)).collect()
    } else {
        let cs = if a.confidence.is_empty() { vec![0.99, 0.95] } else { a.confidence };
        let ts = if a.tests.is_empty() { vec![Limit(None)] } else { a.tests };
        let rs = if a.r.is_empty() { vec![0.005, 0.01, 0.03, 0.05] } else { a.r };
        let mut v = Vec::new();
        for &t in &ts {
            for &c in &cs {
                for &r in &rs {
                    v.push((c, t.0, r));
                }
            }
        }
        v
    };
    let mut t = Table::new([
        "confidence",
        "test_limit",
        "altered_fraction",
        "bound_millions",
        "min_training_n",
        "zeta",
        "threshold",
        "bound_at_n",
        "published_millions",
        "ratio",
    ]);
    for (c, tests, r) in rows {
        let mut q = MinimaxQuery::new(r, 1.0 - c, tests, a.support);
        q.beta = a.beta;
        q.zeta = zeta;
        let rep = min_training_sample(&q)?;
        let published = (a.support == published::MINIMAX_SUPPORT)
            .then(|| published::MINIMAX.iter().find(|p| p.0 == c && p.1 == tests && p.2 == r).map(|p| p.3))
            .flatten();
        let millions = rep.min_training_n as f64 / 1e6;
        t.push(vec![
            json!(c),
            json!(tests.map_or("inf".to_string(), |t| t.to_string())),
            json!(r),
            json!(format!("{millions:.3}")),
            json!(rep.min_training_n),
            json!(rep.zeta_used),
            json!(rep.threshold),
            json!(rep.bound_at_n),
            published.map_or(Value::Null, |p| json!(p)),
            published.map_or(Value::Null, |p| json!(format!("{:.4}", millions / p))),
        ]);
    }
    Ok(t)
}

fn cardinality(a: CardinalityArgs) -> Result<Table, Error> {
    let (name, space) = match (a.preset, a.space) {
        (Some(p), _) => (format!("{p:?}").to_lowercase(), TransactionSpace::preset(p)),
        (None, Some(path)) => (path.display().to_string(), load_space(&path)?.0),
        (None, None) => unreachable!("clap requires one"),
    };
    let c = space.cardinality();
    let digits = c.to_string().len();
    Ok(single(&[
        ("space", json!(name)),
        ("attributes", json!(space.len())),
        ("cardinality", json!(c.to_string())),
        ("log10_floor", json!(digits - 1)),
    ]))
}

fn est_row(t: &mut Table, scenario: &str, kind: &str, seed: u64, e: &Estimate, analytic: f64, extra: String) {
    t.push(vec![
        json!(scenario),
        json!(kind),
        json!(seed),
        json!(e.trials),
        json!(e.hits),
        json!(e.value),
        json!(e.std_error),
        json!(analytic),
        json!(extra),
    ]);
}

fn simulate(a: SimulateArgs) -> Result<Table, Error> {
    let mut scenarios = load_scenarios(&a.scenario)?;
    for s in &mut scenarios {
        if let Some(seed) = a.seed {
            s.scenario.seed = seed;
        }
        if let Some(trials) = a.trials {
            s.scenario.trials = trials;
            if let Some(e) = s.estimation.as_mut() {
                e.1 = trials;
            }
        }
    }
    let mut t = Table::new([
        "scenario", "metric", "seed", "trials", "hits", "estimate", "std_error", "analytic", "details",
    ]);
    with_workers(a.workers, || -> Result<(), Error> {
        for ls in &scenarios {
            let s = &ls.scenario;
            if s.pat.is_some() {
                let r = run_parallel_sim(s)?;
                est_row(
                    &mut t,
                    &s.name,
                    "detection",
                    s.seed,
                    &r.detection,
                    r.analytic_detection,
                    format!(
                        "tests={} trigger_mass={} altered_fraction={}",
                        r.tests, r.trigger_mass_under_tests, r.empirical_altered_fraction
                    ),
                );
            }
            if s.passive.is_some() {
                let r = run_passive_sim(s)?;
                let extra = format!("n_voters={} k={} mean_altered={}", r.n_voters, r.alarm_threshold, r.mean_altered);
                est_row(&mut t, &s.name, "false_positive", s.seed, &r.fp, r.poisson_fp, extra.clone());
                est_row(&mut t, &s.name, "false_negative", s.seed, &r.fn_, r.poisson_fn, extra);
            }
            if let Some((n_train, trials)) = ls.estimation {
                let r = run_estimation_study(&s.name, &s.voter_dist, n_train, trials, s.seed)?;
                t.push(vec![
                    json!(s.name),
                    json!("mean_l1"),
                    json!(s.seed),
                    json!(r.trials),
                    Value::Null,
                    json!(r.mean_l1),
                    json!(r.sd_l1 / (r.trials as f64).sqrt()),
                    json!(r.lower_bound),
                    json!(format!(
                        "n_train={} support={} sd={} min={} max={}",
                        r.n_train, r.support, r.sd_l1, r.min_l1, r.max_l1
                    )),
                ]);
            }
        }
        Ok(())
    })??;
    Ok(t)
}

fn threshold_row(t: &mut Table, label: &str, s: &ThresholdSummary, median: u64, n: usize) {
    t.push(vec![
        json!(label),
        json!(s.threshold),
        json!(n),
        json!(median),
        json!(s.below),
        json!(s.fraction_below),
        json!(s.states.len()),
        json!(s.states_majority_below),
        json!(s.fraction_states_majority_below),
    ]);
}

fn feasibility(a: FeasibilityArgs) -> Result<Table, Error> {
    let records = load_turnout(&a.data)?;
    if a.cdf {
        let mut t = Table::new(["turnout", "cumulative_fraction"]);
        for (v, f) in turnout_cdf(&records) {
            t.push(vec![json!(v), json!(f)]);
        }
        return Ok(t);
    }
    let summary = summarize(&records, &a.threshold)?;
    if let Some(margin) = a.margin {
        let design = PassiveDesign::new(
            margin,
            a.detect_rate.expect("clap requires"),
            a.base_rate.expect("clap requires"),
            a.fp,
            a.fn_,
        )?;
        let join = passive_feasibility_join(&records, &design)?;
        if a.per_jurisdiction {
            let mut t = Table::new(["state", "jurisdiction", "turnout", "required", "feasible"]);
            for r in &join.rows {
                t.push(vec![
                    json!(r.state),
                    json!(r.jurisdiction),
                    json!(r.turnout),
                    json!(join.required.contest_size),
                    json!(r.feasible),
                ]);
            }
            return Ok(t);
        }
        let mut t = summary_table();
        threshold_row(&mut t, "passive-minimum", &join.summary, summary.median_turnout, records.len());
        for s in &summary.thresholds {
            threshold_row(&mut t, "threshold", s, summary.median_turnout, records.len());
        }
        return Ok(t);
    }
    let mut t = summary_table();
    if summary.thresholds.is_empty() {
        t.push(vec![
            json!("median"),
            Value::Null,
            json!(records.len()),
            json!(summary.median_turnout),
            Value::Null,
            Value::Null,
            json!(summary.states),
            Value::Null,
            Value::Null,
        ]);
    }
    for s in &summary.thresholds {
        threshold_row(&mut t, "threshold", s, summary.median_turnout, records.len());
    }
    Ok(t)
}

fn summary_table() -> Table {
    Table::new([
        "kind",
        "threshold",
        "jurisdictions",
        "median_turnout",
        "below",
        "fraction_below",
        "states",
        "states_majority_below",
        "fraction_states_majority_below",
    ])
}
