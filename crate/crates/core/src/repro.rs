//! Regenerates every published number the solvers cover and classifies
//! how well each one is matched.

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::minimax::{min_training_sample, MinimaxQuery};
use crate::parallel::{
    detection_prob_iid, margin_leverage, min_electorate_for_budget, min_tests_iid, oracle_min_samples,
    test_time_ledger, AttackStep, BudgetedTestQuery, ElectorateConvention, OracleBoundQuery,
};
use crate::passive::{table_passive, MissConvention, TABLE_BASE_RATES, TABLE_DETECT_RATES, TABLE_MARGINS};
use crate::published as pubd;
use crate::space::{Preset, TransactionSpace};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MatchRule {
    /// Identical values.
    Exact,
    /// Identical after rounding to the published significant figures.
    ExactSigFigs(u32),
    /// `|value - published| <= tol`.
    AbsTol(f64),
    /// `|value - published| <= tol * |published|`.
    RelTol(f64),
    /// Within a multiplicative factor either way.
    Factor(f64),
    /// Known, explained difference; never blocks.
    DocumentedDiff,
}

impl MatchRule {
    pub fn class(&self) -> &'static str {
        match self {
            MatchRule::Exact | MatchRule::ExactSigFigs(_) => "MATCH-EXACT",
            MatchRule::AbsTol(_) | MatchRule::RelTol(_) => "MATCH-TOL",
            MatchRule::Factor(_) => "MATCH-FACTOR",
            MatchRule::DocumentedDiff => "DOCUMENTED-DIFF",
        }
    }

    pub fn tolerance(&self) -> String {
        match self {
            MatchRule::Exact | MatchRule::DocumentedDiff => String::new(),
            MatchRule::ExactSigFigs(s) => format!("{s} sig. fig."),
            MatchRule::AbsTol(t) => format!("+-{t}"),
            MatchRule::RelTol(t) => format!("+-{}%", t * 100.0),
            MatchRule::Factor(f) => format!("x{f}"),
        }
    }

    pub fn passes(&self, value: f64, published: f64) -> bool {
        match *self {
            MatchRule::Exact => value == published,
            MatchRule::ExactSigFigs(s) => round_sig(value, s) == round_sig(published, s),
            MatchRule::AbsTol(t) => (value - published).abs() <= t + 1e-12,
            MatchRule::RelTol(t) => (value - published).abs() <= t * published.abs(),
            MatchRule::Factor(f) => value > 0.0 && published > 0.0 && {
                let r = value / published;
                r <= f && r >= 1.0 / f
            },
            MatchRule::DocumentedDiff => true,
        }
    }
}

fn round_sig(x: f64, s: u32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let e = x.abs().log10().floor() as i32 - s as i32 + 1;
    let p = 10f64.powi(e);
    (x / p).round() * p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproEntry {
    pub id: String,
    pub location: String,
    pub value: f64,
    pub published: f64,
    /// Value rendered for the report.
    pub shown: String,
    pub rule: MatchRule,
    pub pass: bool,
    pub note: String,
}

impl ReproEntry {
    pub fn required(&self) -> bool {
        self.rule != MatchRule::DocumentedDiff
    }

    pub fn status(&self) -> &'static str {
        match (self.required(), self.pass) {
            (false, _) => "DIFF",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReproManifest {
    pub entries: Vec<ReproEntry>,
}

impl ReproManifest {
    fn add(&mut self, id: &str, location: &str, value: f64, published: f64, shown: String, rule: MatchRule, note: &str) {
        self.entries.push(ReproEntry {
            id: id.to_string(),
            location: location.to_string(),
            value,
            published,
            shown,
            rule,
            pass: rule.passes(value, published),
            note: note.to_string(),
        });
    }

    /// True when every row that must pass does.
    pub fn all_required_pass(&self) -> bool {
        self.entries.iter().all(|e| !e.required() || e.pass)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["id", "location", "value", "published", "class", "tolerance", "status", "note"]);
        for e in &self.entries {
            t.push(vec![
                json!(e.id),
                json!(e.location),
                json!(e.shown),
                json!(fmt_plain(e.published)),
                json!(e.rule.class()),
                json!(e.rule.tolerance()),
                json!(e.status()),
                json!(e.note),
            ]);
        }
        t
    }
}

fn fmt_plain(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else if x.abs() >= 1e15 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn pct(x: f64) -> String {
    format!("{}", (x * 1e8).round() / 1e6)
}

/// Builds the full manifest. Deterministic: no randomness is involved.
pub fn manifest() -> Result<ReproManifest> {
    let mut m = ReproManifest::default();

    let opt = TransactionSpace::preset(Preset::Optimistic).cardinality_u64().expect("fits");
    m.add(
        "cardinality-optimistic",
        "transaction parameters table, total (optimistic)",
        opt as f64,
        pubd::OPTIMISTIC_CARDINALITY as f64,
        opt.to_string(),
        MatchRule::ExactSigFigs(3),
        "published as 6.14e6",
    );
    let real = TransactionSpace::preset(Preset::Realistic).cardinality();
    let real_f: f64 = real.to_string().parse().expect("decimal");
    m.add(
        "cardinality-realistic",
        "transaction parameters table, total (realistic)",
        real_f,
        pubd::REALISTIC_CARDINALITY,
        real.to_string(),
        MatchRule::RelTol(0.05),
        "published to 2 significant figures",
    );

    for (budget, published, tag) in [(0.05, &pubd::PASSIVE_5, "5"), (0.01, &pubd::PASSIVE_1, "1")] {
        let t = table_passive(budget, &TABLE_MARGINS, &TABLE_DETECT_RATES, &TABLE_BASE_RATES, MissConvention::default())?;
        for (row, pubrow) in t.rows.iter().zip(published.iter()) {
            for ((cell, &b), &p) in row.cells.iter().zip(&TABLE_BASE_RATES).zip(pubrow) {
                let n = cell.as_ref().map(|s| s.contest_size).unwrap_or(0);
                m.add(
                    &format!("passive-{tag}pct-m{}-d{}-b{}", pct(row.margin), pct(row.detect_rate), pct(b)),
                    &format!("passive table, fp=fn={tag}%"),
                    n as f64,
                    p as f64,
                    n.to_string(),
                    MatchRule::RelTol(0.01),
                    "",
                );
            }
        }
    }

    let mut reports = Vec::new();
    for &(conf, tests, r, published) in &pubd::MINIMAX {
        let q = MinimaxQuery::new(r, 1.0 - conf, tests, pubd::MINIMAX_SUPPORT);
        let rep = min_training_sample(&q)?;
        let millions = rep.min_training_n as f64 / 1e6;
        let limit = tests.map_or("inf".to_string(), |t| t.to_string());
        m.add(
            &format!("minimax-c{}-t{limit}-r{}", pct(conf), pct(r)),
            "training sample bound table (millions)",
            millions,
            published,
            format!("{millions:.3}"),
            MatchRule::Factor(3.0),
            &format!("n={} zeta={}", rep.min_training_n, rep.zeta_used),
        );
        reports.push((conf, tests, r, rep.min_training_n));
    }
    let ordered = minimax_orderings_hold(&reports);
    m.add(
        "minimax-orderings",
        "training sample bound table, orderings in r / confidence / test limit",
        ordered as u8 as f64,
        1.0,
        if ordered { "hold" } else { "violated" }.into(),
        MatchRule::Exact,
        "non-increasing in r; 99% >= 95%; finite limit >= unbounded",
    );
    let n_inline = reports.iter().find(|x| x.0 == 0.95 && x.1.is_none() && x.2 == 0.05).expect("row").3;
    m.add(
        "minimax-inline-95",
        "inline claim, 95% confidence, 5% altered",
        n_inline as f64 / 1e6,
        1.082,
        format!("{:.3}", n_inline as f64 / 1e6),
        MatchRule::Factor(3.0),
        "",
    );
    let n_inline = reports.iter().find(|x| x.0 == 0.99 && x.1.is_some() && x.2 == 0.005).expect("row").3;
    m.add(
        "minimax-inline-99",
        "inline claim, 99% confidence, 0.5% altered, 2000 tests",
        n_inline as f64 / 1e6,
        3.876,
        format!("{:.3}", n_inline as f64 / 1e6),
        MatchRule::Factor(3.0),
        "",
    );

    let d = detection_prob_iid(0.01, 50)?;
    m.add("iid-50-tests", "detection with 50 tests at p=1%", d, 0.39, format!("{d:.4}"), MatchRule::AbsTol(0.01), "published as 39%");
    let t = min_tests_iid(0.01, 0.95)?;
    m.add(
        "iid-tests-1pct",
        "tests for 95% detection at p=1%",
        t as f64,
        pubd::IID_TESTS_1PCT as f64,
        t.to_string(),
        MatchRule::DocumentedDiff,
        &format!("strict minimum; 1-0.99^299 = {:.4} already reaches 95%", detection_prob_iid(0.01, t)?),
    );
    for (p, tests, published) in [(0.5, 5u64, 0.968), (0.25, 11, 0.958)] {
        let found = min_tests_iid(p, 0.95)?;
        m.add(
            &format!("iid-tests-p{}", pct(p)),
            &format!("illustrative attack, flip probability {}%", pct(p)),
            found as f64,
            tests as f64,
            found.to_string(),
            MatchRule::Exact,
            "",
        );
        let det = detection_prob_iid(p, tests)?;
        m.add(
            &format!("iid-detect-p{}", pct(p)),
            &format!("illustrative attack, detection with {tests} tests"),
            det,
            published,
            format!("{det:.5}"),
            MatchRule::AbsTol(0.001),
            "",
        );
    }
    let ledger = test_time_ledger(
        &[
            AttackStep {
                label: "attack 1".into(),
                flip_prob: 0.5,
                minutes_per_test: 10.0,
                variants: 5,
            },
            AttackStep {
                label: "attack 2".into(),
                flip_prob: 0.25,
                minutes_per_test: 5.0,
                variants: 5,
            },
            AttackStep {
                label: "attack 3".into(),
                flip_prob: 0.25,
                minutes_per_test: 5.0,
                variants: 5,
            },
        ],
        0.95,
    )?;
    for (row, published) in ledger.iter().zip([250.0, 525.0, 800.0]) {
        m.add(
            &format!("ledger-{}", row.label.replace(' ', "-")),
            "illustrative attacks, cumulative tester minutes",
            row.cumulative_minutes,
            published,
            format!("{}", row.cumulative_minutes),
            MatchRule::Exact,
            &format!("{} tests; minutes per test are inputs", row.tests),
        );
    }

    let q = OracleBoundQuery {
        population: 2980,
        flawed: 15,
        confidence: 0.95,
    };
    let n = oracle_min_samples(&q)?;
    m.add(
        "oracle-samples",
        "oracle bound, V=2980, F=15, 95%",
        n as f64,
        pubd::ORACLE_SAMPLES as f64,
        n.to_string(),
        MatchRule::Exact,
        "unresolved: the product of (1 - 15/(2980-i)) is 0.049760 after 539 factors and 0.050068 after 538",
    );
    let share = n as f64 / 2980.0;
    m.add("oracle-share", "oracle bound, share of voters", share, 0.18, format!("{share:.4}"), MatchRule::AbsTol(0.01), "published as about 18%");

    let e = min_electorate_for_budget(&BudgetedTestQuery {
        tests_per_bmd_per_day: 13,
        bmd_daily_capacity: 140,
        altered_fraction: 0.005,
        confidence: 0.95,
        convention: ElectorateConvention::default(),
    })?;
    let note = format!("{}; detection {:.5}", e.convention.describe(), e.detection_prob);
    m.add(
        "electorate-bmds",
        "13 tests per BMD, 140 voters per BMD, 0.5% altered",
        e.bmds as f64,
        pubd::ELECTORATE_BMDS as f64,
        e.bmds.to_string(),
        MatchRule::DocumentedDiff,
        &note,
    );
    m.add(
        "electorate-voters",
        "13 tests per BMD, 140 voters per BMD, 0.5% altered",
        e.voters as f64,
        pubd::ELECTORATE_VOTERS as f64,
        e.voters.to_string(),
        MatchRule::DocumentedDiff,
        &note,
    );

    for (id, (x, share, u), published, rule) in [
        ("leverage-full-contest", (0.01, 1.0, 0.3), 0.029, MatchRule::AbsTol(0.001)),
        ("leverage-10pct-share", (0.01, 0.1, 0.0), 0.2, MatchRule::AbsTol(1e-12)),
        ("leverage-10pct-share-undervotes", (0.01, 0.1, 0.3), 0.29, MatchRule::AbsTol(0.01)),
    ] {
        let v = margin_leverage(x, share, u)?;
        m.add(
            id,
            &format!("margin leverage, share {}%, undervotes {}%", pct(share), pct(u)),
            v,
            published,
            format!("{v:.5}"),
            rule,
            "",
        );
    }
    Ok(m)
}

/// Checks the orderings of the training-bound grid: the bound falls as `r`
/// grows, and rises with confidence and with a finite test limit.
pub fn minimax_orderings_hold(rows: &[(f64, Option<u64>, f64, u64)]) -> bool {
    let get = |c: f64, t: Option<u64>, r: f64| rows.iter().find(|x| x.0 == c && x.1 == t && x.2 == r).map(|x| x.3);
    let mut ok = true;
    for a in rows {
        for b in rows {
            if a.0 == b.0 && a.1 == b.1 && a.2 < b.2 {
                ok &= a.3 >= b.3;
            }
        }
        if a.0 == 0.99 {
            ok &= get(0.95, a.1, a.2).is_none_or(|n| a.3 >= n);
        }
        if a.1.is_some() {
            ok &= get(a.0, None, a.2).is_none_or(|n| a.3 >= n);
        }
    }
    ok
}
