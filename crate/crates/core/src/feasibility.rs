//! Jurisdiction turnout data and which jurisdictions are large enough for
//! passive testing.
//!
//! Input is CSV with the header `state,jurisdiction,turnout`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::passive::{min_contest_size, PassiveDesign, PassiveSolution};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JurisdictionRecord {
    pub state: String,
    pub jurisdiction: String,
    pub turnout: u64,
}

const COLUMNS: [&str; 3] = ["state", "jurisdiction", "turnout"];

pub fn load_turnout(path: &Path) -> Result<Vec<JurisdictionRecord>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_turnout(file, &path.display().to_string())
}

/// Parses turnout CSV from `reader`; `label` names the source in errors.
pub fn read_turnout<R: Read>(reader: R, label: &str) -> Result<Vec<JurisdictionRecord>> {
    let perr = |line: u64, message: String| Error::Parse {
        path: label.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let mut idx = [0usize; 3];
    for (slot, col) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| perr(1, format!("missing column `{col}`")))?;
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            perr(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let turnout = field(idx[2])
            .parse::<u64>()
            .map_err(|_| perr(line, format!("turnout `{}` is not a nonnegative integer", field(idx[2]))))?;
        let r = JurisdictionRecord {
            state: field(idx[0]).to_string(),
            jurisdiction: field(idx[1]).to_string(),
            turnout,
        };
        if !seen.insert((r.state.clone(), r.jurisdiction.clone())) {
            return Err(perr(
                line,
                format!("duplicate jurisdiction `{}` in state `{}`", r.jurisdiction, r.state),
            ));
        }
        out.push(r);
    }
    Ok(out)
}

/// Writes records in canonical form (header, then one row per record).
pub fn write_turnout<W: Write>(records: &[JurisdictionRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let io = |e: csv::Error| Error::Io {
        path: "<output>".into(),
        source: std::io::Error::other(e),
    };
    w.write_record(COLUMNS).map_err(io)?;
    for r in records {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<output>".into(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateShare {
    pub state: String,
    pub jurisdictions: u64,
    pub below: u64,
    pub majority_below: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSummary {
    pub threshold: u64,
    pub below: u64,
    pub fraction_below: f64,
    pub states: Vec<StateShare>,
    pub states_majority_below: u64,
    pub fraction_states_majority_below: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilitySummary {
    pub jurisdictions: u64,
    pub states: u64,
    /// Lower median.
    pub median_turnout: u64,
    pub thresholds: Vec<ThresholdSummary>,
}

/// Lower median of the turnouts.
pub fn median_turnout(records: &[JurisdictionRecord]) -> Result<u64> {
    if records.is_empty() {
        return Err(Error::domain("no jurisdictions to summarize"));
    }
    let mut t: Vec<u64> = records.iter().map(|r| r.turnout).collect();
    let mid = (t.len() - 1) / 2;
    Ok(*t.select_nth_unstable(mid).1)
}

fn threshold_summary(records: &[JurisdictionRecord], threshold: u64) -> ThresholdSummary {
    let mut per_state: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut below = 0;
    for r in records {
        let e = per_state.entry(&r.state).or_default();
        e.0 += 1;
        if r.turnout < threshold {
            e.1 += 1;
            below += 1;
        }
    }
    let states: Vec<StateShare> = per_state
        .into_iter()
        .map(|(s, (n, b))| StateShare {
            state: s.to_string(),
            jurisdictions: n,
            below: b,
            majority_below: 2 * b > n,
        })
        .collect();
    let maj = states.iter().filter(|s| s.majority_below).count() as u64;
    ThresholdSummary {
        threshold,
        below,
        fraction_below: below as f64 / records.len() as f64,
        states_majority_below: maj,
        fraction_states_majority_below: maj as f64 / states.len() as f64,
        states,
    }
}

/// Median turnout and, for each threshold, how many jurisdictions (and in
/// how many states, a majority of jurisdictions) fall below it.
pub fn summarize(records: &[JurisdictionRecord], thresholds: &[u64]) -> Result<FeasibilitySummary> {
    let median_turnout = median_turnout(records)?;
    let states = records.iter().map(|r| r.state.as_str()).collect::<HashSet<_>>().len() as u64;
    Ok(FeasibilitySummary {
        jurisdictions: records.len() as u64,
        states,
        median_turnout,
        thresholds: thresholds.iter().map(|&t| threshold_summary(records, t)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinRow {
    pub state: String,
    pub jurisdiction: String,
    pub turnout: u64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinReport {
    pub required: PassiveSolution,
    pub rows: Vec<JoinRow>,
    pub summary: ThresholdSummary,
}

/// Flags each jurisdiction whose turnout is below the minimum contest size
/// for `design`. Turnout equal to the minimum counts as feasible.
pub fn passive_feasibility_join(records: &[JurisdictionRecord], design: &PassiveDesign) -> Result<JoinReport> {
    let required = min_contest_size(design)?;
    let n = required.contest_size;
    Ok(JoinReport {
        required,
        rows: records
            .iter()
            .map(|r| JoinRow {
                state: r.state.clone(),
                jurisdiction: r.jurisdiction.clone(),
                turnout: r.turnout,
                feasible: r.turnout >= n,
            })
            .collect(),
        summary: threshold_summary(records, n),
    })
}

/// Empirical CDF points `(turnout, fraction of jurisdictions <= turnout)`,
/// one per distinct turnout.
pub fn turnout_cdf(records: &[JurisdictionRecord]) -> Vec<(u64, f64)> {
    let mut t: Vec<u64> = records.iter().map(|r| r.turnout).collect();
    t.sort_unstable();
    let n = t.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, &v) in t.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
            _ => out.push((v, (i + 1) as f64 / n)),
        }
    }
    out
}

/// Synthetic county-level data with a known shape.
///
/// Turnouts are quantiles of a log-logistic distribution with median
/// `median`: county `i` of `n` (ascending) has
/// `round(median * (p / (1 - p))^0.8)` voters, `p = (i + 0.5) / n`. With an
/// odd `n` the middle county sits at `p = 1/2` and has exactly `median`
/// voters.
///
/// Counties go to `states` state units. The first `urban_states` units get
/// `urban_large` counties at or above `split` plus `urban_small` below it,
/// so a majority of their counties are large. The rest are dealt out
/// round-robin in turnout order to the remaining units, which then hold
/// mostly small counties.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticCounties {
    pub counties: usize,
    pub median: u64,
    pub states: usize,
    pub urban_states: usize,
    pub urban_large: usize,
    pub urban_small: usize,
    pub split: u64,
}

impl Default for SyntheticCounties {
    fn default() -> Self {
        SyntheticCounties {
            counties: 3017,
            median: 2980,
            states: 51,
            urban_states: 14,
            urban_large: 3,
            urban_small: 2,
            split: 52_310,
        }
    }
}

impl SyntheticCounties {
    pub fn turnouts(&self) -> Vec<u64> {
        let n = self.counties as f64;
        (0..self.counties)
            .map(|i| {
                let p = (i as f64 + 0.5) / n;
                (self.median as f64 * (p / (1.0 - p)).powf(0.8)).round() as u64
            })
            .collect()
    }

    pub fn records(&self) -> Result<Vec<JurisdictionRecord>> {
        let t = self.turnouts();
        let (small, large): (Vec<usize>, Vec<usize>) = (0..t.len()).partition(|&i| t[i] < self.split);
        let need_large = self.urban_states * self.urban_large;
        let need_small = self.urban_states * self.urban_small;
        if large.len() < need_large || small.len() < need_small || self.states <= self.urban_states {
            return Err(Error::domain("synthetic layout does not fit the turnout distribution"));
        }
        let mut state_of = vec![0usize; t.len()];
        let (mut li, mut si) = (large.iter(), small.iter());
        for s in 0..self.urban_states {
            for &i in li.by_ref().take(self.urban_large) {
                state_of[i] = s;
            }
            for &i in si.by_ref().take(self.urban_small) {
                state_of[i] = s;
            }
        }
        let mut rest: Vec<usize> = li.chain(si).copied().collect();
        rest.sort_unstable();
        let rural = self.states - self.urban_states;
        for (j, &i) in rest.iter().enumerate() {
            state_of[i] = self.urban_states + j % rural;
        }
        Ok((0..t.len())
            .map(|i| JurisdictionRecord {
                state: format!("S{:02}", state_of[i] + 1),
                jurisdiction: format!("C{:04}", i + 1),
                turnout: t[i],
            })
            .collect())
    }
}
