//! TOML descriptions of spaces, distributions and simulation scenarios.
//!
//! ```toml
//! [[scenario]]
//! name = "english-long-sessions"
//! trials = 100000
//! seed = 7
//! n_voters = 3000
//! space = { preset = "optimistic" }
//! voter_dist = { kind = "uniform" }
//!
//! [scenario.mallory]
//! flip_prob = 0.5
//! trigger = { languages = [0], time_of_day = { start = 5, end = 10 } }
//!
//! [scenario.pat]
//! mode = "uniform"
//! tests = 5
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::passive::PassiveDesign;
use crate::sim::{FlipMode, MalloryStrategy, PassiveParams, PatMode, PatStrategy, SimScenario};
use crate::space::{
    AttributeSpec, Marginal, Preset, Selector, Transaction, TransactionDistribution, TransactionSpace, ValueSet,
};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub preset: Option<Preset>,
    pub attributes: Option<Vec<AttributeSpec>>,
}

impl SpaceConfig {
    pub fn build(&self) -> Result<TransactionSpace> {
        match (&self.preset, &self.attributes) {
            (Some(p), None) => Ok(TransactionSpace::preset(*p)),
            (None, Some(a)) => TransactionSpace::new(a.clone()),
            _ => Err(Error::Config("space needs exactly one of `preset` or `attributes`".into())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistConfig {
    Uniform,
    /// Independent attributes; attributes without weights are uniform.
    Factored {
        #[serde(default)]
        marginals: BTreeMap<String, Vec<f64>>,
    },
    Sparse {
        points: Vec<Vec<u64>>,
        weights: Vec<f64>,
    },
    Point {
        point: Vec<u64>,
    },
}

impl DistConfig {
    pub fn build(&self, space: &TransactionSpace) -> Result<TransactionDistribution> {
        match self {
            DistConfig::Uniform => Ok(TransactionDistribution::uniform(space)),
            DistConfig::Factored { marginals } => {
                for name in marginals.keys() {
                    if space.index_of(name).is_none() {
                        return Err(Error::Config(format!("unknown attribute `{name}` in marginals")));
                    }
                }
                let ms = space
                    .attributes()
                    .iter()
                    .map(|a| match marginals.get(&a.name) {
                        Some(w) => Marginal::Weights(w.clone()),
                        None => Marginal::Uniform,
                    })
                    .collect();
                TransactionDistribution::factored(space, ms)
            }
            DistConfig::Sparse { points, weights } => TransactionDistribution::sparse(
                space,
                points.iter().map(|p| Transaction(p.clone())).collect(),
                weights.clone(),
            ),
            DistConfig::Point { point } => TransactionDistribution::point_mass(space, Transaction(point.clone())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ValueConfig {
    One(u64),
    List(Vec<u64>),
    Range { start: u64, end: u64 },
}

impl From<&ValueConfig> for ValueSet {
    fn from(v: &ValueConfig) -> Self {
        match v {
            ValueConfig::One(x) => ValueSet::Values([*x].into()),
            ValueConfig::List(xs) => ValueSet::Values(xs.iter().copied().collect()),
            ValueConfig::Range { start, end } => ValueSet::Range {
                start: *start,
                end: *end,
            },
        }
    }
}

/// Attribute name to allowed values; unnamed attributes are unrestricted.
pub type SelectorConfig = BTreeMap<String, ValueConfig>;

pub fn build_selector(space: &TransactionSpace, cfg: &SelectorConfig) -> Result<Selector> {
    cfg.iter().try_fold(Selector::everything(space), |sel, (name, v)| {
        let i = space
            .index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown attribute `{name}` in selector")))?;
        Ok(sel.restrict(i, v.into()))
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalloryConfig {
    #[serde(default)]
    pub trigger: SelectorConfig,
    pub flip_prob: f64,
    #[serde(default)]
    pub flip_mode: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatConfig {
    pub mode: String,
    #[serde(default)]
    pub tests: Option<u64>,
    #[serde(default)]
    pub distribution: Option<DistConfig>,
    #[serde(default)]
    pub script: Option<Vec<Vec<u64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassiveConfig {
    pub detect_rate: f64,
    pub base_rate: f64,
    /// Fixed alarm threshold. When absent, the smallest threshold meeting
    /// `fp_budget` at `n_voters` is used.
    #[serde(default)]
    pub alarm_threshold: Option<u64>,
    #[serde(default)]
    pub fp_budget: Option<f64>,
    #[serde(default)]
    pub oblivious: Option<SelectorConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub n_train: u64,
    #[serde(default)]
    pub trials: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub n_voters: u64,
    pub space: SpaceConfig,
    #[serde(default = "uniform_dist")]
    pub voter_dist: DistConfig,
    pub mallory: MalloryConfig,
    #[serde(default)]
    pub pat: Option<PatConfig>,
    #[serde(default)]
    pub passive: Option<PassiveConfig>,
    #[serde(default)]
    pub estimation: Option<EstimationConfig>,
}

fn uniform_dist() -> DistConfig {
    DistConfig::Uniform
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: Vec<ScenarioConfig>,
}

/// A scenario plus the optional estimation study attached to it.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: SimScenario,
    pub estimation: Option<(u64, u64)>,
}

fn ctx(name: &str, e: Error) -> Error {
    Error::Config(format!("scenario `{name}`: {e}"))
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<LoadedScenario> {
        let name = &self.name;
        let space = self.space.build().map_err(|e| ctx(name, e))?;
        let voter_dist = self.voter_dist.build(&space).map_err(|e| ctx(name, e))?;
        let flip_mode = match self.mallory.flip_mode.as_deref() {
            None | Some("independent") => FlipMode::Independent,
            Some("exact-count") => FlipMode::ExactCount,
            Some(other) => return Err(ctx(name, Error::Config(format!("unknown flip_mode `{other}`")))),
        };
        let mallory = MalloryStrategy {
            trigger: build_selector(&space, &self.mallory.trigger).map_err(|e| ctx(name, e))?,
            flip_prob: self.mallory.flip_prob,
            flip_mode,
            label: self.mallory.label.clone().unwrap_or_default(),
        };
        let pat = self.pat.as_ref().map(|p| build_pat(&space, p)).transpose().map_err(|e| ctx(name, e))?;
        let passive = match &self.passive {
            None => None,
            Some(p) => {
                let oblivious = p
                    .oblivious
                    .as_ref()
                    .map(|o| build_selector(&space, o))
                    .transpose()
                    .map_err(|e| ctx(name, e))?;
                let alarm_threshold = match (p.alarm_threshold, p.fp_budget) {
                    (Some(k), _) => k,
                    (None, Some(fp)) => {
                        // margin and detect rate do not affect the threshold
                        PassiveDesign::new(0.0, 0.0, p.base_rate, fp, 0.5)
                            .map_err(|e| ctx(name, e))?
                            .threshold_at(self.n_voters)
                    }
                    (None, None) => {
                        return Err(ctx(name, Error::Config("passive needs alarm_threshold or fp_budget".into())))
                    }
                };
                Some(PassiveParams {
                    detect_rate: p.detect_rate,
                    base_rate: p.base_rate,
                    alarm_threshold,
                    oblivious,
                })
            }
        };
        let scenario = SimScenario {
            name: name.clone(),
            space,
            voter_dist,
            n_voters: self.n_voters,
            mallory,
            pat,
            passive,
            trials: self.trials,
            seed: self.seed,
        };
        scenario.validate().map_err(|e| ctx(name, e))?;
        Ok(LoadedScenario {
            scenario,
            estimation: self.estimation.as_ref().map(|e| (e.n_train, e.trials.unwrap_or(self.trials))),
        })
    }
}

fn build_pat(space: &TransactionSpace, p: &PatConfig) -> Result<PatStrategy> {
    let mode = match p.mode.as_str() {
        "uniform" => PatMode::Uniform,
        "voters" => PatMode::Voters,
        "distribution" => PatMode::Distribution(
            p.distribution
                .as_ref()
                .ok_or_else(|| Error::Config("pat mode `distribution` needs `distribution`".into()))?
                .build(space)?,
        ),
        "script" => PatMode::Script(
            p.script
                .as_ref()
                .ok_or_else(|| Error::Config("pat mode `script` needs `script`".into()))?
                .iter()
                .map(|t| Transaction(t.clone()))
                .collect(),
        ),
        other => return Err(Error::Config(format!("unknown pat mode `{other}`"))),
    };
    let test_count = match (&mode, p.tests) {
        (_, Some(n)) => n,
        (PatMode::Script(s), None) => s.len() as u64,
        (_, None) => return Err(Error::Config("pat needs `tests`".into())),
    };
    Ok(PatStrategy { mode, test_count })
}

pub fn parse_scenarios(text: &str) -> Result<Vec<LoadedScenario>> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.scenario.iter().map(ScenarioConfig::build).collect()
}

pub fn load_scenarios(path: &Path) -> Result<Vec<LoadedScenario>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenarios(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// A standalone space with an optional distribution over it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub space: SpaceConfig,
    #[serde(default)]
    pub distribution: Option<DistConfig>,
}

pub fn load_space(path: &Path) -> Result<(TransactionSpace, Option<TransactionDistribution>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let f: SpaceFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let space = f.space.build()?;
    let dist = f.distribution.as_ref().map(|d| d.build(&space)).transpose()?;
    Ok((space, dist))
}
