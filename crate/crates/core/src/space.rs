//! The factored space of voting transactions and distributions over it.
//!
//! A transaction is one point in the product of per-attribute value ranges
//! (language, time of day, font size, ...). Realistic spaces are far too
//! large to enumerate, so distributions are either a product of
//! per-attribute marginals or an explicit sparse support.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest space (or attribute) that may be represented densely.
pub const DENSE_LIMIT: u64 = 10_000_000;

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub cardinality: u64,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, cardinality: u64) -> Self {
        AttributeSpec {
            name: name.into(),
            cardinality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionSpace {
    attributes: Vec<AttributeSpec>,
}

impl TransactionSpace {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::domain("a transaction space needs at least one attribute"));
        }
        let mut seen = BTreeSet::new();
        for a in &attributes {
            if a.cardinality == 0 {
                return Err(Error::domain(format!("attribute `{}` has cardinality 0", a.name)));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::domain(format!("duplicate attribute name `{}`", a.name)));
            }
        }
        Ok(TransactionSpace { attributes })
    }

    /// A space of `dims` unnamed attributes (`a0`, `a1`, ...).
    pub fn from_cardinalities(dims: &[u64]) -> Result<Self> {
        Self::new(
            dims.iter()
                .enumerate()
                .map(|(i, &c)| AttributeSpec::new(format!("a{i}"), c))
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Exact number of distinct transactions.
    pub fn cardinality(&self) -> BigUint {
        self.attributes
            .iter()
            .fold(BigUint::one(), |acc, a| acc * BigUint::from(a.cardinality))
    }

    /// Cardinality if it fits in a `u64`.
    pub fn cardinality_u64(&self) -> Option<u64> {
        self.attributes
            .iter()
            .try_fold(1u64, |acc, a| acc.checked_mul(a.cardinality))
    }

    pub fn contains(&self, t: &Transaction) -> bool {
        t.0.len() == self.attributes.len()
            && t.0.iter().zip(&self.attributes).all(|(&v, a)| v < a.cardinality)
    }

    fn check(&self, t: &Transaction) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::domain(format!("transaction {t} is not in the space")))
        }
    }

    /// Built-in configurations, see [`Preset`].
    pub fn preset(preset: Preset) -> Self {
        let rows: &[(&str, u64)] = match preset {
            Preset::Optimistic => &[
                ("contests", 3),
                ("candidates_per_contest", 2),
                ("languages", 2),
                ("time_of_day", 10),
                ("previous_voters", 5),
                ("undervotes", 1 << 3),
                ("changed_selections", 1 << 3),
                ("review", 2),
                ("time_per_selection", 2),
                ("font_size", 2),
                ("audio_use", 2),
                ("volume", 5),
                ("inactivity_warning", 2),
            ],
            Preset::Realistic => &[
                ("contests", 20),
                ("candidates_per_contest", 4),
                ("languages", 13),
                ("time_of_day", 20),
                ("previous_voters", 10),
                ("undervotes", 1 << 20),
                ("changed_selections", 1 << 20),
                ("review", 2),
                ("time_per_selection", 95_367_431_640_625), // 5^20
                ("contrast_saturation", 4),
                ("font_size", 4),
                ("audio_use", 2),
                ("audio_tempo", 4),
                ("volume", 10),
                ("audio_pause", 1 << 20),
                ("audio_video", 2),
                ("inactivity_warning", 1 << 20),
            ],
        };
        TransactionSpace::new(rows.iter().map(|&(n, c)| AttributeSpec::new(n, c)).collect())
            .expect("preset spaces are valid")
    }
}

/// Table-of-parameters presets. Each attribute is one row; the product of
/// the rows is the size of the transaction space. Contest count enters as a
/// bare factor, and rows with no optimistic value are left out of the
/// optimistic space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Optimistic,
    Realistic,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimistic" => Ok(Preset::Optimistic),
            "realistic" => Ok(Preset::Realistic),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// Exact number of transactions in `space`.
pub fn cardinality(space: &TransactionSpace) -> BigUint {
    space.cardinality()
}

/// One voting transaction: a value index per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transaction(pub Vec<u64>);

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A set of allowed values for one attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueSet {
    Any,
    Values(BTreeSet<u64>),
    /// Half-open range `[start, end)`.
    Range { start: u64, end: u64 },
}

impl ValueSet {
    pub fn contains(&self, v: u64) -> bool {
        match self {
            ValueSet::Any => true,
            ValueSet::Values(s) => s.contains(&v),
            ValueSet::Range { start, end } => (*start..*end).contains(&v),
        }
    }

    /// Number of values of `0..cardinality` in the set.
    fn count_within(&self, cardinality: u64) -> u64 {
        match self {
            ValueSet::Any => cardinality,
            ValueSet::Values(s) => s.range(..cardinality).count() as u64,
            ValueSet::Range { start, end } => end.min(&cardinality).saturating_sub(*start),
        }
    }

    fn for_each_within(&self, cardinality: u64, mut f: impl FnMut(u64)) {
        match self {
            ValueSet::Any => (0..cardinality).for_each(f),
            ValueSet::Values(s) => s.range(..cardinality).for_each(|&v| f(v)),
            ValueSet::Range { start, end } => (*start..(*end).min(cardinality)).for_each(f),
        }
    }

    pub fn intersect(&self, other: &ValueSet) -> ValueSet {
        use ValueSet::*;
        match (self, other) {
            (Any, x) | (x, Any) => x.clone(),
            (Values(a), Values(b)) => Values(a.intersection(b).copied().collect()),
            (Values(a), r @ Range { .. }) | (r @ Range { .. }, Values(a)) => {
                Values(a.iter().copied().filter(|&v| r.contains(v)).collect())
            }
            (Range { start: s1, end: e1 }, Range { start: s2, end: e2 }) => {
                let start = *s1.max(s2);
                Range {
                    start,
                    end: (*e1.min(e2)).max(start),
                }
            }
        }
    }
}

/// Conjunction of per-attribute value sets: a transaction matches iff every
/// coordinate lies in its attribute's set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    sets: Vec<ValueSet>,
}

impl Selector {
    /// Matches every transaction of `space`.
    pub fn everything(space: &TransactionSpace) -> Self {
        Selector {
            sets: vec![ValueSet::Any; space.len()],
        }
    }

    pub fn new(space: &TransactionSpace, sets: Vec<ValueSet>) -> Result<Self> {
        if sets.len() != space.len() {
            return Err(Error::domain(format!(
                "selector has {} value sets for a {}-attribute space",
                sets.len(),
                space.len()
            )));
        }
        Ok(Selector { sets })
    }

    /// Restricts attribute `index` to `set`, intersecting with any existing
    /// restriction.
    pub fn restrict(mut self, index: usize, set: ValueSet) -> Self {
        self.sets[index] = self.sets[index].intersect(&set);
        self
    }

    pub fn sets(&self) -> &[ValueSet] {
        &self.sets
    }

    pub fn matches(&self, coords: &[u64]) -> bool {
        self.sets.iter().zip(coords).all(|(s, &v)| s.contains(v))
    }

    pub fn intersect(&self, other: &Selector) -> Selector {
        Selector {
            sets: self.sets.iter().zip(&other.sets).map(|(a, b)| a.intersect(b)).collect(),
        }
    }
}

/// Per-attribute marginal of a factored distribution.
#[derive(Debug, Clone)]
pub enum Marginal {
    Uniform,
    Weights(Vec<f64>),
}

#[derive(Debug, Clone)]
pub enum DistributionForm {
    /// Independent attributes with the given marginals.
    Factored(Vec<Marginal>),
    /// Explicit finite support.
    Sparse {
        points: Vec<Transaction>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
enum Sampler {
    Uniform(u64),
    Weighted(WeightedIndex<f64>),
    /// A single value carries all the mass.
    Point(u64),
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Sampler::Uniform(n) => rng.random_range(0..*n),
            Sampler::Weighted(w) => w.sample(rng) as u64,
            Sampler::Point(v) => *v,
        }
    }

    fn for_weights(weights: &[f64]) -> Result<Self> {
        let nonzero: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        if nonzero.len() == 1 {
            return Ok(Sampler::Point(nonzero[0] as u64));
        }
        WeightedIndex::new(weights)
            .map(Sampler::Weighted)
            .map_err(|e| Error::domain(format!("invalid weights: {e}")))
    }
}

/// A probability distribution over a [`TransactionSpace`].
#[derive(Debug, Clone)]
pub struct TransactionDistribution {
    space: TransactionSpace,
    form: DistributionForm,
    samplers: Vec<Sampler>,
    index: HashMap<Transaction, usize>,
}

fn check_weights(weights: &[f64], what: &str) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain(format!("{what}: weights must be finite and nonnegative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::domain(format!("{what}: weights sum to {total}, not 1")));
    }
    Ok(())
}

impl TransactionDistribution {
    pub fn uniform(space: &TransactionSpace) -> Self {
        Self::factored(space, vec![Marginal::Uniform; space.len()]).expect("uniform is valid")
    }

    pub fn factored(space: &TransactionSpace, marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.len() != space.len() {
            return Err(Error::domain("one marginal per attribute is required"));
        }
        let mut samplers = Vec::with_capacity(marginals.len());
        for (m, a) in marginals.iter().zip(space.attributes()) {
            samplers.push(match m {
                Marginal::Uniform => Sampler::Uniform(a.cardinality),
                Marginal::Weights(w) => {
                    if w.len() as u64 != a.cardinality {
                        return Err(Error::domain(format!(
                            "attribute `{}`: {} weights for cardinality {}",
                            a.name,
                            w.len(),
                            a.cardinality
                        )));
                    }
                    if a.cardinality > DENSE_LIMIT {
                        return Err(Error::domain(format!(
                            "attribute `{}` is too large for explicit weights",
                            a.name
                        )));
                    }
                    check_weights(w, &a.name)?;
                    Sampler::for_weights(w)?
                }
            });
        }
        Ok(TransactionDistribution {
            space: space.clone(),
            form: DistributionForm::Factored(marginals),
            samplers,
            index: HashMap::new(),
        })
    }

    pub fn sparse(space: &TransactionSpace, points: Vec<Transaction>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::domain("sparse support needs one weight per point and at least one point"));
        }
        check_weights(&weights, "sparse support")?;
        let mut index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            space.check(p)?;
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate support point {p}")));
            }
        }
        let samplers = vec![Sampler::for_weights(&weights)?];
        Ok(TransactionDistribution {
            space: space.clone(),
            form: DistributionForm::Sparse { points, weights },
            samplers,
            index,
        })
    }

    pub fn point_mass(space: &TransactionSpace, point: Transaction) -> Result<Self> {
        Self::sparse(space, vec![point], vec![1.0])
    }

    pub fn space(&self) -> &TransactionSpace {
        &self.space
    }

    pub fn form(&self) -> &DistributionForm {
        &self.form
    }

    /// Support points with their weights, if the distribution is sparse.
    pub fn support(&self) -> Option<(&[Transaction], &[f64])> {
        match &self.form {
            DistributionForm::Sparse { points, weights } => Some((points, weights)),
            DistributionForm::Factored(_) => None,
        }
    }

    /// Draws one transaction into `out` (cleared first).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<u64>) {
        out.clear();
        match &self.form {
            DistributionForm::Factored(_) => out.extend(self.samplers.iter().map(|s| s.draw(rng))),
            DistributionForm::Sparse { points, .. } => {
                let i = self.samplers[0].draw(rng) as usize;
                out.extend_from_slice(&points[i].0);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Transaction {
        let mut v = Vec::with_capacity(self.space.len());
        self.sample_into(rng, &mut v);
        Transaction(v)
    }

    /// Probability of a single transaction.
    pub fn pmf(&self, t: &Transaction) -> f64 {
        if !self.space.contains(t) {
            return 0.0;
        }
        match &self.form {
            DistributionForm::Factored(ms) => ms
                .iter()
                .zip(self.space.attributes())
                .zip(&t.0)
                .map(|((m, a), &v)| match m {
                    Marginal::Uniform => 1.0 / a.cardinality as f64,
                    Marginal::Weights(w) => w[v as usize],
                })
                .product(),
            DistributionForm::Sparse { weights, .. } => {
                self.index.get(t).map_or(0.0, |&i| weights[i])
            }
        }
    }

    /// Probability that a draw matches `selector`.
    pub fn mass(&self, selector: &Selector) -> f64 {
        match &self.form {
            DistributionForm::Factored(ms) => ms
                .iter()
                .zip(self.space.attributes())
                .zip(selector.sets())
                .map(|((m, a), set)| match m {
                    Marginal::Uniform => set.count_within(a.cardinality) as f64 / a.cardinality as f64,
                    Marginal::Weights(w) => {
                        let mut s = 0.0;
                        set.for_each_within(a.cardinality, |v| s += w[v as usize]);
                        s
                    }
                })
                .product(),
            DistributionForm::Sparse { points, weights } => points
                .iter()
                .zip(weights)
                .filter(|(p, _)| selector.matches(&p.0))
                .map(|(_, w)| w)
                .sum(),
        }
    }

    fn for_each_dense(&self, mut f: impl FnMut(&Transaction, f64)) -> Result<()> {
        let card = self
            .space
            .cardinality_u64()
            .filter(|&c| c <= DENSE_LIMIT)
            .ok_or_else(|| Error::domain("space too large to enumerate densely"))?;
        let dims: Vec<u64> = self.space.attributes().iter().map(|a| a.cardinality).collect();
        let mut t = Transaction(vec![0; dims.len()]);
        for _ in 0..card {
            f(&t, self.pmf(&t));
            for (c, &d) in t.0.iter_mut().zip(&dims).rev() {
                *c += 1;
                if *c < d {
                    break;
                }
                *c = 0;
            }
        }
        Ok(())
    }
}

/// Empirical (plug-in) distribution of `training` over its observed support.
/// Support points are ordered lexicographically.
pub fn estimate(space: &TransactionSpace, training: &[Transaction]) -> Result<TransactionDistribution> {
    if training.is_empty() {
        return Err(Error::domain("cannot estimate a distribution from an empty training set"));
    }
    let mut counts: HashMap<&Transaction, u64> = HashMap::new();
    for t in training {
        space.check(t)?;
        *counts.entry(t).or_default() += 1;
    }
    let mut support: Vec<(&Transaction, u64)> = counts.into_iter().collect();
    support.sort_unstable();
    let n = training.len() as f64;
    let (points, weights) = support
        .into_iter()
        .map(|(t, c)| (t.clone(), c as f64 / n))
        .unzip();
    TransactionDistribution::sparse(space, points, weights)
}

/// `sum_x |p(x) - q(x)|`.
pub fn l1_distance(p: &TransactionDistribution, q: &TransactionDistribution) -> Result<f64> {
    if p.space() != q.space() {
        return Err(Error::domain("L1 distance needs distributions over the same space"));
    }
    let d = match (p.support(), q.support()) {
        (Some((pts_p, w_p)), Some((pts_q, w_q))) => {
            let mut s: f64 = pts_q.iter().zip(w_q).map(|(x, w)| (p.pmf(x) - w).abs()).sum();
            s += pts_p
                .iter()
                .zip(w_p)
                .filter(|(x, _)| !q.index.contains_key(*x))
                .map(|(_, w)| w)
                .sum::<f64>();
            s
        }
        (None, Some(_)) => sparse_vs_any(q, p),
        (Some(_), None) => sparse_vs_any(p, q),
        (None, None) => {
            let mut s = 0.0;
            p.for_each_dense(|t, pv| s += (pv - q.pmf(t)).abs())?;
            s
        }
    };
    Ok(d.clamp(0.0, 2.0))
}

/// L1 distance when `sparse` has finite support: points outside the support
/// contribute the rest of `other`'s mass.
fn sparse_vs_any(sparse: &TransactionDistribution, other: &TransactionDistribution) -> f64 {
    let (pts, ws) = sparse.support().expect("sparse");
    let mut covered = 0.0;
    let mut s = 0.0;
    for (x, w) in pts.iter().zip(ws) {
        let o = other.pmf(x);
        covered += o;
        s += (o - w).abs();
    }
    s + (1.0 - covered).max(0.0)
}
