//! Datasets, value functions, distance ranking and the characteristic
//! functions shared by the formulas and the oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::combinatorics::Scalar;
use crate::error::{Error, Result};

/// A binary label symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// One contributed data point.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub label: Label,
    /// Bin identifier for frequency-based rules.
    pub bin: Option<String>,
    /// Input vector for nearest-neighbor rules.
    pub features: Option<Vec<f64>>,
    pub coalition: Option<String>,
}

impl Example {
    pub fn binned(id: u64, bin: impl Into<String>, label: impl Into<Label>) -> Self {
        Example { id, label: label.into(), bin: Some(bin.into()), features: None, coalition: None }
    }

    pub fn located(id: u64, features: Vec<f64>, label: impl Into<Label>) -> Self {
        Example { id, label: label.into(), bin: None, features: Some(features), coalition: None }
    }

    pub fn with_coalition(mut self, coalition: impl Into<String>) -> Self {
        self.coalition = Some(coalition.into());
        self
    }
}

/// A validated set of in-sample examples: unique ids, at most two labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    labels: Vec<Label>,
    by_id: HashMap<u64, usize>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(examples.len());
        let mut labels: Vec<Label> = Vec::new();
        for (idx, ex) in examples.iter().enumerate() {
            if by_id.insert(ex.id, idx).is_some() {
                return Err(Error::InvalidInput(format!("duplicate example id {}", ex.id)));
            }
            if !labels.contains(&ex.label) {
                if labels.len() == 2 {
                    return Err(Error::InvalidInput(format!(
                        "labels must be binary: found third label {:?} (already have {:?} and {:?})",
                        ex.label.0, labels[0].0, labels[1].0
                    )));
                }
                labels.push(ex.label.clone());
            }
        }
        Ok(Dataset { examples, labels, by_id })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    /// Checks that `label` keeps the combined label set binary.
    pub fn check_query_label(&self, label: &Label) -> Result<()> {
        if self.labels.len() == 2 && !self.labels.contains(label) {
            return Err(Error::InvalidInput(format!(
                "query label {:?} is not one of the dataset labels {:?} and {:?}",
                label.0, self.labels[0].0, self.labels[1].0
            )));
        }
        Ok(())
    }

    /// Checks a batch of query labels: each must be a dataset label, and
    /// together with the dataset labels they may use at most two symbols.
    pub fn check_query_labels<'a>(&self, labels: impl IntoIterator<Item = &'a Label>) -> Result<()> {
        let mut seen = self.labels.clone();
        for label in labels {
            self.check_query_label(label)?;
            if !seen.contains(label) {
                if seen.len() == 2 {
                    return Err(Error::InvalidInput(format!(
                        "labels must be binary: query label {:?} is a third label after {:?} and {:?}",
                        label.0, seen[0].0, seen[1].0
                    )));
                }
                seen.push(label.clone());
            }
        }
        Ok(())
    }

    /// Every example has a bin.
    pub fn require_bins(&self) -> Result<()> {
        match self.examples.iter().find(|e| e.bin.is_none()) {
            Some(e) => Err(Error::InvalidInput(format!("example {} has no bin", e.id))),
            None => Ok(()),
        }
    }

    /// Every example has features of one common dimension; returns it.
    pub fn feature_dimension(&self) -> Result<usize> {
        let mut dim = None;
        for e in &self.examples {
            let f = e
                .features
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("example {} has no features", e.id)))?;
            match dim {
                None => dim = Some(f.len()),
                Some(d) if d != f.len() => {
                    return Err(Error::DimensionMismatch { expected: d, found: f.len() })
                }
                _ => {}
            }
        }
        Ok(dim.unwrap_or(0))
    }

    pub fn bins(&self) -> BTreeSet<&str> {
        self.examples.iter().filter_map(|e| e.bin.as_deref()).collect()
    }
}

/// An out-of-sample input for a frequency rule, with its realized label.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyQuery {
    pub bin: String,
    pub label: Label,
    /// Replaces the report-wide value function for this query only.
    pub value_override: Option<FrequencyValueFunction>,
}

impl FrequencyQuery {
    pub fn new(bin: impl Into<String>, label: impl Into<Label>) -> Self {
        FrequencyQuery { bin: bin.into(), label: label.into(), value_override: None }
    }
}

/// An out-of-sample input for a nearest-neighbor rule, with its realized label.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnQuery {
    pub features: Vec<f64>,
    pub label: Label,
}

impl KnnQuery {
    pub fn new(features: Vec<f64>, label: impl Into<Label>) -> Self {
        KnnQuery { features, label: label.into() }
    }
}

/// Value of acting on a query given `a` in-bin examples that agree with the
/// query label and `b` that do not.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyValueFunction {
    /// Majority vote: `correct` when `a > b`, `wrong` when `a < b`, `none` on ties.
    Majority { correct: f64, wrong: f64, none: f64 },
    Table { entries: BTreeMap<(u64, u64), f64>, default: Option<f64> },
}

impl FrequencyValueFunction {
    pub fn majority(correct: f64, wrong: f64, none: f64) -> Result<Self> {
        let vf = FrequencyValueFunction::Majority { correct, wrong, none };
        vf.validate()?;
        Ok(vf)
    }

    pub fn table(entries: BTreeMap<(u64, u64), f64>, default: Option<f64>) -> Result<Self> {
        let vf = FrequencyValueFunction::Table { entries, default };
        vf.validate()?;
        Ok(vf)
    }

    /// Finite values and a resolvable `v(0, 0)`.
    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("value {x} is not finite")))
            }
        };
        match self {
            FrequencyValueFunction::Majority { correct, wrong, none } => {
                finite(*correct)?;
                finite(*wrong)?;
                finite(*none)
            }
            FrequencyValueFunction::Table { entries, default } => {
                entries.values().try_for_each(|&v| finite(v))?;
                if let Some(d) = default {
                    finite(*d)?;
                }
                self.value(0, 0).map(|_| ())
            }
        }
    }

    /// `v(a, b)`.
    pub fn value(&self, a: u64, b: u64) -> Result<f64> {
        match self {
            FrequencyValueFunction::Majority { correct, wrong, none } => Ok(match a.cmp(&b) {
                std::cmp::Ordering::Greater => *correct,
                std::cmp::Ordering::Less => *wrong,
                std::cmp::Ordering::Equal => *none,
            }),
            FrequencyValueFunction::Table { entries, default } => entries
                .get(&(a, b))
                .copied()
                .or(*default)
                .ok_or(Error::MissingValue { a, b }),
        }
    }

    /// `v(a+1, b) - v(a, b)` when the added example agrees with the query
    /// label, `v(a, b+1) - v(a, b)` otherwise.
    pub fn delta<S: Scalar>(&self, a: u64, b: u64, label_matches: bool) -> Result<S> {
        let base = S::from_money(self.value(a, b)?);
        let grown = if label_matches { self.value(a + 1, b)? } else { self.value(a, b + 1)? };
        Ok(S::from_money(grown) - base)
    }
}

/// Outcome values of a k-NN decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeValues {
    pub correct: f64,
    pub wrong: f64,
    pub none: f64,
}

impl OutcomeValues {
    pub fn new(correct: f64, wrong: f64, none: f64) -> Result<Self> {
        if ![correct, wrong, none].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("outcome values must be finite".into()));
        }
        Ok(OutcomeValues { correct, wrong, none })
    }
}

/// Label counts of one bin relative to a query label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinTally {
    pub n: u64,
    pub n_match: u64,
    pub n_mismatch: u64,
}

/// Counts the examples in `bin`, split by agreement with `query_label`.
pub fn tally_bin(dataset: &Dataset, bin: &str, query_label: &Label) -> BinTally {
    let mut t = BinTally::default();
    for e in dataset.examples().iter().filter(|e| e.bin.as_deref() == Some(bin)) {
        t.n += 1;
        if &e.label == query_label {
            t.n_match += 1;
        } else {
            t.n_mismatch += 1;
        }
    }
    t
}

/// A distance function between a stored input and a query input. It need not
/// be symmetric or satisfy the triangle inequality.
pub trait Metric: Sync {
    fn distance(&self, example: &[f64], query: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Metric for Euclidean {
    fn distance(&self, example: &[f64], query: &[f64]) -> f64 {
        example.iter().zip(query).map(|(x, q)| (x - q) * (x - q)).sum::<f64>().sqrt()
    }
}

impl<F> Metric for F
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    fn distance(&self, example: &[f64], query: &[f64]) -> f64 {
        self(example, query)
    }
}

/// Examples in ascending distance to a query, with prefix label counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedNeighborhood {
    /// Dataset indices, nearest first.
    pub order: Vec<usize>,
    /// Whether the example at each position carries the query label.
    pub matches: Vec<bool>,
    /// Query-label examples strictly nearer than each position.
    pub prefix_match: Vec<u64>,
    /// Other-label examples strictly nearer than each position.
    pub prefix_mismatch: Vec<u64>,
}

impl RankedNeighborhood {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Example ids in rank order.
    pub fn ids(&self, dataset: &Dataset) -> Vec<u64> {
        self.order.iter().map(|&i| dataset.examples()[i].id).collect()
    }

    /// Position of each dataset index in the ranking.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &idx) in self.order.iter().enumerate() {
            pos[idx] = p;
        }
        pos
    }

    pub fn total_match(&self) -> u64 {
        self.matches.iter().filter(|&&m| m).count() as u64
    }
}

/// Ranks every example by distance to `query_features`; exact ties go to the
/// smaller example id.
pub fn rank_by_distance(
    dataset: &Dataset,
    query_features: &[f64],
    query_label: &Label,
    metric: &dyn Metric,
) -> Result<RankedNeighborhood> {
    let dim = dataset.feature_dimension()?;
    if !dataset.is_empty() && dim != query_features.len() {
        return Err(Error::DimensionMismatch { expected: dim, found: query_features.len() });
    }
    let examples = dataset.examples();
    let mut keyed = Vec::with_capacity(examples.len());
    for (idx, e) in examples.iter().enumerate() {
        let d = metric.distance(e.features.as_deref().unwrap_or(&[]), query_features);
        if d.is_nan() {
            return Err(Error::InvalidInput(format!("distance to example {} is NaN", e.id)));
        }
        keyed.push((d, e.id, idx, &e.label == query_label));
    }
    keyed.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    // Labels are compared in dataset order above, so building the ranking
    // does not revisit the examples in distance order.
    let (order, matches) = keyed.into_iter().map(|(_, _, idx, m)| (idx, m)).unzip();
    Ok(ranking_with_matches(order, matches))
}

/// Builds prefix counts for an already ordered list of dataset indices.
pub fn ranking_from_order(dataset: &Dataset, order: Vec<usize>, query_label: &Label) -> RankedNeighborhood {
    let matches = order.iter().map(|&idx| &dataset.examples()[idx].label == query_label).collect();
    ranking_with_matches(order, matches)
}

fn ranking_with_matches(order: Vec<usize>, matches: Vec<bool>) -> RankedNeighborhood {
    let n = order.len();
    let mut prefix_match = Vec::with_capacity(n);
    let mut prefix_mismatch = Vec::with_capacity(n);
    let (mut a, mut b) = (0u64, 0u64);
    for &m in &matches {
        prefix_match.push(a);
        prefix_mismatch.push(b);
        if m {
            a += 1;
        } else {
            b += 1;
        }
    }
    RankedNeighborhood { order, matches, prefix_match, prefix_mismatch }
}

/// Rejects even or zero `k`.
pub fn check_k(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        Err(Error::InvalidK(k))
    } else {
        Ok(())
    }
}

/// Value of a k-NN classifier trained on `subset` (dataset indices): `none`
/// with fewer than `k` members, otherwise the majority vote of the `k`
/// members nearest the query.
pub fn knn_subset_value(
    subset: &[usize],
    ranking: &RankedNeighborhood,
    k: usize,
    ov: &OutcomeValues,
) -> Result<f64> {
    check_k(k)?;
    if subset.len() < k {
        return Ok(ov.none);
    }
    let positions = ranking.positions();
    let mut ranked: Vec<usize> = subset.iter().map(|&i| positions[i]).collect();
    ranked.sort_unstable();
    let votes = ranked[..k].iter().filter(|&&p| ranking.matches[p]).count();
    Ok(if 2 * votes > k { ov.correct } else { ov.wrong })
}
