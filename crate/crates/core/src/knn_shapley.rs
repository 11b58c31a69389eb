//! Shapley values for k-nearest-neighbor classification.
//!
//! Adding example `i` to a training subset changes the classifier's value in
//! two ways: it can *create* a decision by being the k-th example, or it can
//! *change* a decision by displacing the current k-th neighbor `j` when the
//! other k-1 neighbors are split evenly and `i` and `j` disagree. The value
//! is the sum of the two contributions.

use std::time::Instant;

use rayon::prelude::*;

use crate::combinatorics::{ExactRational, NumericMode, Scalar};
use crate::error::Result;
use crate::model::{check_k, rank_by_distance, Dataset, KnnQuery, Metric, OutcomeValues, RankedNeighborhood};
use crate::report::{assemble, Method, ReportInput, ReportOptions, ValueReport};

/// Classifier settings.
#[derive(Clone, Copy)]
pub struct KnnConfig<'m> {
    pub k: usize,
    pub outcome: OutcomeValues,
    pub metric: &'m dyn Metric,
}

impl<'m> KnnConfig<'m> {
    pub fn new(k: usize, outcome: OutcomeValues, metric: &'m dyn Metric) -> Result<Self> {
        check_k(k)?;
        Ok(KnnConfig { k, outcome, metric })
    }
}

impl std::fmt::Debug for KnnConfig<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnnConfig").field("k", &self.k).field("outcome", &self.outcome).finish()
    }
}

/// Contribution of example `i` creating a decision by arriving k-th.
///
/// `n` counts all examples including `i`; `others_matching` counts examples
/// other than `i` that carry the query label. Zero when `n < k`.
pub fn knn_creation_value<S: Scalar>(
    n: u64,
    others_matching: u64,
    label_matches: bool,
    k: usize,
    ov: &OutcomeValues,
) -> Result<S> {
    check_k(k)?;
    let k = k as u64;
    if n < k {
        return Ok(S::zero());
    }
    let others_mismatching = (n - 1 - others_matching) as i64;
    // With at most `threshold` agreeing votes among the first k-1, the vote is wrong.
    let threshold = (k as i64 - 1) / 2 - i64::from(label_matches);
    let mut bracket = S::zero();
    for a in 0..k as i64 {
        let weight = S::binom_ratio(
            &[(others_matching as i64, a), (others_mismatching, k as i64 - 1 - a)],
            &[(n as i64 - 1, k as i64 - 1)],
        );
        if weight.is_zero() {
            continue;
        }
        let value = if a <= threshold { ov.wrong } else { ov.correct };
        bracket += weight * S::from_money(value);
    }
    Ok((bracket - S::from_money(ov.none)) * S::from_ratio(1, n))
}

/// Term of the change sum at rank position `j` for a hypothetical example
/// nearer than `j` whose label agrees with the query iff `agrees`.
fn change_term<S: Scalar>(ranking: &RankedNeighborhood, j: usize, agrees: bool, k: u64, delta: &S) -> S {
    if ranking.matches[j] == agrees {
        return S::zero();
    }
    let (a, b) = (ranking.prefix_match[j] as i64, ranking.prefix_mismatch[j] as i64);
    let half = (k as i64 - 1) / 2;
    let weight = S::binom_ratio(
        &[(a - i64::from(agrees), half), (b - i64::from(!agrees), half)],
        &[(a + b, k as i64)],
    );
    if weight.is_zero() {
        return S::zero();
    }
    weight * S::from_ratio(1, (a + b + 1) as u64) * delta.clone()
}

/// Change contributions of every example, indexed by rank position, from one
/// reverse sweep over the ranking.
pub fn knn_change_values_all<S: Scalar>(ranking: &RankedNeighborhood, k: usize, ov: &OutcomeValues) -> Result<Vec<S>> {
    check_k(k)?;
    let k = k as u64;
    let n = ranking.len();
    let gain = S::from_money(ov.correct) - S::from_money(ov.wrong);
    let loss = -gain.clone();
    // Running sums over positions farther than the current one, for an
    // example that agrees with the query label and for one that does not.
    let mut agree_sum = S::zero();
    let mut disagree_sum = S::zero();
    let mut out = vec![S::zero(); n];
    for p in (0..n).rev() {
        out[p] = if ranking.matches[p] { agree_sum.clone() } else { disagree_sum.clone() };
        agree_sum += change_term(ranking, p, true, k, &gain);
        disagree_sum += change_term(ranking, p, false, k, &loss);
    }
    Ok(out)
}

/// Shapley values of every example (dataset order) for a ranked query.
pub fn knn_shapley_ranked<S: Scalar>(ranking: &RankedNeighborhood, k: usize, ov: &OutcomeValues) -> Result<Vec<S>> {
    let n = ranking.len() as u64;
    let total_match = ranking.total_match();
    let create_agree: S =
        if total_match > 0 { knn_creation_value(n, total_match - 1, true, k, ov)? } else { S::zero() };
    let create_disagree: S =
        if total_match < n { knn_creation_value(n, total_match, false, k, ov)? } else { S::zero() };
    let change = knn_change_values_all::<S>(ranking, k, ov)?;
    let mut values = vec![S::zero(); ranking.len()];
    for (p, g) in change.into_iter().enumerate() {
        let f = if ranking.matches[p] { &create_agree } else { &create_disagree };
        values[ranking.order[p]] = f.clone() + g;
    }
    Ok(values)
}

/// Shapley values of every example (dataset order) for one query.
pub fn knn_shapley_values<S: Scalar>(dataset: &Dataset, query: &KnnQuery, config: &KnnConfig<'_>) -> Result<Vec<S>> {
    check_k(config.k)?;
    dataset.check_query_label(&query.label)?;
    let ranking = rank_by_distance(dataset, &query.features, &query.label, config.metric)?;
    knn_shapley_ranked(&ranking, config.k, &config.outcome)
}

/// Shapley values summed over queries.
pub fn knn_shapley_report(
    dataset: &Dataset,
    queries: &[KnnQuery],
    config: &KnnConfig<'_>,
    coalitions: Option<&crate::coalition::CoalitionStructure>,
    options: ReportOptions,
) -> Result<ValueReport> {
    match options.numeric {
        NumericMode::Exact => report_in::<ExactRational>(dataset, queries, config, coalitions, options),
        NumericMode::Float => report_in::<f64>(dataset, queries, config, coalitions, options),
    }
}

fn report_in<S: Scalar>(
    dataset: &Dataset,
    queries: &[KnnQuery],
    config: &KnnConfig<'_>,
    coalitions: Option<&crate::coalition::CoalitionStructure>,
    options: ReportOptions,
) -> Result<ValueReport> {
    let started = Instant::now();
    check_k(config.k)?;
    dataset.feature_dimension()?;
    dataset.check_query_labels(queries.iter().map(|q| &q.label))?;
    let per_query: Vec<Vec<S>> =
        queries.par_iter().map(|q| knn_shapley_values(dataset, q, config)).collect::<Result<_>>()?;
    Ok(assemble(ReportInput {
        method: Method::ShapleyKnn,
        k: Some(config.k),
        detail: None,
        dataset,
        coalitions,
        per_query,
        keep_per_query: options.per_query,
        started,
    }))
}
