//! Owen values for k-nearest-neighbor classification.
//!
//! The change and creation contributions of the Shapley case carry over, with
//! the coalition-order average handled by the precede DP of
//! [`crate::freq_owen`] and the within-coalition average by a precedence
//! probability over the target coalition's members.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::coalition::CoalitionStructure;
use crate::combinatorics::{ExactRational, NumericMode, Scalar};
use crate::error::{Error, Result};
use crate::freq_owen::{coalition_precede_dp, BaseCase, CoalitionTally, PrecedeDistribution};
use crate::knn_shapley::KnnConfig;
use crate::model::{check_k, rank_by_distance, Dataset, KnnQuery, OutcomeValues, RankedNeighborhood};
use crate::report::{assemble, Method, ReportInput, ReportOptions, ValueReport};

/// Precede distribution over coalitions other than the target, truncated at
/// `caps`. Under [`BaseCase::FirstPrecedes`] the first entry of `counts` is the
/// coalition holding the displaced neighbor.
pub fn knn_owen_distribution<S: Scalar>(
    counts: &[CoalitionTally],
    base: BaseCase,
    caps: (u64, u64),
) -> PrecedeDistribution<S> {
    coalition_precede_dp(counts, base, caps)
}

fn change_delta<S: Scalar>(ov: &OutcomeValues, agrees: bool) -> S {
    let gain = S::from_money(ov.correct) - S::from_money(ov.wrong);
    if agrees {
        gain
    } else {
        -gain
    }
}

/// Contribution of one displaced neighbor `j` to the change value of `i`.
///
/// `am`, `bm` count target-coalition members nearer than `j` (other than `i`)
/// that agree/disagree with the query; `j_in_target` says whether `j` itself
/// belongs to the target coalition.
fn change_term<S: Scalar>(q: &PrecedeDistribution<S>, am: u64, bm: u64, j_in_target: bool, half: u64, delta: &S) -> S {
    let mut total = S::zero();
    for a in 0..=am.min(half) {
        for b in 0..=bm.min(half) {
            let outer = q.get(half - a, half - b);
            if outer.is_zero() {
                continue;
            }
            let (ai, bi, am_i, bm_i) = (a as i64, b as i64, am as i64, bm as i64);
            let inner = if j_in_target {
                S::binom_ratio(&[(am_i, ai), (bm_i, bi)], &[(am_i + bm_i + 1, ai + bi + 1)])
                    * S::from_ratio(1, am + bm + 2)
            } else {
                S::binom_ratio(&[(am_i, ai), (bm_i, bi)], &[(am_i + bm_i, ai + bi)]) * S::from_ratio(1, am + bm + 1)
            };
            total += outer * inner;
        }
    }
    total * delta.clone()
}

/// Per-coalition counts of ranked examples at positions `< before`, skipping
/// dataset index `skip`.
fn counts_before(
    ranking: &RankedNeighborhood,
    coalitions: &CoalitionStructure,
    before: usize,
    skip: usize,
) -> Vec<CoalitionTally> {
    let mut counts = vec![CoalitionTally::default(); coalitions.len()];
    for p in 0..before {
        let idx = ranking.order[p];
        if idx == skip {
            continue;
        }
        let t = &mut counts[coalitions.owner(idx)];
        if ranking.matches[p] {
            t.matching += 1;
        } else {
            t.mismatching += 1;
        }
    }
    counts
}

fn member_position(ranking: &RankedNeighborhood, example: usize) -> Result<usize> {
    ranking
        .order
        .iter()
        .position(|&i| i == example)
        .ok_or_else(|| Error::Precondition(format!("dataset index {example} is not ranked")))
}

/// Change contribution to the Owen value of dataset index `example`, which
/// must belong to coalition `target`. Evaluates one DP per displaced neighbor.
pub fn knn_owen_change<S: Scalar>(
    ranking: &RankedNeighborhood,
    coalitions: &CoalitionStructure,
    target: usize,
    example: usize,
    k: usize,
    ov: &OutcomeValues,
) -> Result<S> {
    check_k(k)?;
    if coalitions.owner(example) != target {
        return Err(Error::Precondition(format!("example is not in coalition {}", coalitions.name(target))));
    }
    let half = (k as u64 - 1) / 2;
    let pi = member_position(ranking, example)?;
    let agrees = ranking.matches[pi];
    let delta = change_delta::<S>(ov, agrees);
    let mut total = S::zero();
    for pj in pi + 1..ranking.len() {
        if ranking.matches[pj] == agrees {
            continue;
        }
        let counts = counts_before(ranking, coalitions, pj, example);
        let j_owner = coalitions.owner(ranking.order[pj]);
        let own = counts[target];
        let q = if j_owner == target {
            let others: Vec<_> = (0..counts.len()).filter(|&c| c != target).map(|c| counts[c]).collect();
            knn_owen_distribution::<S>(&others, BaseCase::Target, (half, half))
        } else {
            let mut others = vec![counts[j_owner]];
            others.extend((0..counts.len()).filter(|&c| c != target && c != j_owner).map(|c| counts[c]));
            knn_owen_distribution::<S>(&others, BaseCase::FirstPrecedes, (half, half))
        };
        total += change_term(&q, own.matching, own.mismatching, j_owner == target, half, &delta);
    }
    Ok(total)
}

/// Creation value for a target member, given the precede distribution of the
/// other coalitions' full label counts.
fn creation_term<S: Scalar>(
    q: &PrecedeDistribution<S>,
    coalition_size: u64,
    am: u64,
    bm: u64,
    agrees: bool,
    k: u64,
    ov: &OutcomeValues,
) -> S {
    let none = S::from_money(ov.none);
    let to_correct = S::from_money(ov.correct) - none.clone();
    let to_wrong = S::from_money(ov.wrong) - none;
    let mut total = S::zero();
    for a in 0..k {
        for b in 0..k - a {
            let outer = q.get(a, b);
            if outer.is_zero() {
                continue;
            }
            let inside = k - 1 - a - b;
            for ai in 0..=inside.min(am) {
                let bi = inside - ai;
                if bi > bm {
                    continue;
                }
                let inner = S::binom_ratio(
                    &[(am as i64, ai as i64), (bm as i64, bi as i64)],
                    &[(coalition_size as i64 - 1, inside as i64)],
                );
                if inner.is_zero() {
                    continue;
                }
                let votes = a + ai + u64::from(agrees);
                let value = if 2 * votes > k { &to_correct } else { &to_wrong };
                total += outer.clone() * inner * value.clone();
            }
        }
    }
    total * S::from_ratio(1, coalition_size)
}

fn coalition_totals(ranking: &RankedNeighborhood, coalitions: &CoalitionStructure) -> Vec<CoalitionTally> {
    counts_before(ranking, coalitions, ranking.len(), usize::MAX)
}

/// Creation contribution to the Owen value of dataset index `example` in
/// coalition `target`.
pub fn knn_owen_creation<S: Scalar>(
    ranking: &RankedNeighborhood,
    coalitions: &CoalitionStructure,
    target: usize,
    example: usize,
    k: usize,
    ov: &OutcomeValues,
) -> Result<S> {
    check_k(k)?;
    if coalitions.owner(example) != target {
        return Err(Error::Precondition(format!("example is not in coalition {}", coalitions.name(target))));
    }
    let agrees = ranking.matches[member_position(ranking, example)?];
    let totals = coalition_totals(ranking, coalitions);
    let others: Vec<_> = (0..totals.len()).filter(|&c| c != target).map(|c| totals[c]).collect();
    let cap = k as u64 - 1;
    let q = knn_owen_distribution::<S>(&others, BaseCase::Target, (cap, cap));
    let own = totals[target];
    let (am, bm) = if agrees { (own.matching - 1, own.mismatching) } else { (own.matching, own.mismatching - 1) };
    Ok(creation_term(&q, coalitions.members(target).len() as u64, am, bm, agrees, k as u64, ov))
}

/// Owen values of all members of `target`, as `(dataset index, value)`.
///
/// The change part sweeps the ranking once: for each neighbor `j` the DP is
/// evaluated once (memoized while the capped counts are unchanged) and its
/// term is shared by every member nearer than `j` with the opposite label.
pub fn knn_owen_coalition<S: Scalar>(
    ranking: &RankedNeighborhood,
    coalitions: &CoalitionStructure,
    target: usize,
    k: usize,
    ov: &OutcomeValues,
) -> Result<Vec<(usize, S)>> {
    check_k(k)?;
    let n = ranking.len();
    let k64 = k as u64;
    let half = (k64 - 1) / 2;
    let m = coalitions.len();

    // Creation: one DP per target, two label classes.
    let totals = coalition_totals(ranking, coalitions);
    let own_total = totals[target];
    let others_total: Vec<_> = (0..m).filter(|&c| c != target).map(|c| totals[c]).collect();
    let q_create = knn_owen_distribution::<S>(&others_total, BaseCase::Target, (k64 - 1, k64 - 1));
    let size = coalitions.members(target).len() as u64;
    let create_agree = (own_total.matching > 0).then(|| {
        creation_term(&q_create, size, own_total.matching - 1, own_total.mismatching, true, k64, ov)
    });
    let create_disagree = (own_total.mismatching > 0).then(|| {
        creation_term(&q_create, size, own_total.matching, own_total.mismatching - 1, false, k64, ov)
    });

    // Change: per-position terms for a member of the opposite label.
    let gain = change_delta::<S>(ov, true);
    let loss = change_delta::<S>(ov, false);
    let mut running = vec![CoalitionTally::default(); m];
    let mut version: u64 = 0;
    let mut memo: HashMap<(Option<usize>, u64), PrecedeDistribution<S>> = HashMap::new();
    let mut terms = vec![S::zero(); n];
    for pj in 0..n {
        let j_idx = ranking.order[pj];
        let j_owner = coalitions.owner(j_idx);
        let member_agrees = !ranking.matches[pj];
        let own = running[target];
        let (am, bm) = match member_agrees {
            true if own.matching > 0 => (own.matching - 1, own.mismatching),
            false if own.mismatching > 0 => (own.matching, own.mismatching - 1),
            // No target member of the opposite label is nearer than j.
            _ => (u64::MAX, u64::MAX),
        };
        if am != u64::MAX {
            let key = ((j_owner != target).then_some(j_owner), version);
            let q = memo.entry(key).or_insert_with(|| {
                let capped = |t: CoalitionTally| {
                    CoalitionTally::new(t.matching.min(half + 1), t.mismatching.min(half + 1))
                };
                if j_owner == target {
                    let others: Vec<_> = (0..m).filter(|&c| c != target).map(|c| capped(running[c])).collect();
                    knn_owen_distribution(&others, BaseCase::Target, (half, half))
                } else {
                    let mut others = vec![capped(running[j_owner])];
                    others.extend((0..m).filter(|&c| c != target && c != j_owner).map(|c| capped(running[c])));
                    knn_owen_distribution(&others, BaseCase::FirstPrecedes, (half, half))
                }
            });
            let delta = if member_agrees { &gain } else { &loss };
            terms[pj] = change_term(q, am, bm, j_owner == target, half, delta);
        }

        let t = &mut running[j_owner];
        let before = (t.matching.min(half + 1), t.mismatching.min(half + 1));
        if ranking.matches[pj] {
            t.matching += 1;
        } else {
            t.mismatching += 1;
        }
        if j_owner != target && before != (t.matching.min(half + 1), t.mismatching.min(half + 1)) {
            version += 1;
            memo.clear();
        }
    }

    // Suffix sums by the label of the displaced neighbor.
    let mut out = Vec::with_capacity(size as usize);
    let mut suffix_agree_j = S::zero();
    let mut suffix_disagree_j = S::zero();
    for pi in (0..n).rev() {
        let idx = ranking.order[pi];
        if coalitions.owner(idx) == target {
            let agrees = ranking.matches[pi];
            let (change, create) = if agrees {
                (suffix_disagree_j.clone(), create_agree.clone())
            } else {
                (suffix_agree_j.clone(), create_disagree.clone())
            };
            out.push((idx, create.expect("class present") + change));
        }
        if ranking.matches[pi] {
            suffix_agree_j += terms[pi].clone();
        } else {
            suffix_disagree_j += terms[pi].clone();
        }
    }
    out.reverse();
    Ok(out)
}

/// Owen values of every example (dataset order) for a ranked query.
pub fn knn_owen_ranked<S: Scalar>(
    ranking: &RankedNeighborhood,
    coalitions: &CoalitionStructure,
    k: usize,
    ov: &OutcomeValues,
) -> Result<Vec<S>> {
    let mut values = vec![S::zero(); ranking.len()];
    for c in 0..coalitions.len() {
        for (idx, v) in knn_owen_coalition::<S>(ranking, coalitions, c, k, ov)? {
            values[idx] = v;
        }
    }
    Ok(values)
}

/// Owen values of every example (dataset order) for one query.
pub fn knn_owen_values<S: Scalar>(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    query: &KnnQuery,
    config: &KnnConfig<'_>,
) -> Result<Vec<S>> {
    check_k(config.k)?;
    dataset.check_query_label(&query.label)?;
    let ranking = rank_by_distance(dataset, &query.features, &query.label, config.metric)?;
    knn_owen_ranked(&ranking, coalitions, config.k, &config.outcome)
}

/// Owen values summed over queries, with coalition totals.
pub fn knn_owen_report(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    queries: &[KnnQuery],
    config: &KnnConfig<'_>,
    options: ReportOptions,
) -> Result<ValueReport> {
    match options.numeric {
        NumericMode::Exact => report_in::<ExactRational>(dataset, coalitions, queries, config, options),
        NumericMode::Float => report_in::<f64>(dataset, coalitions, queries, config, options),
    }
}

fn report_in<S: Scalar>(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    queries: &[KnnQuery],
    config: &KnnConfig<'_>,
    options: ReportOptions,
) -> Result<ValueReport> {
    let started = Instant::now();
    check_k(config.k)?;
    dataset.feature_dimension()?;
    dataset.check_query_labels(queries.iter().map(|q| &q.label))?;
    if coalitions.partition().iter().map(Vec::len).sum::<usize>() != dataset.len() {
        return Err(Error::InvalidCoalitions("coalitions do not cover the dataset".into()));
    }
    let per_query: Vec<Vec<S>> = queries
        .par_iter()
        .map(|q| knn_owen_values(dataset, coalitions, q, config))
        .collect::<Result<_>>()?;
    Ok(assemble(ReportInput {
        method: Method::OwenKnn,
        k: Some(config.k),
        detail: None,
        dataset,
        coalitions: Some(coalitions),
        per_query,
        keep_per_query: options.per_query,
        started,
    }))
}
