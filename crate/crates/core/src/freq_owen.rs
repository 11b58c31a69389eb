//! Owen values for frequency-based decision rules.
//!
//! The outer average over coalition orders is collapsed by a dynamic program
//! over coalitions: after `h` coalitions have been placed relative to the
//! target, the state is how many of them precede the target and how many
//! agreeing/disagreeing in-bin examples they bring. The inner average over
//! orders within the target coalition is a direct precedence probability.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;

use crate::coalition::CoalitionStructure;
use crate::combinatorics::{ExactRational, NumericMode, Scalar};
use crate::error::{Error, Result};
use crate::freq_shapley::{check_queries, critical_set, CriticalEntry};
use crate::model::{Dataset, FrequencyQuery, FrequencyValueFunction, Label};
use crate::report::{assemble, Method, ReportInput, ReportOptions, ValueReport};

/// Agreeing and disagreeing example counts contributed by one coalition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CoalitionTally {
    pub matching: u64,
    pub mismatching: u64,
}

impl CoalitionTally {
    pub fn new(matching: u64, mismatching: u64) -> Self {
        CoalitionTally { matching, mismatching }
    }

    fn is_empty(&self) -> bool {
        self.matching == 0 && self.mismatching == 0
    }
}

/// Probability that the coalitions preceding the target bring exactly
/// `(a, b)` agreeing/disagreeing examples, for `a <= max_a`, `b <= max_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecedeDistribution<S> {
    max_a: u64,
    max_b: u64,
    probs: Vec<S>,
}

impl<S: Scalar> PrecedeDistribution<S> {
    fn zeros(max_a: u64, max_b: u64) -> Self {
        let len = ((max_a + 1) * (max_b + 1)) as usize;
        PrecedeDistribution { max_a, max_b, probs: vec![S::zero(); len] }
    }

    pub fn max_a(&self) -> u64 {
        self.max_a
    }

    pub fn max_b(&self) -> u64 {
        self.max_b
    }

    /// Zero outside the stored range.
    pub fn get(&self, a: u64, b: u64) -> S {
        if a > self.max_a || b > self.max_b {
            return S::zero();
        }
        self.probs[(a * (self.max_b + 1) + b) as usize].clone()
    }

    /// Total stored probability mass.
    pub fn mass(&self) -> S {
        self.probs.iter().fold(S::zero(), |acc, p| acc + p.clone())
    }

    /// Non-zero entries as `(a, b, probability)`.
    pub fn support(&self) -> Vec<(u64, u64, S)> {
        let mut out = Vec::new();
        for a in 0..=self.max_a {
            for b in 0..=self.max_b {
                let p = self.get(a, b);
                if !p.is_zero() {
                    out.push((a, b, p));
                }
            }
        }
        out
    }
}

/// How the coalition-order DP starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseCase {
    /// Only the target coalition is placed: `p(0 preceding, 0, 0) = 1`.
    Target,
    /// The first listed coalition must precede the target:
    /// `p(1 preceding, a_1, b_1) = 1/2`. The resulting mass is 1/2.
    FirstPrecedes,
}

/// Distribution of counts brought by coalitions that precede the target,
/// over uniformly random orders of `others` and the target.
///
/// States beyond `caps` are dropped; transitions only increase counts, so the
/// stored range is exact. Coalitions with zero counts are skipped (except a
/// leading coalition under [`BaseCase::FirstPrecedes`]): they never change the
/// counts, and the relative order of the remaining coalitions stays uniform.
pub fn coalition_precede_dp<S: Scalar>(
    others: &[CoalitionTally],
    base: BaseCase,
    caps: (u64, u64),
) -> PrecedeDistribution<S> {
    let (max_a, max_b) = caps;
    let (first, rest) = match base {
        BaseCase::Target => (None, others),
        BaseCase::FirstPrecedes => {
            let (f, r) = others.split_first().expect("FirstPrecedes needs a leading coalition");
            (Some(*f), r)
        }
    };
    let layers: Vec<CoalitionTally> = rest.iter().copied().filter(|t| !t.is_empty()).collect();

    // Every counted coalition adds at least one example, so live states have
    // s <= a + b (+1 for a leading coalition that may be empty).
    let lead = u64::from(first.is_some());
    let s_max = (layers.len() as u64 + lead).min(max_a + max_b + lead);
    let width_b = max_b + 1;
    let plane = (max_a + 1) * width_b;
    let idx = |s: u64, a: u64, b: u64| (s * plane + a * width_b + b) as usize;
    let size = ((s_max + 1) * plane) as usize;

    let mut cur = vec![S::zero(); size];
    let mut placed: u64 = 0;
    match first {
        None => cur[idx(0, 0, 0)] = S::one(),
        Some(t) => {
            placed = 1;
            if t.matching <= max_a && t.mismatching <= max_b {
                cur[idx(1, t.matching, t.mismatching)] = S::from_ratio(1, 2);
            }
        }
    }

    let mut next = vec![S::zero(); size];
    for t in &layers {
        placed += 1;
        let h = placed;
        for slot in next.iter_mut() {
            *slot = S::zero();
        }
        for s in 0..=s_max.min(h - 1) {
            for a in 0..=max_a {
                for b in 0..=max_b {
                    let p = &cur[idx(s, a, b)];
                    if p.is_zero() {
                        continue;
                    }
                    // The new coalition lands before the target with
                    // probability (s + 1) / (h + 1).
                    let stay = S::from_ratio(h - s, h + 1);
                    next[idx(s, a, b)] += p.clone() * stay;
                    let (na, nb) = (a + t.matching, b + t.mismatching);
                    if s < s_max && na <= max_a && nb <= max_b {
                        next[idx(s + 1, na, nb)] += p.clone() * S::from_ratio(s + 1, h + 1);
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    let mut out = PrecedeDistribution::zeros(max_a, max_b);
    for s in 0..=s_max {
        for a in 0..=max_a {
            for b in 0..=max_b {
                let p = &cur[idx(s, a, b)];
                if !p.is_zero() {
                    out.probs[(a * width_b + b) as usize] += p.clone();
                }
            }
        }
    }
    out
}

/// Precede distribution for the frequency Owen value: `others` are the
/// in-bin tallies of every coalition except the target.
pub fn owen_precede_distribution<S: Scalar>(others: &[CoalitionTally]) -> PrecedeDistribution<S> {
    let caps = others.iter().fold((0, 0), |(a, b), t| (a + t.matching, b + t.mismatching));
    coalition_precede_dp(others, BaseCase::Target, caps)
}

/// In-bin members of the target coalition other than the valued example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TargetStats {
    pub matching: u64,
    pub mismatching: u64,
}

/// Owen value of one in-bin example of the target coalition for one query.
pub fn owen_frequency_single<S: Scalar>(
    others: &[CoalitionTally],
    target: TargetStats,
    vf: &FrequencyValueFunction,
    label_matches: bool,
) -> Result<S> {
    let p = owen_precede_distribution(others);
    owen_frequency_with(&p, target, vf, label_matches)
}

/// [`owen_frequency_single`] with a precomputed precede distribution.
pub fn owen_frequency_with<S: Scalar>(
    precede: &PrecedeDistribution<S>,
    target: TargetStats,
    vf: &FrequencyValueFunction,
    label_matches: bool,
) -> Result<S> {
    let (am, bm) = (target.matching, target.mismatching);
    let size_a = precede.max_a() + am;
    let size_b = precede.max_b() + bm;
    // Inner average over orders of the in-bin target members plus the example.
    let population = am + bm + 1;
    let critical = critical_set::<S>(vf, size_a, size_b, label_matches)?;
    let mut total = S::zero();
    for CriticalEntry { a, b, delta } in critical.entries {
        let mut prob = S::zero();
        for ai in 0..=a.min(am) {
            for bi in 0..=b.min(bm) {
                let outer = precede.get(a - ai, b - bi);
                if outer.is_zero() {
                    continue;
                }
                let inner = S::binom_ratio(
                    &[(am as i64, ai as i64), (bm as i64, bi as i64)],
                    &[((am + bm) as i64, (ai + bi) as i64)],
                );
                prob += outer * inner;
            }
        }
        total += prob * delta;
    }
    Ok(total * S::from_ratio(1, population))
}

/// In-bin (agreeing, disagreeing) counts per coalition.
fn coalition_tallies(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    bin: &str,
    label: &Label,
) -> Vec<CoalitionTally> {
    let mut tallies = vec![CoalitionTally::default(); coalitions.len()];
    for (idx, e) in dataset.examples().iter().enumerate() {
        if e.bin.as_deref() == Some(bin) {
            let t = &mut tallies[coalitions.owner(idx)];
            if &e.label == label {
                t.matching += 1;
            } else {
                t.mismatching += 1;
            }
        }
    }
    tallies
}

fn others_of(tallies: &[CoalitionTally], target: usize) -> Vec<CoalitionTally> {
    tallies.iter().enumerate().filter(|&(c, _)| c != target).map(|(_, t)| *t).collect()
}

fn target_stats(own: CoalitionTally, label_matches: bool) -> TargetStats {
    if label_matches {
        TargetStats { matching: own.matching - 1, mismatching: own.mismatching }
    } else {
        TargetStats { matching: own.matching, mismatching: own.mismatching - 1 }
    }
}

/// Owen values of every example (dataset order) for one query.
///
/// With `share` set, the precede distribution and value are computed once
/// per (coalition, in-sample label); otherwise once per example.
pub fn owen_frequency_values<S: Scalar>(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    query: &FrequencyQuery,
    vf: &FrequencyValueFunction,
    share: bool,
) -> Result<Vec<S>> {
    let vf = query.value_override.as_ref().unwrap_or(vf);
    let tallies = coalition_tallies(dataset, coalitions, &query.bin, &query.label);
    let in_bin = |idx: usize| dataset.examples()[idx].bin.as_deref() == Some(query.bin.as_str());
    let mut values = vec![S::zero(); dataset.len()];
    // Coalitions with the same tally facing the same multiset of other
    // tallies share their values (coalition order does not matter).
    let mut memo: HashMap<(CoalitionTally, Vec<CoalitionTally>), (Option<S>, Option<S>)> = HashMap::new();

    for c in 0..coalitions.len() {
        let own = tallies[c];
        if own.matching + own.mismatching == 0 {
            continue;
        }
        let others = others_of(&tallies, c);
        if share {
            let mut key: Vec<_> = others.iter().copied().filter(|t| !t.is_empty()).collect();
            key.sort_unstable();
            let (agree, disagree) = match memo.entry((own, key)) {
                Entry::Occupied(e) => e.get().clone(),
                Entry::Vacant(e) => {
                    let p = owen_precede_distribution::<S>(&others);
                    let agree = (own.matching > 0)
                        .then(|| owen_frequency_with(&p, target_stats(own, true), vf, true))
                        .transpose()?;
                    let disagree = (own.mismatching > 0)
                        .then(|| owen_frequency_with(&p, target_stats(own, false), vf, false))
                        .transpose()?;
                    e.insert((agree, disagree)).clone()
                }
            };
            for &idx in coalitions.members(c).iter().filter(|&&i| in_bin(i)) {
                let value = if dataset.examples()[idx].label == query.label { &agree } else { &disagree };
                values[idx] = value.clone().expect("class present");
            }
        } else {
            for &idx in coalitions.members(c).iter().filter(|&&i| in_bin(i)) {
                let m = dataset.examples()[idx].label == query.label;
                values[idx] = owen_frequency_single(&others, target_stats(own, m), vf, m)?;
            }
        }
    }
    Ok(values)
}

/// Owen values summed over queries, with coalition totals.
pub fn owen_frequency_report(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    queries: &[FrequencyQuery],
    vf: &FrequencyValueFunction,
    options: ReportOptions,
) -> Result<ValueReport> {
    match options.numeric {
        NumericMode::Exact => report_in::<ExactRational>(dataset, coalitions, queries, vf, options),
        NumericMode::Float => report_in::<f64>(dataset, coalitions, queries, vf, options),
    }
}

fn report_in<S: Scalar>(
    dataset: &Dataset,
    coalitions: &CoalitionStructure,
    queries: &[FrequencyQuery],
    vf: &FrequencyValueFunction,
    options: ReportOptions,
) -> Result<ValueReport> {
    let started = Instant::now();
    vf.validate()?;
    check_queries(dataset, queries)?;
    if coalitions.partition().iter().map(Vec::len).sum::<usize>() != dataset.len() {
        return Err(Error::InvalidCoalitions("coalitions do not cover the dataset".into()));
    }

    let per_query: Vec<Vec<S>> = if options.cache {
        let mut classes: BTreeMap<(&str, &Label), usize> = BTreeMap::new();
        for q in queries.iter().filter(|q| q.value_override.is_none()) {
            let next = classes.len();
            classes.entry((q.bin.as_str(), &q.label)).or_insert(next);
        }
        let mut keys: Vec<_> = classes.iter().map(|(k, &slot)| (slot, *k)).collect();
        keys.sort_unstable();
        let computed: Vec<Vec<S>> = keys
            .par_iter()
            .map(|&(_, (bin, label))| {
                owen_frequency_values(dataset, coalitions, &FrequencyQuery::new(bin, label.clone()), vf, true)
            })
            .collect::<Result<_>>()?;
        queries
            .par_iter()
            .map(|q| match q.value_override {
                Some(_) => owen_frequency_values(dataset, coalitions, q, vf, true),
                None => Ok(computed[classes[&(q.bin.as_str(), &q.label)]].clone()),
            })
            .collect::<Result<_>>()?
    } else {
        queries
            .par_iter()
            .map(|q| owen_frequency_values(dataset, coalitions, q, vf, false))
            .collect::<Result<_>>()?
    };

    Ok(assemble(ReportInput {
        method: Method::OwenFreq,
        k: None,
        detail: None,
        dataset,
        coalitions: Some(coalitions),
        per_query,
        keep_per_query: options.per_query,
        started,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Example;
    use num_rational::BigRational;

    fn r(n: i64, d: i64) -> ExactRational {
        BigRational::new(n.into(), d.into())
    }

    fn t(a: u64, b: u64) -> CoalitionTally {
        CoalitionTally::new(a, b)
    }

    #[test]
    fn distribution_examples() {
        let only = owen_precede_distribution::<ExactRational>(&[]);
        assert_eq!(only.support(), vec![(0, 0, r(1, 1))]);

        let two = owen_precede_distribution::<ExactRational>(&[t(1, 0)]);
        assert_eq!(two.support(), vec![(0, 0, r(1, 2)), (1, 0, r(1, 2))]);

        let three = owen_precede_distribution::<ExactRational>(&[t(1, 0), t(0, 1)]);
        assert_eq!(
            three.support(),
            vec![(0, 0, r(1, 3)), (0, 1, r(1, 6)), (1, 0, r(1, 6)), (1, 1, r(1, 3))]
        );
    }

    #[test]
    fn empty_coalitions_do_not_change_distribution() {
        let with = owen_precede_distribution::<ExactRational>(&[t(0, 0), t(2, 1), t(0, 0), t(1, 1)]);
        let without = owen_precede_distribution::<ExactRational>(&[t(2, 1), t(1, 1)]);
        assert_eq!(with, without);
    }

    #[test]
    fn distribution_sums_to_one() {
        let p = owen_precede_distribution::<ExactRational>(&[t(1, 2), t(3, 0), t(0, 1), t(2, 2), t(1, 1)]);
        assert_eq!(p.mass(), r(1, 1));
    }

    #[test]
    fn worked_owen_values() {
        // Bin {e1(y), e2(y), e3(n)}, coalitions {e1, e3} and {e2}.
        let vf = FrequencyValueFunction::majority(100.0, -500.0, 0.0).unwrap();
        let e1 = owen_frequency_single::<ExactRational>(&[t(1, 0)], TargetStats { matching: 0, mismatching: 1 }, &vf, true);
        let e2 = owen_frequency_single::<ExactRational>(&[t(1, 1)], TargetStats::default(), &vf, true);
        let e3 = owen_frequency_single::<ExactRational>(&[t(1, 0)], TargetStats { matching: 1, mismatching: 0 }, &vf, false);
        assert_eq!(e1.unwrap(), r(175, 1));
        assert_eq!(e2.unwrap(), r(100, 1));
        assert_eq!(e3.unwrap(), r(-175, 1));
    }

    fn worked_dataset() -> Dataset {
        Dataset::new(vec![
            Example::binned(1, "b", "y").with_coalition("c1"),
            Example::binned(2, "b", "y").with_coalition("c2"),
            Example::binned(3, "b", "n").with_coalition("c1"),
            Example::binned(4, "x", "n").with_coalition("c2"),
        ])
        .unwrap()
    }

    #[test]
    fn report_coalition_totals() {
        let d = worked_dataset();
        let cs = CoalitionStructure::from_dataset(&d).unwrap();
        let vf = FrequencyValueFunction::majority(100.0, -500.0, 0.0).unwrap();
        let opts = ReportOptions::with_numeric(NumericMode::Exact);
        let rep = owen_frequency_report(&d, &cs, &[FrequencyQuery::new("b", "y")], &vf, opts).unwrap();
        assert_eq!(rep.exact_values().unwrap(), vec![r(175, 1), r(100, 1), r(-175, 1), r(0, 1)]);
        assert_eq!(rep.coalition_value("c1"), Some(0.0));
        assert_eq!(rep.coalition_value("c2"), Some(100.0));
        rep.check_consistency().unwrap();
    }

    #[test]
    fn caching_is_transparent() {
        let d = worked_dataset();
        let cs = CoalitionStructure::from_dataset(&d).unwrap();
        let vf = FrequencyValueFunction::majority(3.0, -1.0, 0.5).unwrap();
        let queries = [FrequencyQuery::new("b", "y"), FrequencyQuery::new("x", "y"), FrequencyQuery::new("b", "n")];
        let cached = owen_frequency_report(&d, &cs, &queries, &vf, ReportOptions::default()).unwrap();
        let plain =
            owen_frequency_report(&d, &cs, &queries, &vf, ReportOptions { cache: false, ..Default::default() }).unwrap();
        assert_eq!(cached.examples, plain.examples);
        assert_eq!(cached.coalitions, plain.coalitions);
    }
}
