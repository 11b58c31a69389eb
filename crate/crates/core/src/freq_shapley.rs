//! Shapley values for frequency-based (binned) decision rules.
//!
//! Only examples in the query's bin matter. For an in-bin example `i` with
//! `|A|` other agreeing and `|B|` other disagreeing examples, its value is
//!
//! ```text
//! sum over (a, b) in R of  1/n * C(n-1, a+b)^-1 * C(|A|, a) * C(|B|, b) * delta_i(a, b)
//! ```
//!
//! where `R` holds the count pairs at which adding `i` changes the value.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;

use crate::coalition::CoalitionStructure;
use crate::combinatorics::{ExactRational, NumericMode, Scalar};
use crate::error::{Error, Result};
use crate::model::{tally_bin, BinTally, Dataset, FrequencyQuery, FrequencyValueFunction, Label};
use crate::report::{assemble, Method, ReportInput, ReportOptions, ValueReport};

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalEntry<S> {
    pub a: u64,
    pub b: u64,
    pub delta: S,
}

/// Count pairs `(a, b)` at which adding the example changes the value, with
/// the change. Sorted by `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSet<S> {
    pub entries: Vec<CriticalEntry<S>>,
}

impl<S> CriticalSet<S> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Critical set over `[0, size_a] x [0, size_b]`, using the closed form for
/// majority rules and an exhaustive scan otherwise.
pub fn critical_set<S: Scalar>(
    vf: &FrequencyValueFunction,
    size_a: u64,
    size_b: u64,
    label_matches: bool,
) -> Result<CriticalSet<S>> {
    match vf {
        FrequencyValueFunction::Majority { correct, wrong, none } => Ok(majority_critical_set(
            *correct,
            *wrong,
            *none,
            size_a,
            size_b,
            label_matches,
        )),
        FrequencyValueFunction::Table { .. } => critical_set_scan(vf, size_a, size_b, label_matches),
    }
}

/// Exhaustive scan of every `(a, b)` pair.
pub fn critical_set_scan<S: Scalar>(
    vf: &FrequencyValueFunction,
    size_a: u64,
    size_b: u64,
    label_matches: bool,
) -> Result<CriticalSet<S>> {
    let mut entries = Vec::new();
    for a in 0..=size_a {
        for b in 0..=size_b {
            let delta: S = vf.delta(a, b, label_matches)?;
            if !delta.is_zero() {
                entries.push(CriticalEntry { a, b, delta });
            }
        }
    }
    Ok(CriticalSet { entries })
}

// A majority rule only changes its output on the tie diagonal and on the
// diagonal one step away from it.
fn majority_critical_set<S: Scalar>(
    correct: f64,
    wrong: f64,
    none: f64,
    size_a: u64,
    size_b: u64,
    label_matches: bool,
) -> CriticalSet<S> {
    let diff = |to: f64, from: f64| S::from_money(to) - S::from_money(from);
    let mut entries = Vec::new();
    let (tie, off, off_a, off_b): (S, S, i64, i64) = if label_matches {
        // a = b: none -> correct; a = b - 1: wrong -> none
        (diff(correct, none), diff(none, wrong), 0, 1)
    } else {
        // a = b: none -> wrong; a = b + 1: correct -> none
        (diff(wrong, none), diff(none, correct), 1, 0)
    };
    if !tie.is_zero() {
        for d in 0..=size_a.min(size_b) {
            entries.push(CriticalEntry { a: d, b: d, delta: tie.clone() });
        }
    }
    if !off.is_zero() {
        let mut d = 0u64;
        loop {
            let a = d + off_a as u64;
            let b = d + off_b as u64;
            if a > size_a || b > size_b {
                break;
            }
            entries.push(CriticalEntry { a, b, delta: off.clone() });
            d += 1;
        }
    }
    entries.sort_by_key(|e| (e.a, e.b));
    CriticalSet { entries }
}

/// Shapley value of one in-bin example for one query.
///
/// `tally` counts the whole bin including the example; `label_matches` says
/// whether the example carries the query label.
pub fn shapley_frequency_single<S: Scalar>(
    tally: BinTally,
    vf: &FrequencyValueFunction,
    label_matches: bool,
) -> Result<S> {
    if tally.n == 0 {
        return Err(Error::Precondition("the example must be in the bin (n >= 1)".into()));
    }
    if tally.n != tally.n_match + tally.n_mismatch {
        return Err(Error::Precondition("bin tally components must sum to n".into()));
    }
    let (size_a, size_b) = match label_matches {
        true if tally.n_match > 0 => (tally.n_match - 1, tally.n_mismatch),
        false if tally.n_mismatch > 0 => (tally.n_match, tally.n_mismatch - 1),
        _ => return Err(Error::Precondition("no bin example carries the requested label".into())),
    };
    let n = tally.n as i64;
    let critical: CriticalSet<S> = critical_set(vf, size_a, size_b, label_matches)?;
    let mut total = S::zero();
    for CriticalEntry { a, b, delta } in critical.entries {
        let weight = S::binom_ratio(
            &[(size_a as i64, a as i64), (size_b as i64, b as i64)],
            &[(n - 1, (a + b) as i64)],
        );
        total += weight * delta;
    }
    Ok(total * S::from_ratio(1, tally.n))
}

pub(crate) fn check_queries(dataset: &Dataset, queries: &[FrequencyQuery]) -> Result<()> {
    dataset.require_bins()?;
    let bins = dataset.bins();
    dataset.check_query_labels(queries.iter().map(|q| &q.label))?;
    for q in queries {
        if !bins.contains(q.bin.as_str()) {
            return Err(Error::UnknownBin(q.bin.clone()));
        }
        if let Some(vf) = &q.value_override {
            vf.validate()?;
        }
    }
    Ok(())
}

/// Shapley values of every example (dataset order) for one query.
pub fn shapley_frequency_values<S: Scalar>(
    dataset: &Dataset,
    query: &FrequencyQuery,
    vf: &FrequencyValueFunction,
) -> Result<Vec<S>> {
    let vf = query.value_override.as_ref().unwrap_or(vf);
    let tally = tally_bin(dataset, &query.bin, &query.label);
    dataset
        .examples()
        .iter()
        .map(|e| {
            if e.bin.as_deref() != Some(query.bin.as_str()) {
                Ok(S::zero())
            } else {
                shapley_frequency_single(tally, vf, e.label == query.label)
            }
        })
        .collect()
}

/// Values for a (bin, query label) class: (agreeing example, disagreeing example).
type ClassValues<S> = (Option<S>, Option<S>);

fn class_values<S: Scalar>(
    dataset: &Dataset,
    bin: &str,
    label: &Label,
    vf: &FrequencyValueFunction,
) -> Result<ClassValues<S>> {
    let tally = tally_bin(dataset, bin, label);
    let agree = if tally.n_match > 0 { Some(shapley_frequency_single(tally, vf, true)?) } else { None };
    let disagree = if tally.n_mismatch > 0 { Some(shapley_frequency_single(tally, vf, false)?) } else { None };
    Ok((agree, disagree))
}

fn per_query_values<S: Scalar>(
    dataset: &Dataset,
    queries: &[FrequencyQuery],
    vf: &FrequencyValueFunction,
    cache: bool,
) -> Result<Vec<Vec<S>>> {
    if !cache {
        return queries.par_iter().map(|q| shapley_frequency_values(dataset, q, vf)).collect();
    }
    // One computation per (bin, in-sample label, query label); queries with
    // their own value function bypass the cache.
    let keys: BTreeSet<(&str, &Label)> = queries
        .iter()
        .filter(|q| q.value_override.is_none())
        .map(|q| (q.bin.as_str(), &q.label))
        .collect();
    let keys: Vec<_> = keys.into_iter().collect();
    let computed: Vec<ClassValues<S>> =
        keys.par_iter().map(|&(bin, label)| class_values(dataset, bin, label, vf)).collect::<Result<_>>()?;
    let table: BTreeMap<_, _> = keys.into_iter().zip(computed).collect();

    queries
        .par_iter()
        .map(|q| {
            if q.value_override.is_some() {
                return shapley_frequency_values(dataset, q, vf);
            }
            let (agree, disagree) = &table[&(q.bin.as_str(), &q.label)];
            Ok(dataset
                .examples()
                .iter()
                .map(|e| {
                    if e.bin.as_deref() != Some(q.bin.as_str()) {
                        S::zero()
                    } else if e.label == q.label {
                        agree.clone().expect("agreeing class present")
                    } else {
                        disagree.clone().expect("disagreeing class present")
                    }
                })
                .collect())
        })
        .collect()
}

/// Shapley values summed over queries. Coalition totals are included when a
/// coalition structure is given.
pub fn shapley_frequency_report(
    dataset: &Dataset,
    queries: &[FrequencyQuery],
    vf: &FrequencyValueFunction,
    coalitions: Option<&CoalitionStructure>,
    options: ReportOptions,
) -> Result<ValueReport> {
    match options.numeric {
        NumericMode::Exact => report_in::<ExactRational>(dataset, queries, vf, coalitions, options),
        NumericMode::Float => report_in::<f64>(dataset, queries, vf, coalitions, options),
    }
}

fn report_in<S: Scalar>(
    dataset: &Dataset,
    queries: &[FrequencyQuery],
    vf: &FrequencyValueFunction,
    coalitions: Option<&CoalitionStructure>,
    options: ReportOptions,
) -> Result<ValueReport> {
    let started = Instant::now();
    vf.validate()?;
    check_queries(dataset, queries)?;
    let per_query = per_query_values::<S>(dataset, queries, vf, options.cache)?;
    Ok(assemble(ReportInput {
        method: Method::ShapleyFreq,
        k: None,
        detail: None,
        dataset,
        coalitions,
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

    fn q(n: i64) -> ExactRational {
        BigRational::from_integer(n.into())
    }

    fn majority() -> FrequencyValueFunction {
        FrequencyValueFunction::majority(100.0, -500.0, 0.0).unwrap()
    }

    #[test]
    fn critical_set_examples() {
        let r: CriticalSet<f64> = critical_set(&majority(), 1, 1, true).unwrap();
        let got: Vec<_> = r.entries.iter().map(|e| (e.a, e.b, e.delta)).collect();
        assert_eq!(got, vec![(0, 0, 100.0), (0, 1, 500.0), (1, 1, 100.0)]);

        let r: CriticalSet<f64> = critical_set(&majority(), 2, 0, false).unwrap();
        let got: Vec<_> = r.entries.iter().map(|e| (e.a, e.b, e.delta)).collect();
        assert_eq!(got, vec![(0, 0, -500.0), (1, 0, -100.0)]);

        let constant = FrequencyValueFunction::table(BTreeMap::new(), Some(5.0)).unwrap();
        assert!(critical_set::<f64>(&constant, 4, 4, true).unwrap().is_empty());
    }

    #[test]
    fn majority_fast_path_matches_scan() {
        for (c, w, nv) in [(100.0, -500.0, 0.0), (1.0, 1.0, 0.0), (2.0, -1.0, 2.0), (0.0, 0.0, 0.0)] {
            let vf = FrequencyValueFunction::majority(c, w, nv).unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    for m in [true, false] {
                        let fast: CriticalSet<ExactRational> = critical_set(&vf, a, b, m).unwrap();
                        let scan: CriticalSet<ExactRational> = critical_set_scan(&vf, a, b, m).unwrap();
                        assert_eq!(fast, scan, "({c},{w},{nv}) A={a} B={b} match={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn single_values() {
        let vf = FrequencyValueFunction::majority(1.0, -1.0, 0.0).unwrap();
        let one = BinTally { n: 1, n_match: 1, n_mismatch: 0 };
        assert_eq!(shapley_frequency_single::<ExactRational>(one, &vf, true).unwrap(), q(1));

        let bin = BinTally { n: 3, n_match: 2, n_mismatch: 1 };
        assert_eq!(shapley_frequency_single::<ExactRational>(bin, &majority(), true).unwrap(), q(150));
        assert_eq!(shapley_frequency_single::<ExactRational>(bin, &majority(), false).unwrap(), q(-200));
        assert!((shapley_frequency_single::<f64>(bin, &majority(), true).unwrap() - 150.0).abs() < 1e-12);

        assert!(matches!(
            shapley_frequency_single::<f64>(BinTally::default(), &majority(), true),
            Err(Error::Precondition(_))
        ));
    }

    fn worked_dataset() -> Dataset {
        Dataset::new(vec![
            Example::binned(1, "b", "y"),
            Example::binned(2, "b", "y"),
            Example::binned(3, "b", "n"),
            Example::binned(4, "other", "n"),
        ])
        .unwrap()
    }

    #[test]
    fn report_values_and_additivity() {
        let d = worked_dataset();
        let one = [FrequencyQuery::new("b", "y")];
        let exact = ReportOptions::with_numeric(NumericMode::Exact);
        let r = shapley_frequency_report(&d, &one, &majority(), None, exact).unwrap();
        assert_eq!(r.exact_values().unwrap(), vec![q(150), q(150), q(-200), q(0)]);

        let two = [FrequencyQuery::new("b", "y"), FrequencyQuery::new("b", "y")];
        let r2 = shapley_frequency_report(&d, &two, &majority(), None, exact).unwrap();
        assert_eq!(r2.exact_values().unwrap(), vec![q(300), q(300), q(-400), q(0)]);
    }

    #[test]
    fn unknown_bin_is_rejected() {
        let d = worked_dataset();
        let err = shapley_frequency_report(&d, &[FrequencyQuery::new("nope", "y")], &majority(), None, ReportOptions::default())
            .unwrap_err();
        assert_eq!(err, Error::UnknownBin("nope".into()));
    }

    #[test]
    fn override_replaces_value_function() {
        let d = worked_dataset();
        let mut query = FrequencyQuery::new("b", "y");
        query.value_override = Some(FrequencyValueFunction::majority(1.0, -5.0, 0.0).unwrap());
        let exact = ReportOptions::with_numeric(NumericMode::Exact);
        let r = shapley_frequency_report(&d, &[query], &majority(), None, exact).unwrap();
        let half = |n: i64| BigRational::new(n.into(), 2.into());
        assert_eq!(r.exact_values().unwrap(), vec![half(3), half(3), q(-2), q(0)]);
    }
}
