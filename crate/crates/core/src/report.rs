//! The report document emitted for every valuation run.

use std::str::FromStr;
use std::time::Instant;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::coalition::CoalitionStructure;
use crate::combinatorics::{NumericMode, Scalar};
use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ShapleyFreq,
    OwenFreq,
    ShapleyKnn,
    OwenKnn,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: Method,
    pub numeric: NumericMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub queries: usize,
    /// Free-form qualifier, e.g. which oracle ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleValue {
    pub id: u64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coalition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionValue {
    pub id: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryValues {
    pub query: usize,
    /// One value per example, in the order of `ValueReport::examples`.
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<String>>,
}

/// Per-example, per-coalition and optionally per-query values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub meta: ReportMeta,
    pub examples: Vec<ExampleValue>,
    pub coalitions: Vec<CoalitionValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_query: Option<Vec<QueryValues>>,
}

/// Settings shared by every report builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    pub numeric: NumericMode,
    /// Keep the per-query breakdown.
    pub per_query: bool,
    /// Reuse values across examples and queries that share a label class.
    pub cache: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { numeric: NumericMode::Float, per_query: false, cache: true }
    }
}

impl ReportOptions {
    pub fn with_numeric(numeric: NumericMode) -> Self {
        ReportOptions { numeric, ..Self::default() }
    }
}

pub(crate) struct ReportInput<'a, S> {
    pub method: Method,
    pub k: Option<usize>,
    pub detail: Option<String>,
    pub dataset: &'a Dataset,
    pub coalitions: Option<&'a CoalitionStructure>,
    /// Query-major values, one row per query, one column per dataset index.
    pub per_query: Vec<Vec<S>>,
    pub keep_per_query: bool,
    pub started: Instant,
}

pub(crate) fn assemble<S: Scalar>(input: ReportInput<'_, S>) -> ValueReport {
    let n = input.dataset.len();
    let mut totals = vec![S::zero(); n];
    for row in &input.per_query {
        debug_assert_eq!(row.len(), n);
        for (t, v) in totals.iter_mut().zip(row) {
            *t += v.clone();
        }
    }

    let examples = input
        .dataset
        .examples()
        .iter()
        .zip(&totals)
        .enumerate()
        .map(|(idx, (e, t))| ExampleValue {
            id: e.id,
            value: t.to_f64(),
            exact: t.exact_repr(),
            standard_error: None,
            coalition: input.coalitions.map(|c| c.name(c.owner(idx)).to_string()),
        })
        .collect();

    let coalitions = match input.coalitions {
        Some(cs) => (0..cs.len())
            .map(|c| {
                let sum = coalition_sum(cs.members(c), &totals);
                CoalitionValue { id: cs.name(c).to_string(), value: sum.to_f64(), exact: sum.exact_repr() }
            })
            .collect(),
        None => Vec::new(),
    };

    let per_query = input.keep_per_query.then(|| {
        input
            .per_query
            .iter()
            .enumerate()
            .map(|(q, row)| QueryValues {
                query: q,
                values: row.iter().map(Scalar::to_f64).collect(),
                exact: (S::MODE == NumericMode::Exact)
                    .then(|| row.iter().filter_map(Scalar::exact_repr).collect()),
            })
            .collect()
    });

    let report = ValueReport {
        meta: ReportMeta {
            method: input.method,
            numeric: S::MODE,
            k: input.k,
            queries: input.per_query.len(),
            detail: input.detail,
            wall_time_ms: input.started.elapsed().as_secs_f64() * 1e3,
        },
        examples,
        coalitions,
        per_query,
    };
    debug_assert!(report.check_consistency().is_ok());
    report
}

fn coalition_sum<S: Scalar>(members: &[usize], totals: &[S]) -> S {
    members.iter().fold(S::zero(), |acc, &i| acc + totals[i].clone())
}

impl ValueReport {
    /// Every coalition total equals the sum of its members' values, using the
    /// exact representation when present.
    pub fn check_consistency(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.examples.iter().find(|e| !seen.insert(e.id)) {
            return Err(Error::InvalidInput(format!("example {} listed twice", dup.id)));
        }
        for c in &self.coalitions {
            let members = self.examples.iter().filter(|e| e.coalition.as_deref() == Some(c.id.as_str()));
            match self.meta.numeric {
                NumericMode::Float => {
                    let sum = members.fold(0.0f64, |acc, e| acc + e.value);
                    if sum.to_bits() != c.value.to_bits() {
                        return Err(Error::InvalidInput(format!(
                            "coalition {} total {} differs from member sum {}",
                            c.id, c.value, sum
                        )));
                    }
                }
                NumericMode::Exact => {
                    let parse = |s: &Option<String>| -> Result<BigRational> {
                        let s = s.as_deref().ok_or_else(|| Error::InvalidInput("missing exact value".into()))?;
                        BigRational::from_str(s).map_err(|e| Error::InvalidInput(format!("bad exact value {s:?}: {e}")))
                    };
                    let mut sum = BigRational::from_integer(0.into());
                    for e in members {
                        sum += parse(&e.exact)?;
                    }
                    if sum != parse(&c.exact)? {
                        return Err(Error::InvalidInput(format!(
                            "coalition {} total differs from member sum {sum}",
                            c.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Example values indexed like the dataset.
    pub fn values(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.value).collect()
    }

    /// Exact example values, when the report was computed in exact mode.
    pub fn exact_values(&self) -> Option<Vec<BigRational>> {
        self.examples
            .iter()
            .map(|e| e.exact.as_deref().and_then(|s| BigRational::from_str(s).ok()))
            .collect()
    }

    pub fn coalition_value(&self, id: &str) -> Option<f64> {
        self.coalitions.iter().find(|c| c.id == id).map(|c| c.value)
    }
}
