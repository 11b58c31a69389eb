//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use datavalue::coalition::CoalitionStructure;
use datavalue::oracle::seeded_rng;
use datavalue::{Dataset, Example, FrequencyQuery, FrequencyValueFunction, KnnQuery, OutcomeValues};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const QUERY_LABEL: &str = "yes";
pub const OTHER_LABEL: &str = "no";

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed)
}

fn label(rng: &mut ChaCha8Rng) -> &'static str {
    if rng.random_bool(0.5) {
        QUERY_LABEL
    } else {
        OTHER_LABEL
    }
}

/// A money amount in quarter units, exactly representable in binary.
pub fn money(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-400i32..=400) as f64 / 4.0
}

/// Value table defined for every `(a, b)` with `a + b <= n`.
pub fn random_table(rng: &mut ChaCha8Rng, n: u64) -> FrequencyValueFunction {
    let mut entries = BTreeMap::new();
    for a in 0..=n {
        for b in 0..=n - a {
            entries.insert((a, b), money(rng));
        }
    }
    FrequencyValueFunction::table(entries, None).unwrap()
}

pub fn random_outcome(rng: &mut ChaCha8Rng) -> OutcomeValues {
    OutcomeValues::new(money(rng), money(rng), money(rng)).unwrap()
}

/// Frequency instance: `in_bin` examples in bin "q" plus `out_of_bin`
/// examples spread over two other bins.
pub fn frequency_dataset(rng: &mut ChaCha8Rng, in_bin: usize, out_of_bin: usize) -> Dataset {
    let mut examples = Vec::new();
    for i in 0..in_bin {
        examples.push(Example::binned(i as u64 + 1, "q", label(rng)));
    }
    for i in 0..out_of_bin {
        let bin = if rng.random_bool(0.5) { "r" } else { "s" };
        examples.push(Example::binned((in_bin + i) as u64 + 1, bin, label(rng)));
    }
    examples.shuffle(rng);
    Dataset::new(examples).unwrap()
}

pub fn frequency_query() -> FrequencyQuery {
    FrequencyQuery::new("q", QUERY_LABEL)
}

/// k-NN instance on distinct points in the unit square.
pub fn knn_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let mut seen = HashSet::new();
    let mut examples = Vec::new();
    while examples.len() < n {
        let p = vec![rng.random_range(0..1000) as f64 / 1000.0, rng.random_range(0..1000) as f64 / 1000.0];
        if seen.insert((p[0].to_bits(), p[1].to_bits())) {
            examples.push(Example::located(examples.len() as u64 + 1, p, label(rng)));
        }
    }
    Dataset::new(examples).unwrap()
}

pub fn knn_query(rng: &mut ChaCha8Rng) -> KnnQuery {
    KnnQuery::new(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], label(rng))
}

/// Random partition of the dataset into at most `max_coalitions` non-empty
/// coalitions, each of at most `max_size` members.
pub fn random_coalitions(
    rng: &mut ChaCha8Rng,
    dataset: &Dataset,
    max_coalitions: usize,
    max_size: usize,
) -> CoalitionStructure {
    let n = dataset.len();
    let min_m = n.div_ceil(max_size).max(1);
    let m = rng.random_range(min_m..=max_coalitions.min(n).max(min_m));
    loop {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut groups: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        // Seed each coalition with one member, then place the rest at random.
        for (c, &idx) in order.iter().take(m).enumerate() {
            groups.entry(format!("c{c}")).or_default().push(dataset.examples()[idx].id);
        }
        for &idx in &order[m..] {
            let c = rng.random_range(0..m);
            groups.entry(format!("c{c}")).or_default().push(dataset.examples()[idx].id);
        }
        if groups.values().all(|g| g.len() <= max_size) {
            return CoalitionStructure::new(dataset, groups).unwrap();
        }
    }
}
