//! Brute-force reference evaluators.
//!
//! [`exact_shapley`] and [`exact_owen`] average marginal contributions over
//! every admissible join order, in exact rational arithmetic. They are
//! exponential and guarded; their job is to be obviously correct.
//! [`mc_shapley`] samples join orders for instances beyond enumeration.

use std::time::Instant;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::CoalitionStructure;
use crate::combinatorics::{ExactRational, Scalar};
use crate::error::{Error, Result};
use crate::model::{
    check_k, knn_subset_value, rank_by_distance, Dataset, FrequencyQuery, FrequencyValueFunction, KnnQuery, Metric,
    OutcomeValues,
};
use crate::report::{assemble, Method, ReportInput, ReportOptions, ValueReport};

/// Largest player count whose subset values are tabulated, override or not.
pub const TABULATION_LIMIT: usize = 20;

/// A cooperative game: `players` participants and a value for every subset.
pub struct CharacteristicGame<'a> {
    players: usize,
    value_of: Box<dyn Fn(&[usize]) -> Result<ExactRational> + Send + Sync + 'a>,
}

impl std::fmt::Debug for CharacteristicGame<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CharacteristicGame").field("players", &self.players).finish_non_exhaustive()
    }
}

impl<'a> CharacteristicGame<'a> {
    /// Game whose value of a subset (ascending player indices) is `value_of`.
    pub fn new(
        players: usize,
        value_of: impl Fn(&[usize]) -> Result<ExactRational> + Send + Sync + 'a,
    ) -> Self {
        CharacteristicGame { players, value_of: Box::new(value_of) }
    }

    /// Game given by a table indexed by subset bit mask (bit `p` = player `p`).
    pub fn from_table(players: usize, table: Vec<ExactRational>) -> Result<Self> {
        if players > TABULATION_LIMIT || table.len() != 1usize << players {
            return Err(Error::InvalidInput(format!(
                "a table for {players} players needs {} entries (got {})",
                1u64 << players.min(63),
                table.len()
            )));
        }
        Ok(Self::new(players, move |subset: &[usize]| {
            let mask = subset.iter().fold(0usize, |m, &p| m | 1 << p);
            Ok(table[mask].clone())
        }))
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn value(&self, subset: &[usize]) -> Result<ExactRational> {
        (self.value_of)(subset)
    }

    /// Values of all `2^n` subsets, indexed by bit mask.
    fn tabulate(&self) -> Result<Vec<ExactRational>> {
        if self.players > TABULATION_LIMIT {
            return Err(Error::GuardExceeded(format!(
                "{} players cannot be tabulated (limit {TABULATION_LIMIT})",
                self.players
            )));
        }
        let mut subset = Vec::with_capacity(self.players);
        (0..1usize << self.players)
            .map(|mask| {
                subset.clear();
                subset.extend((0..self.players).filter(|p| mask >> p & 1 == 1));
                self.value(&subset)
            })
            .collect()
    }
}

/// Size limits for the enumerating evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Guard {
    pub max_players: usize,
    pub max_coalitions: usize,
    pub max_coalition_size: usize,
}

impl Default for Guard {
    fn default() -> Self {
        Guard { max_players: 10, max_coalitions: 5, max_coalition_size: 5 }
    }
}

impl Guard {
    /// No limit other than [`TABULATION_LIMIT`].
    pub fn overridden() -> Self {
        Guard { max_players: usize::MAX, max_coalitions: usize::MAX, max_coalition_size: usize::MAX }
    }
}

/// Calls `visit` with every permutation of `items` (Heap's algorithm).
fn for_each_permutation(items: &mut [usize], mut visit: impl FnMut(&[usize])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Turns "how many orders put exactly `mask` before player `p`" counts into
/// average marginal contributions.
fn average_marginals(players: usize, counts: &[u64], orders: u64, table: &[ExactRational]) -> Vec<ExactRational> {
    let mut sums = vec![ExactRational::zero(); players];
    for (slot, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let (mask, p) = (slot / players, slot % players);
        let marginal = &table[mask | 1 << p] - &table[mask];
        sums[p] += marginal * ExactRational::from_integer(count.into());
    }
    let norm = ExactRational::from_integer(orders.into());
    sums.into_iter().map(|s| s / norm.clone()).collect()
}

/// Shapley values of all players: the mean marginal contribution over all
/// `n!` join orders.
pub fn exact_shapley_all(game: &CharacteristicGame<'_>, guard: Guard) -> Result<Vec<ExactRational>> {
    let n = game.players();
    if n > guard.max_players {
        return Err(Error::GuardExceeded(format!(
            "exact Shapley enumeration over {n} players exceeds the limit of {} without an override",
            guard.max_players
        )));
    }
    let table = game.tabulate()?;
    let mut counts = vec![0u64; (1usize << n) * n.max(1)];
    let mut orders = 0u64;
    let mut items: Vec<usize> = (0..n).collect();
    for_each_permutation(&mut items, |perm| {
        orders += 1;
        let mut mask = 0usize;
        for &p in perm {
            counts[mask * n + p] += 1;
            mask |= 1 << p;
        }
    });
    Ok(average_marginals(n, &counts, orders, &table))
}

/// Shapley value of one player.
pub fn exact_shapley(game: &CharacteristicGame<'_>, player: usize, guard: Guard) -> Result<ExactRational> {
    check_player(game, player)?;
    Ok(exact_shapley_all(game, guard)?.swap_remove(player))
}

fn check_player(game: &CharacteristicGame<'_>, player: usize) -> Result<()> {
    if player >= game.players() {
        return Err(Error::InvalidInput(format!("player {player} out of range ({} players)", game.players())));
    }
    Ok(())
}

fn check_partition(players: usize, coalitions: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; players];
    for c in coalitions {
        if c.is_empty() {
            return Err(Error::InvalidCoalitions("empty coalition".into()));
        }
        for &p in c {
            if p >= players || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidCoalitions(format!("player {p} is out of range or repeated")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidCoalitions("coalitions do not cover every player".into()));
    }
    Ok(())
}

/// Owen values of all players: for each player, the mean marginal
/// contribution over all orders of the coalitions and all orders of the
/// members of the player's own coalition.
pub fn exact_owen_all(
    game: &CharacteristicGame<'_>,
    coalitions: &[Vec<usize>],
    guard: Guard,
) -> Result<Vec<ExactRational>> {
    let n = game.players();
    check_partition(n, coalitions)?;
    let m = coalitions.len();
    let largest = coalitions.iter().map(Vec::len).max().unwrap_or(0);
    if m > guard.max_coalitions || largest > guard.max_coalition_size {
        return Err(Error::GuardExceeded(format!(
            "exact Owen enumeration over {m} coalitions (largest {largest}) exceeds the limit of {} coalitions \
             of at most {} without an override",
            guard.max_coalitions, guard.max_coalition_size
        )));
    }
    let table = game.tabulate()?;
    let coalition_masks: Vec<usize> =
        coalitions.iter().map(|c| c.iter().fold(0usize, |acc, &p| acc | 1 << p)).collect();

    let mut values = vec![ExactRational::zero(); n];
    for (target, members) in coalitions.iter().enumerate() {
        let mut counts = vec![0u64; (1usize << n) * n.max(1)];
        let mut orders = 0u64;
        let mut order: Vec<usize> = (0..m).collect();
        for_each_permutation(&mut order, |coalition_order| {
            let before = coalition_order
                .iter()
                .take_while(|&&c| c != target)
                .fold(0usize, |acc, &c| acc | coalition_masks[c]);
            let mut inner = members.clone();
            for_each_permutation(&mut inner, |member_order| {
                orders += 1;
                let mut mask = before;
                for &p in member_order {
                    counts[mask * n + p] += 1;
                    mask |= 1 << p;
                }
            });
        });
        let averaged = average_marginals(n, &counts, orders, &table);
        for &p in members {
            values[p] = averaged[p].clone();
        }
    }
    Ok(values)
}

/// Owen value of one player.
pub fn exact_owen(
    game: &CharacteristicGame<'_>,
    coalitions: &[Vec<usize>],
    player: usize,
    guard: Guard,
) -> Result<ExactRational> {
    check_player(game, player)?;
    Ok(exact_owen_all(game, coalitions, guard)?.swap_remove(player))
}

/// Monte-Carlo Shapley estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Sample standard deviation over `sqrt(samples)`.
    pub standard_error: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Uniform random permutation of `0..n`, built by inserting each element at a
/// uniformly chosen position among those available.
pub fn random_permutation_by_insertion<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm = Vec::with_capacity(n);
    for e in 0..n {
        let at = rng.random_range(0..=e);
        perm.insert(at, e);
    }
    perm
}

/// The generator behind every seeded oracle routine.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Estimates one player's Shapley value from `samples` random join orders.
pub fn mc_shapley(game: &CharacteristicGame<'_>, player: usize, samples: u64, seed: u64) -> Result<McEstimate> {
    check_player(game, player)?;
    if samples < 2 {
        return Err(Error::InvalidInput(format!("Monte-Carlo estimation needs at least 2 samples (got {samples})")));
    }
    let mut rng = seeded_rng(seed);
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    let mut prefix = Vec::with_capacity(game.players());
    for t in 1..=samples {
        let perm = random_permutation_by_insertion(game.players(), &mut rng);
        prefix.clear();
        prefix.extend(perm.iter().take_while(|&&p| p != player).copied());
        prefix.sort_unstable();
        let without = game.value(&prefix)?;
        let at = prefix.partition_point(|&p| p < player);
        prefix.insert(at, player);
        let with = game.value(&prefix)?;
        let x = Scalar::to_f64(&(with - without));
        // Welford's running mean and sum of squared deviations.
        let d = x - mean;
        mean += d / t as f64;
        m2 += d * (x - mean);
    }
    let variance = m2 / (samples - 1) as f64;
    Ok(McEstimate { estimate: mean, standard_error: (variance / samples as f64).sqrt(), samples, seed })
}

/// The frequency game summed over `queries`: players are all dataset
/// examples; a subset is worth the value function at its in-bin counts of
/// matching and mismatching examples.
pub fn frequency_game<'a>(
    dataset: &'a Dataset,
    queries: &'a [FrequencyQuery],
    vf: &'a FrequencyValueFunction,
) -> Result<CharacteristicGame<'a>> {
    dataset.require_bins()?;
    for q in queries {
        dataset.check_query_label(&q.label)?;
        q.value_override.as_ref().unwrap_or(vf).validate()?;
    }
    Ok(CharacteristicGame::new(dataset.len(), move |subset: &[usize]| {
        let mut total = ExactRational::zero();
        for q in queries {
            let (mut a, mut b) = (0, 0);
            for &p in subset {
                let e = &dataset.examples()[p];
                if e.bin.as_deref() == Some(q.bin.as_str()) {
                    if e.label == q.label {
                        a += 1;
                    } else {
                        b += 1;
                    }
                }
            }
            total += ExactRational::from_money(q.value_override.as_ref().unwrap_or(vf).value(a, b)?);
        }
        Ok(total)
    }))
}

/// The k-NN game summed over `queries`: a subset is worth the classifier
/// trained on it.
pub fn knn_game<'a>(
    dataset: &'a Dataset,
    queries: &[KnnQuery],
    k: usize,
    outcome: OutcomeValues,
    metric: &dyn Metric,
) -> Result<CharacteristicGame<'a>> {
    check_k(k)?;
    let rankings = queries
        .iter()
        .map(|q| {
            dataset.check_query_label(&q.label)?;
            rank_by_distance(dataset, &q.features, &q.label, metric)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CharacteristicGame::new(dataset.len(), move |subset: &[usize]| {
        let mut total = ExactRational::zero();
        for r in &rankings {
            total += ExactRational::from_money(knn_subset_value(subset, r, k, &outcome)?);
        }
        Ok(total)
    }))
}

/// Which reference evaluator an oracle report runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    ExactShapley,
    /// Requires a coalition structure.
    ExactOwen,
    /// Every player is estimated from the same seeded stream of join orders.
    McShapley { samples: u64, seed: u64 },
}

impl OracleMethod {
    pub fn name(&self) -> &'static str {
        match self {
            OracleMethod::ExactShapley => "exact-shapley",
            OracleMethod::ExactOwen => "exact-owen",
            OracleMethod::McShapley { .. } => "mc-shapley",
        }
    }
}

/// Oracle values for a dataset, in the same report shape as the fast
/// evaluators. `games` holds one game per query; exact methods evaluate each
/// query separately, the Monte-Carlo method samples their sum.
pub fn oracle_report(
    dataset: &Dataset,
    games: &[CharacteristicGame<'_>],
    coalitions: Option<&CoalitionStructure>,
    method: OracleMethod,
    guard: Guard,
    options: ReportOptions,
    k: Option<usize>,
) -> Result<ValueReport> {
    let started = Instant::now();
    let partition = coalitions.map(CoalitionStructure::partition);
    let detail = Some(method.name().to_string());
    match method {
        OracleMethod::ExactShapley | OracleMethod::ExactOwen => {
            let per_query = games
                .iter()
                .map(|g| match (&method, &partition) {
                    (OracleMethod::ExactOwen, Some(p)) => exact_owen_all(g, p, guard),
                    (OracleMethod::ExactOwen, None) => {
                        Err(Error::InvalidCoalitions("exact Owen values need a coalition structure".into()))
                    }
                    _ => exact_shapley_all(g, guard),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(assemble(ReportInput {
                method: Method::Oracle,
                k,
                detail,
                dataset,
                coalitions,
                per_query,
                keep_per_query: options.per_query,
                started,
            }))
        }
        OracleMethod::McShapley { samples, seed } => {
            let players = dataset.len();
            let total = CharacteristicGame::new(players, |subset: &[usize]| {
                games.iter().try_fold(ExactRational::zero(), |acc, g| Ok(acc + g.value(subset)?))
            });
            let estimates = (0..players)
                .into_par_iter()
                .map(|p| mc_shapley(&total, p, samples, seed))
                .collect::<Result<Vec<_>>>()?;
            let mut report = assemble(ReportInput {
                method: Method::Oracle,
                k,
                detail,
                dataset,
                coalitions,
                per_query: vec![estimates.iter().map(|e| e.estimate).collect::<Vec<f64>>()],
                keep_per_query: false,
                started,
            });
            report.meta.queries = games.len();
            for (row, e) in report.examples.iter_mut().zip(&estimates) {
                row.standard_error = Some(e.standard_error);
            }
            Ok(report)
        }
    }
}
