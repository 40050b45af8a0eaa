//! NSGA-II selection machinery: fast non-dominated sorting, crowding
//! distance, binary tournaments, and elitist merge-and-truncate replacement.
//!
//! Both objectives are minimized. Tournament ties break on rank, then
//! crowding, then a coin flip from the caller's stream, so a seeded run is
//! fully reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neat::{self, Genome, InnovationRegistry, MutationRates, Parent};
use crate::reward::ObjectiveVector;

/// Where an individual's current objective values came from: real
/// environment rollouts or the learned surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSource {
    Environment,
    Surrogate,
}

/// A genome together with its evaluated objectives and selection state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub objectives: ObjectiveVector,
    pub objective_source: ObjectiveSource,
    /// Non-domination front index, 0 = best. Valid after sorting.
    pub rank: usize,
    /// Crowding distance within the front. Valid after sorting. Boundary
    /// individuals carry +infinity, which JSON renders as null.
    #[serde(with = "crowding_codec")]
    pub crowding: f64,
}

/// JSON has no infinity literal: serde_json writes non-finite floats as
/// null, so read null back as +infinity.
mod crowding_codec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_some(value)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Individual {
    pub fn new(genome: Genome, objectives: ObjectiveVector, source: ObjectiveSource) -> Self {
        Self {
            genome,
            objectives,
            objective_source: source,
            rank: usize::MAX,
            crowding: 0.0,
        }
    }
}

/// Pareto dominance for minimization over same-arity vectors.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Wiring(format!(
            "dominance arity mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("dominance needs finite objectives".into()));
    }
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b.iter()) {
        if x > y {
            return Ok(false);
        }
        if x < y {
            strictly_better = true;
        }
    }
    Ok(strictly_better)
}

fn dominates_obj(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    (a.violation <= b.violation && a.cost <= b.cost)
        && (a.violation < b.violation || a.cost < b.cost)
}

/// Deb's fast non-dominated sort. Returns the fronts as index lists and
/// writes each individual's rank.
pub fn fast_nondominated_sort(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates_obj(&pop[i].objectives, &pop[j].objectives) {
                dominated[i].push(j);
                domination_count[j] += 1;
            } else if dominates_obj(&pop[j].objectives, &pop[i].objectives) {
                dominated[j].push(i);
                domination_count[i] += 1;
            }
        }
    }

    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    let mut rank = 0;
    while !current.is_empty() {
        for &i in &current {
            pop[i].rank = rank;
        }
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
        rank += 1;
    }
    fronts
}

/// Crowding distances for one front of objective pairs.
///
/// Per objective the sorted extremes get +infinity; interior points sum
/// neighbour gaps normalized by the objective range. A degenerate objective
/// (max == min) adds nothing.
pub fn crowding_distance(objectives: &[[f64; 2]]) -> Vec<f64> {
    let n = objectives.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut distance = vec![0.0f64; n];
    for dim in [0usize, 1] {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objectives[a][dim].partial_cmp(&objectives[b][dim]).unwrap());
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = objectives[order[n - 1]][dim] - objectives[order[0]][dim];
        if range > 0.0 {
            for w in 1..(n - 1) {
                let gap = objectives[order[w + 1]][dim] - objectives[order[w - 1]][dim];
                distance[order[w]] += gap / range;
            }
        }
    }
    distance
}

/// Assign crowding to every individual of a front (by population index).
pub fn assign_crowding(pop: &mut [Individual], front: &[usize]) {
    let objs: Vec<[f64; 2]> = front.iter().map(|&i| pop[i].objectives.as_array()).collect();
    let dist = crowding_distance(&objs);
    for (&i, d) in front.iter().zip(dist) {
        pop[i].crowding = d;
    }
}

/// Sort the whole population in place: ranks plus per-front crowding.
pub fn rank_population(pop: &mut [Individual]) {
    let fronts = fast_nondominated_sort(pop);
    for front in &fronts {
        assign_crowding(pop, front);
    }
}

/// Population indices in the total order (rank asc, crowding desc, id asc)
/// used for elite selection and top-N reporting.
pub fn selection_order(pop: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| {
        pop[a]
            .rank
            .cmp(&pop[b].rank)
            .then_with(|| {
                pop[b]
                    .crowding
                    .partial_cmp(&pop[a].crowding)
                    .expect("crowding is never NaN")
            })
            .then_with(|| pop[a].genome.id.cmp(&pop[b].genome.id))
    });
    order
}

/// Binary tournament by (rank asc, crowding desc, coin flip).
fn tournament(pop: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let i = rng.random_range(0..pop.len());
    let j = rng.random_range(0..pop.len());
    if i == j {
        return i;
    }
    match pop[i].rank.cmp(&pop[j].rank) {
        std::cmp::Ordering::Less => i,
        std::cmp::Ordering::Greater => j,
        std::cmp::Ordering::Equal => {
            if pop[i].crowding > pop[j].crowding {
                i
            } else if pop[i].crowding < pop[j].crowding {
                j
            } else if rng.random_bool(0.5) {
                i
            } else {
                j
            }
        }
    }
}

/// Variation knobs for one generation of offspring.
#[derive(Debug, Clone)]
pub struct Variation<'a> {
    pub rates: &'a MutationRates,
    /// Chance of sexual reproduction; otherwise the first tournament winner
    /// is cloned before mutation.
    pub crossover_prob: f64,
}

/// Produce the elitist next generation.
///
/// `pop` must already be ranked. Offspring are bred by binary tournaments,
/// crossover, and mutation, evaluated with `evaluator`, then parents and
/// offspring are merged and fronts fill the next population; the overflowing
/// front is truncated by descending crowding with a stable sort.
pub fn next_generation(
    pop: &[Individual],
    rng: &mut ChaCha8Rng,
    registry: &mut InnovationRegistry,
    variation: &Variation<'_>,
    evaluator: &mut dyn FnMut(&Genome) -> Result<ObjectiveVector>,
    source: ObjectiveSource,
) -> Result<Vec<Individual>> {
    let n = pop.len();
    debug_assert!(pop.iter().all(|ind| ind.rank != usize::MAX));
    registry.begin_generation();

    let mut offspring = Vec::with_capacity(n);
    for _ in 0..n {
        let first = tournament(pop, rng);
        let second = tournament(pop, rng);
        let bred = if variation.crossover_prob > 0.0 && rng.random_bool(variation.crossover_prob) {
            neat::crossover(
                Parent {
                    genome: &pop[first].genome,
                    rank: pop[first].rank,
                    crowding: pop[first].crowding,
                },
                Parent {
                    genome: &pop[second].genome,
                    rank: pop[second].rank,
                    crowding: pop[second].crowding,
                },
                rng,
                registry,
            )?
        } else {
            pop[first].genome.clone()
        };
        let child = neat::mutate(&bred, variation.rates, rng, registry);
        let objectives = evaluator(&child).map_err(|e| Error::Evaluation {
            genome_id: child.id,
            source: Box::new(e),
        })?;
        offspring.push(Individual::new(child, objectives, source));
    }

    let mut merged: Vec<Individual> = pop.to_vec();
    merged.append(&mut offspring);

    let fronts = fast_nondominated_sort(&mut merged);
    let mut selected_idx: Vec<usize> = Vec::with_capacity(n);
    for front in &fronts {
        assign_crowding(&mut merged, front);
        if selected_idx.len() + front.len() <= n {
            selected_idx.extend_from_slice(front);
        } else {
            let mut rest: Vec<usize> = front.clone();
            rest.sort_by(|&a, &b| {
                merged[b]
                    .crowding
                    .partial_cmp(&merged[a].crowding)
                    .unwrap()
            });
            rest.truncate(n - selected_idx.len());
            selected_idx.extend(rest);
        }
        if selected_idx.len() == n {
            break;
        }
    }

    let mut next: Vec<Individual> = {
        let mut keep: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
        selected_idx
            .into_iter()
            .map(|i| keep[i].take().expect("selection indices are unique"))
            .collect()
    };
    rank_population(&mut next);
    Ok(next)
}

/// Per-generation progress numbers for the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub front_sizes: Vec<usize>,
    pub violation_min: f64,
    pub violation_mean: f64,
    pub violation_max: f64,
    pub cost_min: f64,
    pub cost_mean: f64,
    pub cost_max: f64,
}

pub fn generation_stats(pop: &[Individual]) -> GenerationStats {
    let max_rank = pop.iter().map(|i| i.rank).max().unwrap_or(0);
    let mut front_sizes = vec![0usize; max_rank + 1];
    for ind in pop {
        front_sizes[ind.rank] += 1;
    }
    let n = pop.len().max(1) as f64;
    let v: Vec<f64> = pop.iter().map(|i| i.objectives.violation).collect();
    let c: Vec<f64> = pop.iter().map(|i| i.objectives.cost).collect();
    let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GenerationStats {
        front_sizes,
        violation_min: min(&v),
        violation_mean: v.iter().sum::<f64>() / n,
        violation_max: max(&v),
        cost_min: min(&c),
        cost_mean: c.iter().sum::<f64>() / n,
        cost_max: max(&c),
    }
}
