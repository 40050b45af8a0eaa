//! NEAT genomes: encoding, decoding to a feed-forward network, and the
//! variation operators used by the multi-objective selection loop.
//!
//! Genes are aligned across genomes by historical innovation numbers issued
//! from a shared [`InnovationRegistry`]. Identical structural additions made
//! within the same generation reuse the same number; the counter itself only
//! grows. There is no speciation here: front rank and crowding distance do
//! the diversity work, so genomes only need ids, genes, and weights.
//!
//! Networks are strictly feed-forward. The registry refuses any new
//! connection that would close a directed cycle in the full gene graph
//! (enabled or disabled), which makes every enabled subgraph acyclic by
//! construction, including after crossover re-enables an old gene.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Hidden,
    Output,
}

/// A node gene. Activation is fixed by kind: identity for inputs, tanh for
/// hidden nodes, logistic for outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: u32,
    pub kind: NodeKind,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGene {
    pub innovation: u64,
    pub from_node: u32,
    pub to_node: u32,
    pub weight: f64,
    pub enabled: bool,
}

/// A prescriptor genome. Nodes are kept sorted by id and connections by
/// innovation number so every iteration order is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub id: u64,
    pub nodes: Vec<NodeGene>,
    pub connections: Vec<ConnectionGene>,
}

impl Genome {
    pub fn input_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Input).count()
    }

    pub fn output_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Output).count()
    }

    pub fn node(&self, id: u32) -> Option<&NodeGene> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn has_pair(&self, from: u32, to: u32) -> bool {
        self.connections
            .iter()
            .any(|c| c.from_node == from && c.to_node == to)
    }

    /// True if adding `from -> to` would close a cycle in the full gene
    /// graph, disabled genes included.
    fn would_cycle(&self, from: u32, to: u32) -> bool {
        if from == to {
            return true;
        }
        // DFS from `to`; a path back to `from` means the new edge closes a loop.
        let mut stack = vec![to];
        let mut seen = vec![to];
        while let Some(node) = stack.pop() {
            for c in self.connections.iter().filter(|c| c.from_node == node) {
                if c.to_node == from {
                    return true;
                }
                if !seen.contains(&c.to_node) {
                    seen.push(c.to_node);
                    stack.push(c.to_node);
                }
            }
        }
        false
    }
}

/// Issues innovation numbers, hidden-node ids, and genome ids.
///
/// The caches are generation-scoped: [`InnovationRegistry::begin_generation`]
/// clears them so identical structural mutations within one generation share
/// numbers, while the counters themselves never move backwards.
#[derive(Debug, Clone)]
pub struct InnovationRegistry {
    num_inputs: usize,
    num_outputs: usize,
    next_innovation: u64,
    next_node_id: u32,
    next_genome_id: u64,
    conn_cache: HashMap<(u32, u32), u64>,
    split_cache: HashMap<u64, (u32, u64, u64)>,
}

impl InnovationRegistry {
    pub fn new(num_inputs: usize, num_outputs: usize) -> Self {
        Self {
            num_inputs,
            num_outputs,
            // The dense input->output template owns innovations 0..K*M.
            next_innovation: (num_inputs * num_outputs) as u64,
            next_node_id: (num_inputs + num_outputs) as u32,
            next_genome_id: 0,
            conn_cache: HashMap::new(),
            split_cache: HashMap::new(),
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn begin_generation(&mut self) {
        self.conn_cache.clear();
        self.split_cache.clear();
    }

    pub fn next_genome_id(&mut self) -> u64 {
        let id = self.next_genome_id;
        self.next_genome_id += 1;
        id
    }

    /// Innovation number for a new connection gene.
    pub fn connection_innovation(&mut self, from: u32, to: u32) -> u64 {
        if let Some(&innov) = self.conn_cache.get(&(from, to)) {
            return innov;
        }
        let innov = self.next_innovation;
        self.next_innovation += 1;
        self.conn_cache.insert((from, to), innov);
        innov
    }

    /// Node id and the two connection innovations for splitting a gene.
    pub fn split_innovations(&mut self, conn_innovation: u64, from: u32, to: u32) -> (u32, u64, u64) {
        if let Some(&entry) = self.split_cache.get(&conn_innovation) {
            return entry;
        }
        let node_id = self.next_node_id;
        self.next_node_id += 1;
        let in_innov = self.connection_innovation(from, node_id);
        let out_innov = self.connection_innovation(node_id, to);
        let entry = (node_id, in_innov, out_innov);
        self.split_cache.insert(conn_innovation, entry);
        entry
    }
}

/// Mutation probabilities and scales, the `[neat]` knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRates {
    /// Per-connection (and per-bias) chance of being mutated at all.
    pub weight_mutate_prob: f64,
    /// Stddev of the Gaussian perturbation step.
    pub weight_perturb_sigma: f64,
    /// Given a mutation, chance of full replacement by N(0, 1).
    pub weight_replace_prob: f64,
    pub add_connection_prob: f64,
    pub add_node_prob: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        Self {
            weight_mutate_prob: 0.8,
            weight_perturb_sigma: 0.1,
            weight_replace_prob: 0.1,
            add_connection_prob: 0.05,
            add_node_prob: 0.03,
        }
    }
}

impl MutationRates {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("neat.weight_mutate_prob", self.weight_mutate_prob),
            ("neat.weight_replace_prob", self.weight_replace_prob),
            ("neat.add_connection_prob", self.add_connection_prob),
            ("neat.add_node_prob", self.add_node_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.weight_perturb_sigma < 0.0 || self.weight_perturb_sigma.is_nan() {
            return Err(Error::Config(
                "neat.weight_perturb_sigma must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Fully connected input->output genome with N(0, 1) weights and biases.
/// Input nodes keep bias 0; identity inputs never read it.
pub fn initial_genome(
    rng: &mut ChaCha8Rng,
    num_inputs: usize,
    num_outputs: usize,
    registry: &mut InnovationRegistry,
) -> Genome {
    assert!(num_inputs >= 1 && num_outputs >= 1);
    let mut nodes = Vec::with_capacity(num_inputs + num_outputs);
    for i in 0..num_inputs {
        nodes.push(NodeGene {
            id: i as u32,
            kind: NodeKind::Input,
            bias: 0.0,
        });
    }
    for o in 0..num_outputs {
        nodes.push(NodeGene {
            id: (num_inputs + o) as u32,
            kind: NodeKind::Output,
            bias: rng.sample(StandardNormal),
        });
    }
    let mut connections = Vec::with_capacity(num_inputs * num_outputs);
    for i in 0..num_inputs {
        for o in 0..num_outputs {
            connections.push(ConnectionGene {
                innovation: (i * num_outputs + o) as u64,
                from_node: i as u32,
                to_node: (num_inputs + o) as u32,
                weight: rng.sample(StandardNormal),
                enabled: true,
            });
        }
    }
    Genome {
        id: registry.next_genome_id(),
        nodes,
        connections,
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Forward pass: identity inputs, tanh hidden nodes, logistic outputs.
/// Returns the M output activations in node-id order, each in [0, 1].
pub fn activate(genome: &Genome, obs: &[f64]) -> Result<Vec<f64>> {
    let num_inputs = genome.input_count();
    if obs.len() != num_inputs {
        return Err(Error::Wiring(format!(
            "genome {} expects {} inputs, got {}",
            genome.id,
            num_inputs,
            obs.len()
        )));
    }

    // Kahn's algorithm over enabled connections; doubles as the cycle check.
    let ids: Vec<u32> = genome.nodes.iter().map(|n| n.id).collect();
    let index_of: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = ids.len();
    let mut indegree = vec![0usize; n];
    let enabled: Vec<&ConnectionGene> = genome.connections.iter().filter(|c| c.enabled).collect();
    for c in &enabled {
        indegree[index_of[&c.to_node]] += 1;
    }
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    while let Some(i) = queue.pop() {
        order.push(i);
        for c in &enabled {
            if index_of[&c.from_node] == i {
                let j = index_of[&c.to_node];
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push(j);
                }
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidGenome(format!(
            "genome {} has a cycle among enabled connections",
            genome.id
        )));
    }

    let mut sums = vec![0.0f64; n];
    let mut values = vec![0.0f64; n];
    // Inputs are the first K node ids by construction; map by input order.
    let mut input_ids: Vec<u32> = genome
        .nodes
        .iter()
        .filter(|nd| nd.kind == NodeKind::Input)
        .map(|nd| nd.id)
        .collect();
    input_ids.sort_unstable();
    for i in order {
        let node = &genome.nodes[i];
        values[i] = match node.kind {
            NodeKind::Input => {
                let pos = input_ids.iter().position(|&id| id == node.id).unwrap();
                obs[pos]
            }
            NodeKind::Hidden => (sums[i] + node.bias).tanh(),
            NodeKind::Output => logistic(sums[i] + node.bias),
        };
        for c in &enabled {
            if c.from_node == node.id {
                sums[index_of[&c.to_node]] += c.weight * values[i];
            }
        }
    }

    let mut outputs: Vec<(u32, f64)> = genome
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, nd)| nd.kind == NodeKind::Output)
        .map(|(i, nd)| (nd.id, values[i]))
        .collect();
    outputs.sort_unstable_by_key(|(id, _)| *id);
    Ok(outputs.into_iter().map(|(_, v)| v).collect())
}

/// Apply weight/bias perturbation and the structural mutations, returning a
/// new genome with a fresh id. Mutations that cannot apply are skipped.
pub fn mutate(
    genome: &Genome,
    rates: &MutationRates,
    rng: &mut ChaCha8Rng,
    registry: &mut InnovationRegistry,
) -> Genome {
    let mut child = genome.clone();
    child.id = registry.next_genome_id();

    // Connection weights, in innovation order.
    for conn in child.connections.iter_mut() {
        if rates.weight_mutate_prob > 0.0 && rng.random_bool(rates.weight_mutate_prob) {
            if rng.random_bool(rates.weight_replace_prob) {
                conn.weight = rng.sample(StandardNormal);
            } else {
                let step: f64 = rng.sample(StandardNormal);
                conn.weight += rates.weight_perturb_sigma * step;
            }
        }
    }

    // Biases mirror the weight rule; input nodes stay at zero.
    for node in child.nodes.iter_mut() {
        if node.kind == NodeKind::Input {
            continue;
        }
        if rates.weight_mutate_prob > 0.0 && rng.random_bool(rates.weight_mutate_prob) {
            if rng.random_bool(rates.weight_replace_prob) {
                node.bias = rng.sample(StandardNormal);
            } else {
                let step: f64 = rng.sample(StandardNormal);
                node.bias += rates.weight_perturb_sigma * step;
            }
        }
    }

    if rates.add_connection_prob > 0.0 && rng.random_bool(rates.add_connection_prob) {
        add_connection(&mut child, rng, registry);
    }

    if rates.add_node_prob > 0.0 && rng.random_bool(rates.add_node_prob) {
        add_node(&mut child, rng, registry);
    }

    child
}

fn add_connection(genome: &mut Genome, rng: &mut ChaCha8Rng, registry: &mut InnovationRegistry) {
    let mut legal: Vec<(u32, u32)> = Vec::new();
    for from in &genome.nodes {
        if from.kind == NodeKind::Output {
            continue;
        }
        for to in &genome.nodes {
            if to.kind == NodeKind::Input || to.id == from.id {
                continue;
            }
            if genome.has_pair(from.id, to.id) || genome.would_cycle(from.id, to.id) {
                continue;
            }
            legal.push((from.id, to.id));
        }
    }
    if legal.is_empty() {
        return;
    }
    legal.sort_unstable();
    let (from, to) = legal[rng.random_range(0..legal.len())];
    let innovation = registry.connection_innovation(from, to);
    let weight: f64 = rng.sample(StandardNormal);
    genome.connections.push(ConnectionGene {
        innovation,
        from_node: from,
        to_node: to,
        weight,
        enabled: true,
    });
    genome.connections.sort_by_key(|c| c.innovation);
}

fn add_node(genome: &mut Genome, rng: &mut ChaCha8Rng, registry: &mut InnovationRegistry) {
    let enabled_idx: Vec<usize> = genome
        .connections
        .iter()
        .enumerate()
        .filter(|(_, c)| c.enabled)
        .map(|(i, _)| i)
        .collect();
    if enabled_idx.is_empty() {
        return;
    }
    let pick = enabled_idx[rng.random_range(0..enabled_idx.len())];
    let (old_innov, from, to, old_weight) = {
        let c = &genome.connections[pick];
        (c.innovation, c.from_node, c.to_node, c.weight)
    };
    let (node_id, in_innov, out_innov) = registry.split_innovations(old_innov, from, to);
    if genome.nodes.iter().any(|n| n.id == node_id) {
        return;
    }
    genome.connections[pick].enabled = false;
    genome.nodes.push(NodeGene {
        id: node_id,
        kind: NodeKind::Hidden,
        bias: 0.0,
    });
    genome.connections.push(ConnectionGene {
        innovation: in_innov,
        from_node: from,
        to_node: node_id,
        weight: 1.0,
        enabled: true,
    });
    genome.connections.push(ConnectionGene {
        innovation: out_innov,
        from_node: node_id,
        to_node: to,
        weight: old_weight,
        enabled: true,
    });
    genome.nodes.sort_by_key(|n| n.id);
    genome.connections.sort_by_key(|c| c.innovation);
}

/// What crossover needs to know about a parent: its genes plus the fitness
/// key selection already computed for it.
#[derive(Debug, Clone, Copy)]
pub struct Parent<'a> {
    pub genome: &'a Genome,
    pub rank: usize,
    pub crowding: f64,
}

/// NEAT crossover aligned by innovation number.
///
/// Matching genes take their weight from either parent uniformly; disjoint
/// and excess genes come from the fitter parent (lower rank, then larger
/// crowding, then a coin flip). A gene disabled in any parent that carries it
/// stays disabled in the child with probability 0.75.
pub fn crossover(
    a: Parent<'_>,
    b: Parent<'_>,
    rng: &mut ChaCha8Rng,
    registry: &mut InnovationRegistry,
) -> Result<Genome> {
    if a.genome.input_count() != b.genome.input_count()
        || a.genome.output_count() != b.genome.output_count()
    {
        return Err(Error::Wiring(format!(
            "crossover arity mismatch: genome {} is {}->{}, genome {} is {}->{}",
            a.genome.id,
            a.genome.input_count(),
            a.genome.output_count(),
            b.genome.id,
            b.genome.input_count(),
            b.genome.output_count()
        )));
    }

    let a_fitter = match a.rank.cmp(&b.rank) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            if a.crowding > b.crowding {
                true
            } else if a.crowding < b.crowding {
                false
            } else {
                rng.random_bool(0.5)
            }
        }
    };
    let (fit, other) = if a_fitter { (a, b) } else { (b, a) };

    let other_conns: HashMap<u64, &ConnectionGene> = other
        .genome
        .connections
        .iter()
        .map(|c| (c.innovation, c))
        .collect();

    let mut connections = Vec::with_capacity(fit.genome.connections.len());
    for gene in &fit.genome.connections {
        let mut child = gene.clone();
        let mut disabled_somewhere = !gene.enabled;
        if let Some(matching) = other_conns.get(&gene.innovation) {
            if rng.random_bool(0.5) {
                child.weight = matching.weight;
            }
            disabled_somewhere |= !matching.enabled;
        }
        child.enabled = if disabled_somewhere {
            !rng.random_bool(0.75)
        } else {
            true
        };
        connections.push(child);
    }

    let other_nodes: HashMap<u32, &NodeGene> =
        other.genome.nodes.iter().map(|n| (n.id, n)).collect();
    let mut nodes = Vec::with_capacity(fit.genome.nodes.len());
    for node in &fit.genome.nodes {
        let mut child = node.clone();
        if let Some(matching) = other_nodes.get(&node.id) {
            if rng.random_bool(0.5) {
                child.bias = matching.bias;
            }
        }
        nodes.push(child);
    }

    Ok(Genome {
        id: registry.next_genome_id(),
        nodes,
        connections,
    })
}
