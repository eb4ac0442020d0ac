//! Community detection by two-level map-equation minimization, plus
//! weighted modularity scoring and partition comparison.
//!
//! The random walk is weight-proportional on the undirected graph with
//! uniform teleportation τ. Teleportation shapes the stationary visit
//! rates but is unrecorded: module exit probabilities count only
//! link-following flow, so codelengths are not dominated by teleport
//! noise and disconnected components stay separable.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::CoGraph;
use crate::seeds;

pub const DEFAULT_TAU: f64 = 0.15;
pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Moves must beat this margin to count as strictly improving; guards
/// against float noise cycling.
const MOVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum CommunityError {
    EmptyGraph,
    /// Power iteration failed to reach `tol` within `max_iter` sweeps.
    NotConverged { iterations: usize, residual: f64 },
    /// Partition does not cover every node of the graph.
    PartitionMismatch { nodes: usize, assigned: usize },
}

impl fmt::Display for CommunityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommunityError::EmptyGraph => f.write_str("graph has no nodes"),
            CommunityError::NotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "power iteration did not converge after {iterations} iterations (residual {residual:e})"
            ),
            CommunityError::PartitionMismatch { nodes, assigned } => write!(
                f,
                "partition covers {assigned} nodes but graph has {nodes}"
            ),
        }
    }
}

/// Assignment of every node to one community, labels dense from 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    num_communities: usize,
}

impl Partition {
    /// Normalize arbitrary labels to dense 0-based labels in order of
    /// first appearance, making equal partitions compare equal.
    pub fn from_labels(labels: &[usize]) -> Partition {
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        let mut assignment = Vec::with_capacity(labels.len());
        for &label in labels {
            let next = remap.len();
            let dense = *remap.entry(label).or_insert(next);
            assignment.push(dense);
        }
        Partition {
            assignment,
            num_communities: remap.len(),
        }
    }

    pub fn singletons(n: usize) -> Partition {
        Partition {
            assignment: (0..n).collect(),
            num_communities: n,
        }
    }

    pub fn one_community(n: usize) -> Partition {
        Partition {
            assignment: alloc::vec![0; n],
            num_communities: if n == 0 { 0 } else { 1 },
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Stationary visit probabilities of the teleporting walk.
#[derive(Debug, Clone)]
pub struct VisitRates {
    pub rates: Vec<f64>,
    pub tau: f64,
    pub iterations: usize,
}

/// Power-iterate the weight-proportional walk with uniform teleportation
/// until successive iterates differ by less than `tol` in L1.
///
/// A half-lazy step (average of the iterate and its image) is used so
/// periodic structures such as bipartite components still converge; the
/// fixed point is unchanged.
pub fn stationary_visit_rates(
    g: &CoGraph,
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<VisitRates, CommunityError> {
    let n = g.node_count();
    if n == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    let uniform = 1.0 / n as f64;
    let mut x = alloc::vec![uniform; n];
    let mut next = alloc::vec![0.0; n];
    let mut residual = f64::INFINITY;

    for iteration in 1..=max_iter {
        // next = tau/N + (1 - tau) * P^T x, dangling mass spread uniformly.
        let mut dangling = 0.0;
        for i in 0..n {
            if g.strength(i) == 0.0 {
                dangling += x[i];
            }
        }
        let base = tau * uniform + (1.0 - tau) * dangling * uniform;
        for slot in next.iter_mut() {
            *slot = base;
        }
        for i in 0..n {
            let s = g.strength(i);
            if s == 0.0 {
                continue;
            }
            let outflow = (1.0 - tau) * x[i] / s;
            for &(j, w) in g.neighbors(i) {
                next[j] += outflow * w;
            }
        }
        // Half-lazy averaging.
        residual = 0.0;
        for i in 0..n {
            let lazy = 0.5 * (x[i] + next[i]);
            residual += libm::fabs(lazy - x[i]);
            x[i] = lazy;
        }
        if residual < tol {
            let sum: f64 = x.iter().sum();
            for v in x.iter_mut() {
                *v /= sum;
            }
            return Ok(VisitRates {
                rates: x,
                tau,
                iterations: iteration,
            });
        }
    }
    Err(CommunityError::NotConverged {
        iterations: max_iter,
        residual,
    })
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * libm::log2(p)
    } else {
        0.0
    }
}

/// Link-following flow network: node visit rates and directed per-edge
/// flows F_ij = p_i (1-τ) w_ij / s_i. Exit probabilities and the map
/// equation are computed entirely from these flows.
struct FlowNetwork {
    /// Visit rate mass per node (sums of original rates after aggregation).
    node_flow: Vec<f64>,
    /// Per node: (neighbor, out_flow to neighbor, in_flow from neighbor).
    links: Vec<Vec<(usize, f64, f64)>>,
}

impl FlowNetwork {
    fn from_graph(g: &CoGraph, rates: &VisitRates) -> FlowNetwork {
        let n = g.node_count();
        let scale = 1.0 - rates.tau;
        let mut links = Vec::with_capacity(n);
        for i in 0..n {
            let s = g.strength(i);
            let list: Vec<(usize, f64, f64)> = g
                .neighbors(i)
                .iter()
                .map(|&(j, w)| {
                    let out = if s > 0.0 {
                        rates.rates[i] * scale * w / s
                    } else {
                        0.0
                    };
                    let sj = g.strength(j);
                    let inc = if sj > 0.0 {
                        rates.rates[j] * scale * w / sj
                    } else {
                        0.0
                    };
                    (j, out, inc)
                })
                .collect();
            links.push(list);
        }
        FlowNetwork {
            node_flow: rates.rates.clone(),
            links,
        }
    }

    fn len(&self) -> usize {
        self.node_flow.len()
    }

    /// Collapse modules into single nodes, dropping intra-module flow.
    fn aggregate(&self, assignment: &[usize], num_modules: usize) -> FlowNetwork {
        let mut node_flow = alloc::vec![0.0; num_modules];
        for (i, &m) in assignment.iter().enumerate() {
            node_flow[m] += self.node_flow[i];
        }
        let mut out: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, list) in self.links.iter().enumerate() {
            let mi = assignment[i];
            for &(j, f_out, _) in list {
                let mj = assignment[j];
                if mi != mj {
                    *out.entry((mi, mj)).or_insert(0.0) += f_out;
                }
            }
        }
        let mut links = alloc::vec![Vec::new(); num_modules];
        for (&(a, b), &f) in &out {
            let back = out.get(&(b, a)).copied().unwrap_or(0.0);
            links[a].push((b, f, back));
        }
        FlowNetwork { node_flow, links }
    }
}

/// Two-level map-equation codelength in bits:
/// L(M) = q H(Q) + Σ_m p_m H(P_m), exit probabilities from link flow.
pub fn map_equation(
    g: &CoGraph,
    rates: &VisitRates,
    partition: &Partition,
) -> Result<f64, CommunityError> {
    if partition.len() != g.node_count() || rates.rates.len() != g.node_count() {
        return Err(CommunityError::PartitionMismatch {
            nodes: g.node_count(),
            assigned: partition.len(),
        });
    }
    let flow = FlowNetwork::from_graph(g, rates);
    Ok(codelength_direct(
        &flow,
        partition.assignment(),
        partition.num_communities(),
    ))
}

/// Term-by-term evaluation of the map equation from module aggregates.
fn codelength_direct(flow: &FlowNetwork, assignment: &[usize], num_modules: usize) -> f64 {
    let mut module_q = alloc::vec![0.0; num_modules];
    let mut module_flow = alloc::vec![0.0; num_modules];
    for (i, &m) in assignment.iter().enumerate() {
        module_flow[m] += flow.node_flow[i];
        for &(j, f_out, _) in &flow.links[i] {
            if assignment[j] != m {
                module_q[m] += f_out;
            }
        }
    }
    let q: f64 = module_q.iter().sum();

    // Index codebook: q * H(Q).
    let mut codelength = 0.0;
    if q > 0.0 {
        for &qm in &module_q {
            if qm > 0.0 {
                codelength += qm * libm::log2(q / qm);
            }
        }
    }
    // Module codebooks: p_m * H(P_m) over {exit, member visit rates}.
    for m in 0..num_modules {
        let pm = module_flow[m] + module_q[m];
        if pm <= 0.0 {
            continue;
        }
        if module_q[m] > 0.0 {
            codelength += module_q[m] * libm::log2(pm / module_q[m]);
        }
        for (i, &mi) in assignment.iter().enumerate() {
            if mi == m && flow.node_flow[i] > 0.0 {
                codelength += flow.node_flow[i] * libm::log2(pm / flow.node_flow[i]);
            }
        }
    }
    codelength
}

/// Greedy map-equation minimizer over one flow network. Keeps module
/// aggregates and the expanded-form codelength incrementally:
/// L = plogp(q) - 2 Σ plogp(q_m) + Σ plogp(p_m) - Σ plogp(p_i).
struct Optimizer<'a> {
    flow: &'a FlowNetwork,
    module_of: Vec<usize>,
    module_q: Vec<f64>,
    module_flow: Vec<f64>,
    module_size: Vec<usize>,
    q_total: f64,
    /// -Σ plogp(p_i) over the nodes of this level.
    node_term: f64,
    /// Largest |incremental - recomputed| codelength seen, when verifying.
    verify: bool,
    max_delta_error: f64,
}

impl<'a> Optimizer<'a> {
    fn new(flow: &'a FlowNetwork, verify: bool) -> Optimizer<'a> {
        let n = flow.len();
        let module_of: Vec<usize> = (0..n).collect();
        let mut module_q = alloc::vec![0.0; n];
        for i in 0..n {
            module_q[i] = flow.links[i].iter().map(|&(_, f_out, _)| f_out).sum();
        }
        let module_flow = flow.node_flow.clone();
        let q_total: f64 = module_q.iter().sum();
        let node_term: f64 = -flow.node_flow.iter().map(|&p| plogp(p)).sum::<f64>();
        Optimizer {
            flow,
            module_of,
            module_q,
            module_flow,
            module_size: alloc::vec![1; n],
            q_total,
            node_term,
            verify,
            max_delta_error: 0.0,
        }
    }

    fn codelength(&self) -> f64 {
        let mut sum_plogp_q = 0.0;
        let mut sum_plogp_p = 0.0;
        for m in 0..self.module_q.len() {
            sum_plogp_q += plogp(self.module_q[m]);
            sum_plogp_p += plogp(self.module_flow[m] + self.module_q[m]);
        }
        plogp(self.q_total) - 2.0 * sum_plogp_q + sum_plogp_p + self.node_term
    }

    /// Codelength delta for moving `node` from its module to `target`.
    fn move_delta(&self, node: usize, target: usize) -> f64 {
        let source = self.module_of[node];
        debug_assert!(source != target);
        let exit_n: f64 = self.flow.links[node]
            .iter()
            .map(|&(_, f_out, _)| f_out)
            .sum();
        let mut out_src = 0.0;
        let mut in_src = 0.0;
        let mut out_tgt = 0.0;
        let mut in_tgt = 0.0;
        for &(j, f_out, f_in) in &self.flow.links[node] {
            let mj = self.module_of[j];
            if mj == source {
                out_src += f_out;
                in_src += f_in;
            } else if mj == target {
                out_tgt += f_out;
                in_tgt += f_in;
            }
        }
        let p_n = self.flow.node_flow[node];
        let q_src = self.module_q[source];
        let q_tgt = self.module_q[target];
        let q_src_new = q_src - (exit_n - out_src) + in_src;
        let q_tgt_new = q_tgt + (exit_n - out_tgt) - in_tgt;
        let q_new = self.q_total - q_src - q_tgt + q_src_new + q_tgt_new;

        let p_src = self.module_flow[source] + q_src;
        let p_tgt = self.module_flow[target] + q_tgt;
        let p_src_new = self.module_flow[source] - p_n + q_src_new;
        let p_tgt_new = self.module_flow[target] + p_n + q_tgt_new;

        plogp(q_new) - plogp(self.q_total)
            - 2.0 * (plogp(q_src_new) + plogp(q_tgt_new) - plogp(q_src) - plogp(q_tgt))
            + plogp(p_src_new) + plogp(p_tgt_new)
            - plogp(p_src)
            - plogp(p_tgt)
    }

    fn apply_move(&mut self, node: usize, target: usize) {
        let source = self.module_of[node];
        let exit_n: f64 = self.flow.links[node]
            .iter()
            .map(|&(_, f_out, _)| f_out)
            .sum();
        let mut out_src = 0.0;
        let mut in_src = 0.0;
        let mut out_tgt = 0.0;
        let mut in_tgt = 0.0;
        for &(j, f_out, f_in) in &self.flow.links[node] {
            let mj = self.module_of[j];
            if mj == source {
                out_src += f_out;
                in_src += f_in;
            } else if mj == target {
                out_tgt += f_out;
                in_tgt += f_in;
            }
        }
        let q_src_new = self.module_q[source] - (exit_n - out_src) + in_src;
        let q_tgt_new = self.module_q[target] + (exit_n - out_tgt) - in_tgt;
        self.q_total += q_src_new + q_tgt_new - self.module_q[source] - self.module_q[target];
        self.module_q[source] = q_src_new;
        self.module_q[target] = q_tgt_new;
        let p_n = self.flow.node_flow[node];
        self.module_flow[source] -= p_n;
        self.module_flow[target] += p_n;
        self.module_size[source] -= 1;
        self.module_size[target] += 1;
        self.module_of[node] = target;
    }

    /// One full sweep in the given node order; returns the number of
    /// accepted (strictly improving) moves.
    fn sweep(&mut self, order: &[usize]) -> usize {
        let mut moves = 0;
        for &node in order {
            let source = self.module_of[node];
            // Candidate modules: neighbors' modules, plus a fresh
            // singleton if the node shares its module with others.
            let mut candidates: Vec<usize> = self.flow.links[node]
                .iter()
                .map(|&(j, _, _)| self.module_of[j])
                .filter(|&m| m != source)
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            if self.module_size[source] > 1 {
                if let Some(empty) = self.module_size.iter().position(|&s| s == 0) {
                    candidates.push(empty);
                }
            }

            let mut best: Option<(f64, usize)> = None;
            for &target in &candidates {
                let delta = self.move_delta(node, target);
                let better = match best {
                    None => delta < -MOVE_EPS,
                    Some((best_delta, _)) => delta < best_delta - MOVE_EPS,
                };
                if better {
                    best = Some((delta, target));
                }
            }
            if let Some((delta, target)) = best {
                let before = if self.verify { self.codelength() } else { 0.0 };
                self.apply_move(node, target);
                if self.verify {
                    let after = self.codelength();
                    let err = libm::fabs(after - before - delta);
                    if err > self.max_delta_error {
                        self.max_delta_error = err;
                    }
                    // Accepted moves must strictly decrease codelength.
                    debug_assert!(after < before);
                }
                moves += 1;
            }
        }
        moves
    }
}

/// Result of an infomap run: best partition over restarts with the
/// per-trial codelengths kept for reproducibility audits.
#[derive(Debug, Clone)]
pub struct InfomapResult {
    pub partition: Partition,
    /// Codelength of the chosen partition, in bits.
    pub codelength: f64,
    pub trial_codelengths: Vec<f64>,
    pub chosen_trial: usize,
    pub visit_rates: VisitRates,
    /// Largest per-move delta error observed (only when verification is on).
    pub max_delta_error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct InfomapOptions {
    pub tau: f64,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Cross-check every accepted move's delta against a full recompute.
    pub verify_deltas: bool,
}

impl Default for InfomapOptions {
    fn default() -> Self {
        InfomapOptions {
            tau: DEFAULT_TAU,
            trials: DEFAULT_TRIALS,
            seed: 0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            verify_deltas: false,
        }
    }
}

/// Restarted greedy map-equation minimization: node-moving sweeps, then
/// community aggregation, repeated until no move improves. Deterministic
/// for fixed (seed, trials); equal-codelength ties go to the lowest trial.
pub fn detect_infomap(
    g: &CoGraph,
    seed: u64,
    trials: usize,
    tau: f64,
) -> Result<InfomapResult, CommunityError> {
    detect_infomap_with(
        g,
        InfomapOptions {
            tau,
            trials,
            seed,
            ..Default::default()
        },
    )
}

pub fn detect_infomap_with(
    g: &CoGraph,
    options: InfomapOptions,
) -> Result<InfomapResult, CommunityError> {
    let rates = stationary_visit_rates(g, options.tau, options.tol, options.max_iter)?;
    let base = FlowNetwork::from_graph(g, &rates);

    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    let mut trial_codelengths = Vec::with_capacity(options.trials.max(1));
    let mut max_delta_error = 0.0f64;
    for trial in 0..options.trials.max(1) {
        let trial_seed = seeds::substream(options.seed, trial as u64);
        let (assignment, codelength, delta_error) =
            run_trial(&base, trial_seed, options.verify_deltas);
        if delta_error > max_delta_error {
            max_delta_error = delta_error;
        }
        trial_codelengths.push(codelength);
        let improves = match &best {
            None => true,
            Some((best_len, _, _)) => codelength < *best_len,
        };
        if improves {
            best = Some((codelength, assignment, trial));
        }
    }
    let (codelength, assignment, chosen_trial) = best.expect("at least one trial");
    Ok(InfomapResult {
        partition: Partition::from_labels(&assignment),
        codelength,
        trial_codelengths,
        chosen_trial,
        visit_rates: rates,
        max_delta_error,
    })
}

fn run_trial(base: &FlowNetwork, trial_seed: u64, verify: bool) -> (Vec<usize>, f64, f64) {
    let n = base.len();
    // assignment maps original nodes to modules of the current level.
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut level_flow: Option<FlowNetwork> = None;
    let mut codelength = 0.0;
    let mut max_delta_error = 0.0f64;

    for level in 0.. {
        let flow = level_flow.as_ref().unwrap_or(base);
        let mut optimizer = Optimizer::new(flow, verify);
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::substream(trial_seed, level as u64));
        let mut order: Vec<usize> = (0..flow.len()).collect();

        let mut total_moves = 0;
        loop {
            order.shuffle(&mut rng);
            let moves = optimizer.sweep(&order);
            total_moves += moves;
            if moves == 0 {
                break;
            }
        }
        if optimizer.max_delta_error > max_delta_error {
            max_delta_error = optimizer.max_delta_error;
        }
        codelength = optimizer.codelength();

        // Dense-renumber modules of this level.
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        for &m in &optimizer.module_of {
            let next = remap.len();
            remap.entry(m).or_insert(next);
        }
        let module_labels: Vec<usize> =
            optimizer.module_of.iter().map(|m| remap[m]).collect();
        let num_modules = remap.len();

        // Compose onto original nodes.
        for slot in assignment.iter_mut() {
            *slot = module_labels[*slot];
        }
        if total_moves == 0 || num_modules == flow.len() {
            break;
        }
        level_flow = Some(flow.aggregate(&module_labels, num_modules));
    }
    (assignment, codelength, max_delta_error)
}

/// Weighted Newman modularity Q = Σ_c [w_c/W − (s_c/2W)²] with W the total
/// undirected weight, w_c intra-community weight, s_c community strength.
pub fn modularity(g: &CoGraph, partition: &Partition) -> f64 {
    let w_total = g.total_weight();
    if w_total <= 0.0 {
        return 0.0;
    }
    let mut intra = alloc::vec![0.0; partition.num_communities()];
    let mut strength = alloc::vec![0.0; partition.num_communities()];
    for (a, b, w) in g.edges() {
        if partition.community_of(a) == partition.community_of(b) {
            intra[partition.community_of(a)] += w;
        }
    }
    for node in 0..g.node_count() {
        strength[partition.community_of(node)] += g.strength(node);
    }
    intra
        .iter()
        .zip(&strength)
        .map(|(&wc, &sc)| wc / w_total - (sc / (2.0 * w_total)) * (sc / (2.0 * w_total)))
        .sum()
}

/// Normalized mutual information between two labelings of the same nodes,
/// normalized by the arithmetic mean of the label entropies. Two trivial
/// (single-cluster) labelings count as identical.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same nodes");
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut marg_a: BTreeMap<usize, f64> = BTreeMap::new();
    let mut marg_b: BTreeMap<usize, f64> = BTreeMap::new();
    for (&la, &lb) in a.iter().zip(b) {
        *joint.entry((la, lb)).or_insert(0.0) += 1.0;
        *marg_a.entry(la).or_insert(0.0) += 1.0;
        *marg_b.entry(lb).or_insert(0.0) += 1.0;
    }
    let h = |counts: &BTreeMap<usize, f64>| -> f64 {
        -counts
            .values()
            .map(|&c| {
                let p = c / nf;
                if p > 0.0 {
                    p * libm::log(p)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    };
    let h_a = h(&marg_a);
    let h_b = h(&marg_b);
    let mut mutual = 0.0;
    for (&(la, lb), &c) in &joint {
        let p = c / nf;
        let pa = marg_a[&la] / nf;
        let pb = marg_b[&lb] / nf;
        mutual += p * libm::log(p / (pa * pb));
    }
    if h_a + h_b == 0.0 {
        return 1.0;
    }
    2.0 * mutual / (h_a + h_b)
}
