//! Per-second interaction graphs and modularity-based community detection.
//!
//! Each second becomes an undirected weighted graph whose edge weights are
//! predicted pair-interaction probabilities; communities found by a greedy
//! two-phase modularity optimization (local moves, then aggregation) are
//! the detected group formations. The resolution parameter scales the null
//! model: larger values favor smaller communities.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{all_pairs, PairKey};
use crate::num::Real;

/// Edges below this weight are dropped before community detection.
pub const DEFAULT_EDGE_FLOOR: f64 = 0.05;

/// Undirected weighted graph over the participants at one second.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph<R> {
    pub second: usize,
    pub n_vertices: usize,
    /// Unordered edges `(a, b, weight)` with `a < b`, no self-loops.
    pub edges: Vec<(u32, u32, R)>,
}

/// Community assignment for every vertex of one second's graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub second: usize,
    /// Community ids renumbered to 0..k, in order of first appearance.
    pub community_of: Vec<u32>,
}

/// Build the graph for one second from per-pair probabilities in canonical
/// pair order. Every participant is a vertex even when isolated.
pub fn build_graph<R: Real>(
    n_participants: usize,
    probabilities: &[R],
    edge_floor: R,
    second: usize,
) -> InteractionGraph<R> {
    let pairs = all_pairs(n_participants);
    assert_eq!(pairs.len(), probabilities.len());
    let edges = pairs
        .iter()
        .zip(probabilities.iter())
        .filter(|(_, &p)| p >= edge_floor)
        .map(|(&PairKey { a, b }, &p)| (a, b, p))
        .collect();
    InteractionGraph {
        second,
        n_vertices: n_participants,
        edges,
    }
}

/// Weighted modularity of a partition at resolution `gamma`.
///
/// `Q = sum_intra(2w)/(2m) - gamma * sum_C (K_C / 2m)^2` with weighted
/// degrees `K` and total edge weight `m`; an edgeless graph has `Q = 0`.
pub fn modularity<R: Real>(graph: &InteractionGraph<R>, partition: &[u32], gamma: R) -> R {
    assert_eq!(partition.len(), graph.n_vertices);
    let mut m = R::zero();
    let mut degree = vec![R::zero(); graph.n_vertices];
    for &(a, b, w) in &graph.edges {
        m += w;
        degree[a as usize] += w;
        degree[b as usize] += w;
    }
    if m == R::zero() {
        return R::zero();
    }
    let two_m = R::of(2.0) * m;

    let mut intra = R::zero();
    for &(a, b, w) in &graph.edges {
        if partition[a as usize] == partition[b as usize] {
            intra += R::of(2.0) * w;
        }
    }
    let n_comms = partition.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut comm_degree = vec![R::zero(); n_comms];
    for (v, &c) in partition.iter().enumerate() {
        comm_degree[c as usize] += degree[v];
    }
    let null: R = comm_degree
        .iter()
        .map(|&k| (k / two_m) * (k / two_m))
        .sum();
    intra / two_m - gamma * null
}

/// Working graph for the aggregation levels: adjacency plus self-loops.
struct LevelGraph<R> {
    adj: Vec<Vec<(u32, R)>>,
    self_loop: Vec<R>,
    /// Total edge weight including self-loops.
    m: R,
}

impl<R: Real> LevelGraph<R> {
    fn degree(&self, v: usize) -> R {
        let mut d = R::of(2.0) * self.self_loop[v];
        for &(_, w) in &self.adj[v] {
            d += w;
        }
        d
    }

    fn n(&self) -> usize {
        self.adj.len()
    }
}

/// Greedy modularity optimization: sweep vertices in a seeded random order,
/// moving each to the neighbor community with the largest strictly positive
/// gain; when a full sweep makes no move, collapse communities into
/// vertices and repeat. Deterministic for a fixed seed.
pub fn louvain<R: Real>(graph: &InteractionGraph<R>, gamma: R, seed: u64) -> Partition {
    let n = graph.n_vertices;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut level = LevelGraph {
        adj: vec![Vec::new(); n],
        self_loop: vec![R::zero(); n],
        m: R::zero(),
    };
    for &(a, b, w) in &graph.edges {
        level.adj[a as usize].push((b, w));
        level.adj[b as usize].push((a, w));
        level.m += w;
    }
    // Which level-vertex each original vertex currently belongs to.
    let mut assignment: Vec<u32> = (0..n as u32).collect();

    if level.m == R::zero() {
        return Partition {
            second: graph.second,
            community_of: assignment,
        };
    }

    loop {
        let moved = local_move_phase(&mut rng, &level, gamma).map(|communities| {
            // Fold the level communities into the original assignment.
            for a in assignment.iter_mut() {
                *a = communities[*a as usize];
            }
            communities
        });
        let Some(communities) = moved else { break };
        let n_comms = communities.iter().map(|&c| c + 1).max().unwrap_or(0) as usize;
        if n_comms == level.n() {
            break; // no aggregation possible
        }
        level = aggregate(&level, &communities, n_comms);
    }

    // Renumber communities in order of first appearance.
    let mut remap: Vec<Option<u32>> = vec![None; n];
    let mut next = 0u32;
    let community_of = assignment
        .iter()
        .map(|&c| {
            *remap[c as usize].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            })
        })
        .collect();
    Partition {
        second: graph.second,
        community_of,
    }
}

/// One local-move phase. Returns the (compacted) community per vertex when
/// at least one move happened, `None` otherwise.
fn local_move_phase<R: Real>(
    rng: &mut ChaCha8Rng,
    g: &LevelGraph<R>,
    gamma: R,
) -> Option<Vec<u32>> {
    let n = g.n();
    let m = g.m;
    let two_m = R::of(2.0) * m;

    let mut community: Vec<u32> = (0..n as u32).collect();
    let mut comm_degree: Vec<R> = (0..n).map(|v| g.degree(v)).collect();
    let degree: Vec<R> = comm_degree.clone();

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut any_move = false;
    let mut weight_to: Vec<R> = vec![R::zero(); n];
    let mut touched: Vec<u32> = Vec::new();
    for _sweep in 0..100 {
        let mut moved_this_sweep = false;
        for &v in &order {
            let current = community[v] as usize;
            // Weights from v to each neighboring community.
            touched.clear();
            for &(u, w) in &g.adj[v] {
                let c = community[u as usize] as usize;
                if weight_to[c] == R::zero() {
                    touched.push(c as u32);
                }
                weight_to[c] += w;
            }
            touched.sort_unstable();
            // Remove v from its community while evaluating candidates; the
            // gain of community c for the detached vertex is
            //   k_{v,c}/m - gamma * tot(c) * k_v / (2 m^2).
            comm_degree[current] -= degree[v];
            let gain_of = |c: usize, comm_degree: &[R]| {
                weight_to[c] / m - gamma * comm_degree[c] * degree[v] / (two_m * m)
            };

            // Rejoining the current community is the baseline; a move needs
            // strictly more gain. Equal-gain candidates resolve to the
            // lowest community id by the ascending scan.
            let mut best_comm = current as u32;
            let mut best_gain = gain_of(current, &comm_degree);
            for &c in &touched {
                if c as usize == current {
                    continue;
                }
                let gain = gain_of(c as usize, &comm_degree);
                if gain > best_gain {
                    best_gain = gain;
                    best_comm = c;
                }
            }

            comm_degree[best_comm as usize] += degree[v];
            if best_comm as usize != current {
                community[v] = best_comm;
                moved_this_sweep = true;
                any_move = true;
            }
            for &c in &touched {
                weight_to[c as usize] = R::zero();
            }
        }
        if !moved_this_sweep {
            break;
        }
    }

    if !any_move {
        return None;
    }
    // Compact ids.
    let mut remap: Vec<Option<u32>> = vec![None; n];
    let mut next = 0u32;
    for c in community.iter_mut() {
        *c = *remap[*c as usize].get_or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
    }
    Some(community)
}

fn aggregate<R: Real>(g: &LevelGraph<R>, communities: &[u32], n_comms: usize) -> LevelGraph<R> {
    let mut self_loop = vec![R::zero(); n_comms];
    let mut edge_weight: std::collections::BTreeMap<(u32, u32), R> = Default::default();
    for v in 0..g.n() {
        let cv = communities[v];
        self_loop[cv as usize] += g.self_loop[v];
        for &(u, w) in &g.adj[v] {
            if (u as usize) < v {
                continue; // each undirected edge once
            }
            let cu = communities[u as usize];
            if cu == cv {
                self_loop[cv as usize] += w;
            } else {
                let key = if cv < cu { (cv, cu) } else { (cu, cv) };
                *edge_weight.entry(key).or_insert(R::zero()) += w;
            }
        }
    }
    let mut adj = vec![Vec::new(); n_comms];
    let mut m = self_loop.iter().copied().sum::<R>();
    for ((a, b), w) in edge_weight {
        adj[a as usize].push((b, w));
        adj[b as usize].push((a, w));
        m += w;
    }
    LevelGraph { adj, self_loop, m }
}

/// Detected formations: communities with at least `min_size` members;
/// everyone else is reported as non-interacting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedGroups {
    /// Sorted member lists, ordered by first member.
    pub groups: Vec<Vec<u32>>,
    pub non_interacting: Vec<u32>,
}

pub fn extract_groups(partition: &Partition, min_size: usize) -> ExtractedGroups {
    let n_comms = partition
        .community_of
        .iter()
        .map(|&c| c as usize + 1)
        .max()
        .unwrap_or(0);
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_comms];
    for (v, &c) in partition.community_of.iter().enumerate() {
        members[c as usize].push(v as u32);
    }
    let mut groups = Vec::new();
    let mut non_interacting = Vec::new();
    for m in members {
        if m.len() >= min_size {
            groups.push(m);
        } else {
            non_interacting.extend(m);
        }
    }
    groups.sort();
    non_interacting.sort_unstable();
    ExtractedGroups {
        groups,
        non_interacting,
    }
}
