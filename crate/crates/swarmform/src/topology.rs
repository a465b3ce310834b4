//! Cluster-head adaptive communication topology.
//!
//! One node acts as the cluster head: it alone senses the reference target,
//! broadcasts to the swarm, and is constrained by nothing but the target (its
//! adjacency row is zero). Every other alive node receives from exactly two
//! nodes: the head and its nearest non-head alive peer, with distances taken
//! from the formation definition. The construction keeps a directed spanning
//! tree rooted at the head for any alive subset, and its undirected support
//! satisfies the Molloy-Reed criterion for four or more nodes.

use crate::error::{Error, Result};
use crate::formation::{distance_matrix, DistanceMatrix, FormationPattern, NodeId};

/// Immutable topology snapshot over an alive subset of the pattern's nodes.
///
/// `adjacency[i][j] = 1` means node `alive[i]` receives from node `alive[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    alive: Vec<NodeId>,
    head: NodeId,
    adjacency: Vec<u8>,
    /// Receive-from sets, aligned with `alive` order.
    neighbors: Vec<Vec<NodeId>>,
}

impl Topology {
    pub fn alive(&self) -> &[NodeId] {
        &self.alive
    }

    pub fn head(&self) -> NodeId {
        self.head
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive.binary_search(&id).is_ok()
    }

    fn index_of(&self, id: NodeId) -> Option<usize> {
        self.alive.binary_search(&id).ok()
    }

    /// Adjacency entry by position in the sorted alive list.
    pub fn adjacency_at(&self, row: usize, col: usize) -> u8 {
        self.adjacency[row * self.alive.len() + col]
    }

    /// The set N_i of nodes that `id` receives from (empty for the head).
    pub fn neighbors_of(&self, id: NodeId) -> &[NodeId] {
        let idx = self
            .index_of(id)
            .unwrap_or_else(|| panic!("node {id} is not alive"));
        &self.neighbors[idx]
    }

    /// Dense adjacency rows, for display and serialization.
    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        let k = self.alive.len();
        (0..k)
            .map(|i| self.adjacency[i * k..(i + 1) * k].to_vec())
            .collect()
    }

    /// Undirected support of the adjacency: an edge counts once per endpoint.
    fn undirected(&self) -> Vec<u8> {
        let k = self.alive.len();
        let mut u = vec![0u8; k * k];
        for i in 0..k {
            for j in 0..k {
                if self.adjacency[i * k + j] == 1 {
                    u[i * k + j] = 1;
                    u[j * k + i] = 1;
                }
            }
        }
        u
    }
}

/// Elect the cluster head: the smallest alive node id.
pub fn elect_head(alive: &[NodeId]) -> Result<NodeId> {
    alive.iter().copied().min().ok_or(Error::SwarmCollapse)
}

/// Build the adjacency over `alive` with distances from the pattern.
///
/// For each non-head node i: one edge to the head and one to the
/// minimum-index member of the nearest non-head alive peers (ties broken to
/// the smallest id). With two alive nodes only the head edge exists.
pub fn build_topology(
    pattern: &FormationPattern,
    alive: &[NodeId],
    head: NodeId,
) -> Result<Topology> {
    let mut alive: Vec<NodeId> = alive.to_vec();
    alive.sort_unstable();
    alive.dedup();
    if alive.len() < 2 {
        return Err(Error::SwarmCollapse);
    }
    assert!(
        alive.contains(&head),
        "head {head} must be a member of the alive set"
    );
    assert!(
        *alive.last().unwrap() <= pattern.len(),
        "alive ids must exist in the pattern"
    );

    let dist = distance_matrix(pattern);
    let k = alive.len();
    let mut adjacency = vec![0u8; k * k];
    let mut neighbors = vec![Vec::new(); k];
    for (row, &i) in alive.iter().enumerate() {
        if i == head {
            continue;
        }
        let head_col = alive.iter().position(|&v| v == head).unwrap();
        adjacency[row * k + head_col] = 1;
        neighbors[row].push(head);
        if let Some(peer) = nearest_peer(&dist, &alive, head, i) {
            let peer_col = alive.iter().position(|&v| v == peer).unwrap();
            adjacency[row * k + peer_col] = 1;
            neighbors[row].push(peer);
        }
        neighbors[row].sort_unstable();
    }

    Ok(Topology {
        alive,
        head,
        adjacency,
        neighbors,
    })
}

/// Minimum-index member of argmin_k d(i, k) over non-head alive peers.
fn nearest_peer(
    dist: &DistanceMatrix,
    alive: &[NodeId],
    head: NodeId,
    i: NodeId,
) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for &k in alive {
        if k == head || k == i {
            continue;
        }
        let d = dist.get(i, k);
        let better = match best {
            None => true,
            Some((bd, bk)) => d < bd || (d == bd && k < bk),
        };
        if better {
            best = Some((d, k));
        }
    }
    best.map(|(_, k)| k)
}

/// Remove failed nodes, re-elect the head if it failed, rebuild adjacency.
pub fn fail_nodes(
    topology: &Topology,
    failed: &[NodeId],
    pattern: &FormationPattern,
) -> Result<Topology> {
    let alive: Vec<NodeId> = topology
        .alive
        .iter()
        .copied()
        .filter(|id| !failed.contains(id))
        .collect();
    let head = if failed.contains(&topology.head) {
        elect_head(&alive)?
    } else {
        topology.head
    };
    build_topology(pattern, &alive, head)
}

/// True iff every alive node receives the head's broadcast, i.e. every node
/// is reachable from the head along reversed adjacency edges.
pub fn has_spanning_tree(t: &Topology) -> bool {
    let k = t.alive.len();
    if k == 0 {
        return false;
    }
    let root = t.alive.iter().position(|&v| v == t.head).unwrap();
    let mut seen = vec![false; k];
    let mut queue = std::collections::VecDeque::from([root]);
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for (i, reached) in seen.iter_mut().enumerate() {
            // i receives from v.
            if !*reached && t.adjacency[i * k + v] == 1 {
                *reached = true;
                queue.push_back(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Molloy-Reed ratio κ = <k²>/<k> over the undirected support.
pub fn molloy_reed(t: &Topology) -> f64 {
    let degrees = undirected_degrees(t);
    let k = degrees.len() as f64;
    let mean: f64 = degrees.iter().map(|&d| d as f64).sum::<f64>() / k;
    let mean_sq: f64 = degrees.iter().map(|&d| (d * d) as f64).sum::<f64>() / k;
    mean_sq / mean
}

fn undirected_degrees(t: &Topology) -> Vec<usize> {
    let k = t.alive.len();
    let u = t.undirected();
    (0..k)
        .map(|i| (0..k).filter(|&j| u[i * k + j] == 1).count())
        .collect()
}

/// Degrees, Laplacian L = D − A of the undirected support, and κ.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMetrics {
    pub degrees: Vec<usize>,
    /// Row-major |V|×|V|.
    pub laplacian: Vec<f64>,
    pub molloy_reed: f64,
}

pub fn laplacian(t: &Topology) -> GraphMetrics {
    let k = t.alive.len();
    let u = t.undirected();
    let degrees = undirected_degrees(t);
    let mut lap = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            lap[i * k + j] = if i == j {
                degrees[i] as f64
            } else {
                -f64::from(u[i * k + j])
            };
        }
    }
    GraphMetrics {
        degrees,
        laplacian: lap,
        molloy_reed: molloy_reed(t),
    }
}
