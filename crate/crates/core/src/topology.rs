//! Communication graph and consensus weights.
//!
//! Nodes are indexed `0..n`. The public label of a node (the LIS number used
//! in configuration files and traces) is its index plus one, which is what
//! `Display` prints.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Builds an id from a 1-based label.
    pub fn from_label(label: usize) -> Option<Self> {
        label.checked_sub(1).map(NodeId)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn label(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Undirected communication graph with optional per-link delay bounds.
///
/// Self-access is implicit and delay-free, so self-edges are rejected.
/// Links without an explicit bound inherit the global bound of the delay
/// model they are simulated under.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    delay_bounds: BTreeMap<(NodeId, NodeId), u32>,
}

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Graph {
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            if a >= node_count {
                return Err(Error::UnknownNode(NodeId(a)));
            }
            if b >= node_count {
                return Err(Error::UnknownNode(NodeId(b)));
            }
            if a == b {
                return Err(Error::SelfEdge(NodeId(a)));
            }
            adjacency[a].push(NodeId(b));
            adjacency[b].push(NodeId(a));
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            adjacency,
            delay_bounds: BTreeMap::new(),
        })
    }

    /// Ring `0 - 1 - ... - (n-1) - 0`. For `n < 3` this degenerates to a path.
    pub fn cycle(n: usize) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        if n >= 3 {
            edges.push((n - 1, 0));
        }
        Self::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push((a, b));
            }
        }
        Self::new(n, &edges)
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adjacency.len()).map(NodeId)
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.0]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.0].len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.adjacency.len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.adjacency[a.0].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |b| b.0 > a)
                .map(move |&b| (NodeId(a), b))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn set_delay_bound(&mut self, a: NodeId, b: NodeId, bound: u32) -> Result<()> {
        if !self.has_edge(a, b) {
            return Err(Error::UnknownEdge(a, b));
        }
        self.delay_bounds.insert(edge_key(a, b), bound);
        Ok(())
    }

    /// Explicit bound on the link, if one was set.
    pub fn delay_bound(&self, a: NodeId, b: NodeId) -> Option<u32> {
        self.delay_bounds.get(&edge_key(a, b)).copied()
    }

    /// Bound on the link `a`-`b` under the global bound `tau_bar`.
    pub fn effective_delay_bound(&self, a: NodeId, b: NodeId, tau_bar: u32) -> u32 {
        self.delay_bound(a, b).map_or(tau_bar, |d| d.min(tau_bar))
    }

    /// Checks every explicit link bound against the global bound.
    pub fn check_delay_bounds(&self, tau_bar: u32) -> Result<()> {
        for (&(a, b), &bound) in &self.delay_bounds {
            if bound > tau_bar {
                return Err(Error::DelayBound {
                    from: a,
                    to: b,
                    delay: bound,
                    bound: tau_bar,
                });
            }
        }
        Ok(())
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn hop_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source.0] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.0].unwrap_or(0);
            for &v in self.neighbors(u) {
                if dist[v.0].is_none() {
                    dist[v.0] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(NodeId(0)).iter().all(Option::is_some)
    }

    /// Largest shortest-path hop count over all node pairs.
    pub fn diameter(&self) -> Result<usize> {
        let mut diameter = 0;
        for source in self.nodes() {
            for d in self.hop_distances(source) {
                diameter = diameter.max(d.ok_or(Error::Disconnected)?);
            }
        }
        Ok(diameter)
    }

    /// Subgraph induced by `keep`, reindexed in the order given. Returns the
    /// subgraph and, for each new index, the original node.
    pub fn induced(&self, keep: &[NodeId]) -> Result<(Graph, Vec<NodeId>)> {
        let mut position = vec![None; self.node_count()];
        for (new, &old) in keep.iter().enumerate() {
            if !self.contains(old) {
                return Err(Error::UnknownNode(old));
            }
            position[old.0] = Some(new);
        }
        let mut edges = Vec::new();
        for (a, b) in self.edges() {
            if let (Some(na), Some(nb)) = (position[a.0], position[b.0]) {
                edges.push((na, nb));
            }
        }
        let mut sub = Graph::new(keep.len(), &edges)?;
        for (&(a, b), &bound) in &self.delay_bounds {
            if let (Some(na), Some(nb)) = (position[a.0], position[b.0]) {
                sub.delay_bounds.insert(edge_key(NodeId(na), NodeId(nb)), bound);
            }
        }
        Ok((sub, keep.to_vec()))
    }
}

/// Dense `n x n` matrix of consensus weights; entry `(i, j)` weighs what node
/// `i` receives from node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl WeightMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Config("weight matrix must be square"));
        }
        Ok(Self {
            n,
            entries: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.entries[i.0 * self.n + j.0]
    }

    pub fn self_weight(&self, i: NodeId) -> f64 {
        self.get(i, i)
    }

    pub fn column_sum(&self, j: NodeId) -> f64 {
        (0..self.n).map(|i| self.get(NodeId(i), j)).sum()
    }

    pub fn row_sum(&self, i: NodeId) -> f64 {
        self.entries[i.0 * self.n..(i.0 + 1) * self.n].iter().sum()
    }

    pub fn is_column_stochastic(&self, tol: f64) -> bool {
        self.entries.iter().all(|&w| w >= 0.0)
            && (0..self.n).all(|j| (self.column_sum(NodeId(j)) - 1.0).abs() <= tol)
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.entries.iter().all(|&w| w >= 0.0)
            && (0..self.n).all(|i| (self.row_sum(NodeId(i)) - 1.0).abs() <= tol)
    }
}

/// Column-stochastic weights chosen from local out-degree only: every entry
/// in column `i` on `{i} ∪ N(i)` equals `1 / (deg(i) + 1)`.
pub fn build_weights(graph: &Graph) -> Result<WeightMatrix> {
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = graph.node_count();
    let mut entries = vec![0.0; n * n];
    for i in graph.nodes() {
        let share = 1.0 / (graph.degree(i) + 1) as f64;
        entries[i.0 * n + i.0] = share;
        for &j in graph.neighbors(i) {
            entries[j.0 * n + i.0] = share;
        }
    }
    Ok(WeightMatrix { n, entries })
}

/// Symmetric Metropolis-Hastings weights (doubly stochastic). Used by the
/// delay-oblivious averaging baseline, which needs row sums of one.
pub fn metropolis_weights(graph: &Graph) -> Result<WeightMatrix> {
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = graph.node_count();
    let mut entries = vec![0.0; n * n];
    for i in graph.nodes() {
        let mut off = 0.0;
        for &j in graph.neighbors(i) {
            let w = 1.0 / (1 + graph.degree(i).max(graph.degree(j))) as f64;
            entries[i.0 * n + j.0] = w;
            off += w;
        }
        entries[i.0 * n + i.0] = 1.0 - off;
    }
    Ok(WeightMatrix { n, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_cycle_weights_are_one_third() {
        let g = Graph::cycle(6).unwrap();
        let w = build_weights(&g).unwrap();
        for i in g.nodes() {
            for j in g.nodes() {
                let expected = if i == j || g.has_edge(i, j) { 1.0 / 3.0 } else { 0.0 };
                assert_eq!(w.get(i, j), expected);
            }
        }
        assert!(w.is_column_stochastic(1e-12));
    }

    #[test]
    fn single_node_weight_is_one() {
        let g = Graph::new(1, &[]).unwrap();
        let w = build_weights(&g).unwrap();
        assert_eq!(w.get(NodeId(0), NodeId(0)), 1.0);
        assert_eq!(g.diameter().unwrap(), 0);
    }

    #[test]
    fn star_center_column_is_one_sixth() {
        let g = Graph::star(6).unwrap();
        let w = build_weights(&g).unwrap();
        let center = NodeId(0);
        for i in g.nodes() {
            assert_eq!(w.get(i, center), 1.0 / 6.0);
        }
        // leaves have degree one
        assert_eq!(w.get(NodeId(0), NodeId(3)), 0.5);
        assert_eq!(w.get(NodeId(3), NodeId(3)), 0.5);
        assert_eq!(w.get(NodeId(2), NodeId(3)), 0.0);
    }

    #[test]
    fn diameters() {
        assert_eq!(Graph::cycle(6).unwrap().diameter().unwrap(), 3);
        assert_eq!(Graph::complete(4).unwrap().diameter().unwrap(), 1);
        assert_eq!(Graph::path(5).unwrap().diameter().unwrap(), 4);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = Graph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.diameter(), Err(Error::Disconnected));
        assert_eq!(build_weights(&g), Err(Error::Disconnected));
    }

    #[test]
    fn self_edges_and_unknown_nodes_are_rejected() {
        assert_eq!(Graph::new(3, &[(1, 1)]), Err(Error::SelfEdge(NodeId(1))));
        assert_eq!(Graph::new(3, &[(0, 3)]), Err(Error::UnknownNode(NodeId(3))));
        assert_eq!(Graph::new(0, &[]), Err(Error::EmptyGraph));
    }

    #[test]
    fn delay_bounds_checked_against_global_bound() {
        let mut g = Graph::cycle(4).unwrap();
        g.set_delay_bound(NodeId(0), NodeId(1), 2).unwrap();
        assert!(g.check_delay_bounds(3).is_ok());
        assert!(g.check_delay_bounds(1).is_err());
        assert_eq!(g.effective_delay_bound(NodeId(1), NodeId(0), 3), 2);
        assert_eq!(g.effective_delay_bound(NodeId(1), NodeId(2), 3), 3);
        assert!(g.set_delay_bound(NodeId(0), NodeId(2), 1).is_err());
    }

    #[test]
    fn induced_subgraph_of_cycle_is_path() {
        let g = Graph::cycle(6).unwrap();
        let keep: Vec<NodeId> = [0, 2, 3, 4, 5].into_iter().map(NodeId).collect();
        let (sub, map) = g.induced(&keep).unwrap();
        assert_eq!(sub.node_count(), 5);
        assert_eq!(sub.edge_count(), 4);
        assert_eq!(sub.diameter().unwrap(), 4);
        assert_eq!(map[1], NodeId(2));
    }

    #[test]
    fn metropolis_is_doubly_stochastic() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        let w = metropolis_weights(&g).unwrap();
        assert!(w.is_row_stochastic(1e-12));
        assert!(w.is_column_stochastic(1e-12));
    }

    #[test]
    fn labels_are_one_based() {
        assert_eq!(NodeId(1).label(), 2);
        assert_eq!(NodeId::from_label(2), Some(NodeId(1)));
        assert_eq!(NodeId::from_label(0), None);
        assert_eq!(alloc::format!("{}", NodeId(5)), "6");
    }
}
