#![allow(dead_code)]

use apportion_core::apportion::{ApportionProblem, Bounds};
use apportion_core::topology::Graph;
use apportion_core::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected graph: a random spanning tree plus extra edges, each
/// present with probability `extra`.
pub fn random_connected(n: usize, extra: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !edges.contains(&(a, b)) && rng.random_bool(extra) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// Random feasible problem with the demand placed uniformly inside the
/// capacity range.
pub fn random_problem(n: usize, rng: &mut ChaCha8Rng) -> ApportionProblem {
    let bounds: Vec<Bounds> = (0..n)
        .map(|_| {
            let min = rng.random_range(0.0..500.0);
            Bounds::new(min, min + rng.random_range(10.0..2000.0))
        })
        .collect();
    let lo: f64 = bounds.iter().map(|b| b.min).sum();
    let hi: f64 = bounds.iter().map(|b| b.max).sum();
    let demand = lo + rng.random_range(0.0..=1.0) * (hi - lo);
    let p = rng.random_range(1..=n);
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    ApportionProblem::new(demand, bounds, ids[..p].iter().map(|&i| NodeId(i))).unwrap()
}

/// All-pairs shortest paths by Floyd-Warshall; independent of the BFS used
/// by the library.
pub fn floyd_diameter(g: &Graph) -> usize {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
    }
    for (a, b) in g.edges() {
        d[a.0][b.0] = 1;
        d[b.0][a.0] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.iter().flatten().copied().max().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
