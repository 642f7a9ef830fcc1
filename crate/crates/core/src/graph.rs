//! Interference graphs: schedules are independent sets, resource pools are
//! maximal cliques.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CapacityPolytope, Schedule};

/// Largest graph for which [`enumerate_schedules`] runs by default.
pub const DEFAULT_SCHEDULE_VERTEX_CAP: usize = 24;
/// Largest graph for which [`is_perfect`] runs by default.
pub const DEFAULT_PERFECT_VERTEX_CAP: usize = 16;
/// Bitmask representation limits graphs to 64 vertices.
pub const MAX_VERTICES: usize = 64;

/// Simple undirected graph on queues `0..n`, stored as adjacency bitmasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceGraph {
    n: usize,
    adj: Vec<u64>,
}

impl InterferenceGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n > MAX_VERTICES {
            return Err(Error::CapExceeded { what: "interference graph vertex count", limit: MAX_VERTICES, actual: n });
        }
        let mut adj = vec![0u64; n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidNetwork(format!("edge ({u}, {v}) references a vertex outside 0..{n}")));
            }
            if u == v {
                return Err(Error::InvalidNetwork(format!("self-loop at vertex {u}")));
            }
            if adj[u] >> v & 1 == 1 {
                return Err(Error::InvalidNetwork(format!("duplicate edge ({u}, {v})")));
            }
            adj[u] |= 1 << v;
            adj[v] |= 1 << u;
        }
        Ok(Self { n, adj })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.adj[u] >> v & 1 == 1
    }

    pub fn neighbors(&self, u: usize) -> u64 {
        self.adj[u]
    }

    /// Edges with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if self.is_adjacent(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn complement(&self) -> Self {
        let all = full_mask(self.n);
        let adj = (0..self.n).map(|u| !self.adj[u] & all & !(1u64 << u)).collect();
        Self { n: self.n, adj }
    }

    /// Whether a 0/1 vector is an independent set.
    pub fn is_independent(&self, schedule: &[u32]) -> bool {
        let mask = schedule.iter().enumerate().filter(|(_, &s)| s > 0).fold(0u64, |m, (j, _)| m | 1 << j);
        schedule.iter().all(|&s| s <= 1) && (0..self.n).all(|u| mask >> u & 1 == 0 || self.adj[u] & mask == 0)
    }
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn mask_to_vertices(mask: u64) -> Vec<usize> {
    (0..64).filter(|&v| mask >> v & 1 == 1).collect()
}

/// Maximal cliques by Bron–Kerbosch with pivoting. Each clique is a sorted
/// vertex list; the list of cliques is sorted.
pub fn maximal_cliques(g: &InterferenceGraph) -> Vec<Vec<usize>> {
    fn expand(g: &InterferenceGraph, r: u64, mut p: u64, mut x: u64, out: &mut Vec<u64>) {
        if p == 0 {
            if x == 0 {
                out.push(r);
            }
            return;
        }
        let pivot = mask_to_vertices(p | x)
            .into_iter()
            .max_by_key(|&u| ((p & g.adj[u]).count_ones(), std::cmp::Reverse(u)))
            .expect("p is nonempty");
        for v in mask_to_vertices(p & !g.adj[pivot]) {
            let bit = 1u64 << v;
            expand(g, r | bit, p & g.adj[v], x & g.adj[v], out);
            p &= !bit;
            x |= bit;
        }
    }

    let mut found = Vec::new();
    expand(g, 0, full_mask(g.n), 0, &mut found);
    let mut cliques: Vec<Vec<usize>> = found.into_iter().map(mask_to_vertices).collect();
    cliques.sort();
    cliques.dedup();
    cliques
}

/// Clique matrix of `g`: one 0/1 row per maximal clique. For a perfect graph
/// this describes the convex hull of the independent sets exactly.
pub fn cliques_to_polytope(g: &InterferenceGraph) -> Result<CapacityPolytope> {
    if g.n == 0 {
        return Err(Error::EmptyGraph);
    }
    let cliques = maximal_cliques(g);
    let labels = cliques
        .iter()
        .map(|c| {
            let names: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            format!("clique[{}]", names.join(","))
        })
        .collect();
    let rows = cliques
        .iter()
        .map(|c| {
            let mut row = vec![0.0; g.n];
            for &v in c {
                row[v] = 1.0;
            }
            row
        })
        .collect();
    CapacityPolytope::with_labels(rows, labels)
}

/// All independent-set indicator vectors, including the empty schedule,
/// sorted lexicographically (so the zero vector comes first).
pub fn enumerate_schedules(g: &InterferenceGraph, vertex_cap: usize) -> Result<Vec<Schedule>> {
    if g.n > vertex_cap {
        return Err(Error::CapExceeded { what: "schedule enumeration vertex count", limit: vertex_cap, actual: g.n });
    }
    let mut masks = Vec::new();
    // Branch on vertex v: either skip it, or take it and exclude its neighbours.
    fn grow(g: &InterferenceGraph, v: usize, chosen: u64, blocked: u64, out: &mut Vec<u64>) {
        if v == g.n {
            out.push(chosen);
            return;
        }
        grow(g, v + 1, chosen, blocked, out);
        if blocked >> v & 1 == 0 {
            grow(g, v + 1, chosen | 1 << v, blocked | g.adj[v], out);
        }
    }
    grow(g, 0, 0, 0, &mut masks);
    let mut schedules: Vec<Schedule> =
        masks.into_iter().map(|m| (0..g.n).map(|v| (m >> v & 1) as u32).collect()).collect();
    schedules.sort();
    Ok(schedules)
}

/// Brute-force perfection test: no induced odd cycle of length at least five
/// in the graph or its complement.
pub fn is_perfect(g: &InterferenceGraph, vertex_cap: usize) -> Result<bool> {
    if g.n > vertex_cap {
        return Err(Error::CapExceeded { what: "perfect-graph check vertex count", limit: vertex_cap, actual: g.n });
    }
    Ok(!has_odd_hole(g) && !has_odd_hole(&g.complement()))
}

fn has_odd_hole(g: &InterferenceGraph) -> bool {
    let n = g.n;
    if n < 5 {
        return false;
    }
    (0..1u64 << n).any(|mask| {
        let k = mask.count_ones();
        k >= 5 && k % 2 == 1 && is_induced_cycle(g, mask)
    })
}

fn is_induced_cycle(g: &InterferenceGraph, mask: u64) -> bool {
    let vertices = mask_to_vertices(mask);
    if vertices.iter().any(|&v| (g.adj[v] & mask).count_ones() != 2) {
        return false;
    }
    // 2-regular: it is a single cycle iff connected.
    let start = vertices[0];
    let mut seen = 1u64 << start;
    let mut frontier = 1u64 << start;
    while frontier != 0 {
        let mut next = 0;
        for v in mask_to_vertices(frontier) {
            next |= g.adj[v] & mask;
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen == mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> InterferenceGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        InterferenceGraph::new(n, &edges).unwrap()
    }

    fn complete_bipartite(a: usize, b: usize) -> InterferenceGraph {
        let mut edges = Vec::new();
        for u in 0..a {
            for v in 0..b {
                edges.push((u, a + v));
            }
        }
        InterferenceGraph::new(a + b, &edges).unwrap()
    }

    #[test]
    fn four_cycle_cliques_are_edges() {
        let p = cliques_to_polytope(&cycle(4)).unwrap();
        assert_eq!(p.num_pools(), 4);
        for l in 0..4 {
            assert_eq!(p.row(l).iter().sum::<f64>(), 2.0);
        }
    }

    #[test]
    fn k22_cliques_are_its_edges() {
        let g = complete_bipartite(2, 2);
        let cliques = maximal_cliques(&g);
        assert_eq!(cliques, vec![vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]]);
    }

    #[test]
    fn triangle_is_one_pool() {
        let g = InterferenceGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let p = cliques_to_polytope(&g).unwrap();
        assert_eq!(p.num_pools(), 1);
        assert_eq!(p.row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn isolated_vertex_gets_singleton_row() {
        let g = InterferenceGraph::new(3, &[(0, 1)]).unwrap();
        let cliques = maximal_cliques(&g);
        assert_eq!(cliques, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn empty_graph_is_rejected() {
        let g = InterferenceGraph::new(0, &[]).unwrap();
        assert_eq!(cliques_to_polytope(&g).unwrap_err(), Error::EmptyGraph);
    }

    #[test]
    fn schedules_of_small_graphs() {
        let edge = InterferenceGraph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(enumerate_schedules(&edge, 24).unwrap(), vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        let empty = InterferenceGraph::new(2, &[]).unwrap();
        assert_eq!(enumerate_schedules(&empty, 24).unwrap().len(), 4);
        let tri = InterferenceGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = enumerate_schedules(&tri, 24).unwrap();
        assert_eq!(s, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
    }

    #[test]
    fn schedule_cap_is_enforced() {
        let g = InterferenceGraph::new(30, &[]).unwrap();
        assert!(matches!(enumerate_schedules(&g, 24), Err(Error::CapExceeded { limit: 24, actual: 30, .. })));
        assert!(matches!(is_perfect(&g, 16), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn perfection_examples() {
        assert!(!is_perfect(&cycle(5), 16).unwrap());
        assert!(!is_perfect(&cycle(7), 16).unwrap());
        assert!(is_perfect(&cycle(4), 16).unwrap());
        assert!(is_perfect(&cycle(6), 16).unwrap());
        assert!(is_perfect(&complete_bipartite(3, 3), 16).unwrap());
        // complement of C7 has an odd antihole but no odd hole of its own
        assert!(!is_perfect(&cycle(7).complement(), 16).unwrap());
    }

    #[test]
    fn bad_edges_are_rejected() {
        assert!(InterferenceGraph::new(2, &[(0, 0)]).is_err());
        assert!(InterferenceGraph::new(2, &[(0, 1), (1, 0)]).is_err());
        assert!(InterferenceGraph::new(2, &[(0, 2)]).is_err());
    }
}
