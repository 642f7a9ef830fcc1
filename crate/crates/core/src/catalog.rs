//! Bundled example networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_perfect, InterferenceGraph, DEFAULT_PERFECT_VERTEX_CAP};
use crate::network::{Capacity, CapacityPolytope, NetworkSpec, Route};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub num_queues: usize,
    pub num_routes: usize,
    /// Perfection of the interference graph; `None` for matrix capacities.
    pub perfect: Option<bool>,
}

type Builder = fn() -> Result<NetworkSpec>;

const EXAMPLES: &[(&str, &str, Builder)] = &[
    ("mm1", "single queue, single pool, load 0.5", mm1),
    ("tandem", "two decoupled queues in series, one route at rate 0.5", tandem),
    ("single-pool", "two single-hop routes (0.2, 0.3) sharing one pool", single_pool),
    ("single-pool-route", "one two-hop route at rate 0.3 through a shared pool", single_pool_route),
    ("merge", "a two-hop route merging with a single-hop route in one pool", merge),
    ("tandem4", "four decoupled queues in series, one route at load 0.8", tandem4),
    ("one-edge", "two interfering queues with single-hop routes at 0.3", one_edge),
    ("triangle", "three mutually interfering queues", triangle),
    ("k22", "complete bipartite interference graph (2x2 input-queued switch)", k22),
    ("four-cycle", "square of four queues, each interfering with its two neighbours", four_cycle),
    ("grid-3x3", "3x3 square grid interference graph", grid_3x3),
    ("triangular-grid", "3x3 triangular grid interference graph", triangular_grid),
    ("odd-cycle-5", "five-cycle interference graph (not perfect)", odd_cycle_5),
];

pub fn example_names() -> Vec<&'static str> {
    EXAMPLES.iter().map(|e| e.0).collect()
}

pub fn example(name: &str) -> Result<NetworkSpec> {
    let (_, _, build) = EXAMPLES
        .iter()
        .find(|e| e.0 == name)
        .ok_or_else(|| Error::Config(format!("unknown example {name:?}; known: {}", example_names().join(", "))))?;
    build()
}

pub fn list_examples() -> Result<Vec<ExampleInfo>> {
    EXAMPLES
        .iter()
        .map(|&(name, description, build)| {
            let spec = build()?;
            let perfect = match spec.capacity() {
                Capacity::Graph(g) => Some(is_perfect(g, DEFAULT_PERFECT_VERTEX_CAP)?),
                _ => None,
            };
            Ok(ExampleInfo {
                name,
                description,
                num_queues: spec.num_queues(),
                num_routes: spec.routes().len(),
                perfect,
            })
        })
        .collect()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> Result<Capacity> {
    Ok(Capacity::Matrix(CapacityPolytope::new(rows)?))
}

fn graph(n: usize, edges: &[(usize, usize)]) -> Result<Capacity> {
    Ok(Capacity::Graph(InterferenceGraph::new(n, edges)?))
}

fn mm1() -> Result<NetworkSpec> {
    NetworkSpec::new(names("q", 1), vec![Route::new("r1", vec![0], 0.5)], matrix(vec![vec![1.0]])?)
}

fn tandem() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 2),
        vec![Route::new("r1", vec![0, 1], 0.5)],
        Capacity::Matrix(CapacityPolytope::identity(2)),
    )
}

fn single_pool() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 2),
        vec![Route::new("r1", vec![0], 0.2), Route::new("r2", vec![1], 0.3)],
        matrix(vec![vec![1.0, 1.0]])?,
    )
}

fn single_pool_route() -> Result<NetworkSpec> {
    NetworkSpec::new(names("q", 2), vec![Route::new("r1", vec![0, 1], 0.3)], matrix(vec![vec![1.0, 1.0]])?)
}

fn merge() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 2),
        vec![Route::new("r1", vec![0, 1], 0.2), Route::new("r2", vec![1], 0.3)],
        matrix(vec![vec![1.0, 1.0]])?,
    )
}

fn tandem4() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 4),
        vec![Route::new("r1", vec![0, 1, 2, 3], 0.8)],
        Capacity::Matrix(CapacityPolytope::identity(4)),
    )
}

fn one_edge() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 2),
        vec![Route::new("r1", vec![0], 0.3), Route::new("r2", vec![1], 0.3)],
        graph(2, &[(0, 1)])?,
    )
}

fn triangle() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 3),
        vec![Route::new("r1", vec![0, 1], 0.15), Route::new("r2", vec![2], 0.2)],
        graph(3, &[(0, 1), (1, 2), (0, 2)])?,
    )
}

fn k22() -> Result<NetworkSpec> {
    // Left vertices l1, l2 and right vertices r1, r2.
    NetworkSpec::new(
        vec!["l1".into(), "l2".into(), "r1".into(), "r2".into()],
        vec![
            Route::new("p1", vec![0, 2], 0.15),
            Route::new("p2", vec![1, 3], 0.15),
            Route::new("p3", vec![2, 1], 0.15),
        ],
        graph(4, &[(0, 2), (0, 3), (1, 2), (1, 3)])?,
    )
}

fn four_cycle() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 4),
        vec![
            Route::new("r1", vec![0, 2], 0.2),
            Route::new("r2", vec![1], 0.25),
            Route::new("r3", vec![2], 0.1),
            Route::new("r4", vec![3], 0.25),
        ],
        graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])?,
    )
}

/// Vertex index of cell `(row, col)` in a 3x3 grid.
fn cell(row: usize, col: usize) -> usize {
    3 * row + col
}

fn grid_names() -> Vec<String> {
    (1..=3).flat_map(|r| (1..=3).map(move |c| format!("g{r}{c}"))).collect()
}

fn grid_edges(diagonals: bool) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            if c + 1 < 3 {
                edges.push((cell(r, c), cell(r, c + 1)));
            }
            if r + 1 < 3 {
                edges.push((cell(r, c), cell(r + 1, c)));
            }
            if diagonals && r + 1 < 3 && c + 1 < 3 {
                edges.push((cell(r, c), cell(r + 1, c + 1)));
            }
        }
    }
    edges
}

fn grid_routes(single: f64, through: f64) -> Vec<Route> {
    let mut routes: Vec<Route> =
        (0..9).map(|v| Route::new(format!("s{}{}", v / 3 + 1, v % 3 + 1), vec![v], single)).collect();
    routes.push(Route::new("row2", vec![cell(1, 0), cell(1, 1), cell(1, 2)], through));
    routes
}

fn grid_3x3() -> Result<NetworkSpec> {
    NetworkSpec::new(grid_names(), grid_routes(0.15, 0.1), graph(9, &grid_edges(false))?)
}

fn triangular_grid() -> Result<NetworkSpec> {
    NetworkSpec::new(grid_names(), grid_routes(0.1, 0.05), graph(9, &grid_edges(true))?)
}

fn odd_cycle_5() -> Result<NetworkSpec> {
    NetworkSpec::new(
        names("q", 5),
        (0..5).map(|i| Route::new(format!("r{}", i + 1), vec![i], 0.2)).collect(),
        graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::compute_loads;

    #[test]
    fn every_example_builds_and_is_admissible() {
        for name in example_names() {
            let spec = example(name).unwrap();
            let loads = compute_loads(&spec, &spec.polytope().unwrap()).unwrap();
            assert!(loads.admissible, "{name}: {:?}", loads.pool_loads);
        }
    }

    #[test]
    fn perfection_flags() {
        let list = list_examples().unwrap();
        let flag = |n: &str| list.iter().find(|e| e.name == n).unwrap().perfect;
        assert_eq!(flag("odd-cycle-5"), Some(false));
        assert_eq!(flag("k22"), Some(true));
        assert_eq!(flag("grid-3x3"), Some(true));
        assert_eq!(flag("triangular-grid"), Some(true));
        assert_eq!(flag("four-cycle"), Some(true));
        assert_eq!(flag("tandem"), None);
    }

    #[test]
    fn unknown_example() {
        assert!(matches!(example("nope"), Err(Error::Config(_))));
    }
}
