//! Queues, fixed routes, schedule sets and the capacity polytope.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, InterferenceGraph};

/// Integer service vector; one entry per queue.
pub type Schedule = Vec<u32>;

/// Tolerance for the numerical row-rank check of the constraint matrix.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Cap on the number of lattice schedules enumerated from a constraint matrix.
pub const MAX_LATTICE_SCHEDULES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    /// Queue indices in visiting order.
    pub path: Vec<usize>,
    /// Poisson arrival rate (packets per unit time, or mean packets per slot).
    pub rate: f64,
}

impl Route {
    pub fn new(id: impl Into<String>, path: Vec<usize>, rate: f64) -> Self {
        Self { id: id.into(), path, rate }
    }

    pub fn visits(&self, queue: usize) -> bool {
        self.path.contains(&queue)
    }

    /// Position of `queue` on the route, if visited.
    pub fn hop_of(&self, queue: usize) -> Option<usize> {
        self.path.iter().position(|&q| q == queue)
    }
}

/// Nonnegative constraint matrix `A` (pools × queues); the polytope is
/// `{ s >= 0 : A s <= 1 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPolytope {
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
    num_queues: usize,
}

impl CapacityPolytope {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..rows.len()).map(|l| format!("pool{l}")).collect();
        Self::with_labels(rows, labels)
    }

    pub fn with_labels(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidNetwork("constraint matrix has no rows".into()));
        }
        if labels.len() != rows.len() {
            return Err(Error::DimensionMismatch { what: "pool labels", expected: rows.len(), actual: labels.len() });
        }
        let num_queues = rows[0].len();
        for row in &rows {
            if row.len() != num_queues {
                return Err(Error::DimensionMismatch {
                    what: "constraint matrix row",
                    expected: num_queues,
                    actual: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "constraint matrix entries must be finite and nonnegative, found {v}"
                )));
            }
        }
        for j in 0..num_queues {
            if rows.iter().all(|row| row[j] == 0.0) {
                return Err(Error::InvalidNetwork(format!("queue {j} belongs to no resource pool (zero column)")));
            }
        }
        Ok(Self { rows, labels, num_queues })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|l| (0..n).map(|j| if j == l { 1.0 } else { 0.0 }).collect()).collect();
        Self::new(rows).expect("identity is a valid constraint matrix")
    }

    pub fn num_pools(&self) -> usize {
        self.rows.len()
    }

    pub fn num_queues(&self) -> usize {
        self.num_queues
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, pool: usize) -> &[f64] {
        &self.rows[pool]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn entry(&self, pool: usize, queue: usize) -> f64 {
        self.rows[pool][queue]
    }

    /// `j ∈ l` iff `A[l][j] > 0`.
    pub fn contains(&self, pool: usize, queue: usize) -> bool {
        self.rows[pool][queue] > 0.0
    }

    /// `(queue, A[l][queue])` for the members of pool `l`.
    pub fn members(&self, pool: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[pool].iter().copied().enumerate().filter(|&(_, a)| a > 0.0)
    }

    pub fn pools_of(&self, queue: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows.len()).filter(move |&l| self.contains(l, queue))
    }

    pub fn shares_pool(&self, a: usize, b: usize) -> bool {
        (0..self.rows.len()).any(|l| self.contains(l, a) && self.contains(l, b))
    }

    /// `A s`.
    pub fn usage(&self, s: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().zip(s).map(|(a, x)| a * x).sum()).collect()
    }

    pub fn contains_point(&self, s: &[f64], tol: f64) -> bool {
        s.iter().all(|&x| x >= -tol) && self.usage(s).iter().all(|&u| u <= 1.0 + tol)
    }

    pub fn has_full_row_rank(&self) -> bool {
        let m = DMatrix::from_fn(self.num_pools(), self.num_queues, |l, j| self.rows[l][j]);
        m.rank(RANK_TOLERANCE) == self.num_pools()
    }

    /// Integer points of the polytope (all schedules it admits).
    pub fn lattice_schedules(&self, vertex_cap: usize) -> Result<Vec<Schedule>> {
        let n = self.num_queues;
        if n > vertex_cap {
            return Err(Error::CapExceeded { what: "schedule enumeration queue count", limit: vertex_cap, actual: n });
        }
        let bound: Vec<u32> = (0..n)
            .map(|j| {
                let amax = self.rows.iter().map(|r| r[j]).fold(0.0, f64::max);
                (1.0 / amax + 1e-9).floor() as u32
            })
            .collect();
        let mut out = Vec::new();
        let mut current = vec![0u32; n];
        let mut usage = vec![0.0; self.num_pools()];
        self.grow_lattice(0, &bound, &mut current, &mut usage, &mut out)?;
        out.sort();
        Ok(out)
    }

    fn grow_lattice(
        &self,
        j: usize,
        bound: &[u32],
        current: &mut Schedule,
        usage: &mut [f64],
        out: &mut Vec<Schedule>,
    ) -> Result<()> {
        if j == self.num_queues {
            if out.len() >= MAX_LATTICE_SCHEDULES {
                return Err(Error::CapExceeded {
                    what: "lattice schedule count",
                    limit: MAX_LATTICE_SCHEDULES,
                    actual: out.len() + 1,
                });
            }
            out.push(current.clone());
            return Ok(());
        }
        for k in 0..=bound[j] {
            let fits = (0..usage.len()).all(|l| usage[l] + self.rows[l][j] * k as f64 <= 1.0 + 1e-9);
            if !fits {
                break;
            }
            for (l, u) in usage.iter_mut().enumerate() {
                *u += self.rows[l][j] * k as f64;
            }
            current[j] = k;
            let r = self.grow_lattice(j + 1, bound, current, usage, out);
            for (l, u) in usage.iter_mut().enumerate() {
                *u -= self.rows[l][j] * k as f64;
            }
            r?;
        }
        current[j] = 0;
        Ok(())
    }
}

/// How the schedule set is described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Capacity {
    Matrix(CapacityPolytope),
    Graph(InterferenceGraph),
    Schedules(Vec<Schedule>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    queues: Vec<String>,
    routes: Vec<Route>,
    capacity: Capacity,
}

impl NetworkSpec {
    pub fn new(queues: Vec<String>, routes: Vec<Route>, capacity: Capacity) -> Result<Self> {
        let n = queues.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("network has no queues".into()));
        }
        for (i, q) in queues.iter().enumerate() {
            if queues[..i].contains(q) {
                return Err(Error::InvalidNetwork(format!("duplicate queue name {q:?}")));
            }
        }
        for (i, r) in routes.iter().enumerate() {
            if routes[..i].iter().any(|o| o.id == r.id) {
                return Err(Error::InvalidNetwork(format!("duplicate route id {:?}", r.id)));
            }
            if r.path.is_empty() {
                return Err(Error::InvalidNetwork(format!("route {:?} is empty", r.id)));
            }
            if let Some(&q) = r.path.iter().find(|&&q| q >= n) {
                return Err(Error::InvalidNetwork(format!("route {:?} references unknown queue index {q}", r.id)));
            }
            for (k, q) in r.path.iter().enumerate() {
                if r.path[..k].contains(q) {
                    return Err(Error::InvalidNetwork(format!(
                        "route {:?} visits queue {:?} more than once",
                        r.id, queues[*q]
                    )));
                }
            }
            if !(r.rate.is_finite() && r.rate > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "route {:?} must have a positive arrival rate, got {}",
                    r.id, r.rate
                )));
            }
        }
        match &capacity {
            Capacity::Matrix(p) if p.num_queues() != n => {
                return Err(Error::DimensionMismatch {
                    what: "constraint matrix columns",
                    expected: n,
                    actual: p.num_queues(),
                })
            }
            Capacity::Graph(g) if g.num_vertices() != n => {
                return Err(Error::DimensionMismatch {
                    what: "interference graph vertices",
                    expected: n,
                    actual: g.num_vertices(),
                })
            }
            Capacity::Schedules(list) => {
                if let Some(s) = list.iter().find(|s| s.len() != n) {
                    return Err(Error::DimensionMismatch { what: "schedule length", expected: n, actual: s.len() });
                }
            }
            _ => {}
        }
        Ok(Self { queues, routes, capacity })
    }

    pub fn queues(&self) -> &[String] {
        &self.queues
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn capacity(&self) -> &Capacity {
        &self.capacity
    }

    pub fn queue_index(&self, name: &str) -> Option<usize> {
        self.queues.iter().position(|q| q == name)
    }

    pub fn route_index(&self, id: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.id == id)
    }

    /// Indices of routes visiting `queue`, ascending.
    pub fn routes_through(&self, queue: usize) -> Vec<usize> {
        (0..self.routes.len()).filter(|&r| self.routes[r].visits(queue)).collect()
    }

    /// Queue after `queue` on route `route`; `None` at the last hop.
    pub fn next_queue(&self, route: usize, queue: usize) -> Option<usize> {
        let path = &self.routes[route].path;
        let k = path.iter().position(|&q| q == queue)?;
        path.get(k + 1).copied()
    }

    /// `a_j = Σ_{r ∋ j} a_r`.
    pub fn queue_loads(&self) -> Vec<f64> {
        let mut loads = vec![0.0; self.num_queues()];
        for r in &self.routes {
            for &q in &r.path {
                loads[q] += r.rate;
            }
        }
        loads
    }

    /// Facet description of the capacity region.
    pub fn polytope(&self) -> Result<CapacityPolytope> {
        match &self.capacity {
            Capacity::Matrix(p) => Ok(p.clone()),
            Capacity::Graph(g) => graph::cliques_to_polytope(g),
            Capacity::Schedules(_) => Err(Error::Unsupported(
                "a schedule-list capacity has no facet description; supply the capacity as a \
                 constraint matrix or an interference graph"
                    .into(),
            )),
        }
    }

    /// The integer schedule set `S`.
    pub fn schedules(&self, vertex_cap: usize) -> Result<Vec<Schedule>> {
        match &self.capacity {
            Capacity::Matrix(p) => p.lattice_schedules(vertex_cap),
            Capacity::Graph(g) => graph::enumerate_schedules(g, vertex_cap),
            Capacity::Schedules(list) => {
                let mut list = list.clone();
                if !list.iter().any(|s| s.iter().all(|&x| x == 0)) {
                    list.push(vec![0; self.num_queues()]);
                }
                list.sort();
                list.dedup();
                Ok(list)
            }
        }
    }

    /// Same network with every arrival rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let routes = self.routes.iter().map(|r| Route::new(r.id.clone(), r.path.clone(), r.rate * factor)).collect();
        Self::new(self.queues.clone(), routes, self.capacity.clone())
    }

    /// Rescales arrival rates so the most loaded pool carries `target`.
    pub fn with_max_pool_load(&self, target: f64) -> Result<Self> {
        let polytope = self.polytope()?;
        let loads = compute_loads(self, &polytope)?;
        let max = loads.pool_loads.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Ok(self.clone());
        }
        self.scaled(target / max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub queue_loads: Vec<f64>,
    pub pool_loads: Vec<f64>,
    pub admissible: bool,
}

impl LoadProfile {
    /// Errors with the first pool whose load is at least one.
    pub fn require_admissible(&self) -> Result<()> {
        match self.pool_loads.iter().position(|&a| a >= 1.0) {
            Some(pool) => Err(Error::Inadmissible { pool, load: self.pool_loads[pool] }),
            None => Ok(()),
        }
    }
}

/// Queue loads `a_j` and pool loads `a_l = Σ_{j∈l} A_lj a_j`.
pub fn compute_loads(spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<LoadProfile> {
    if polytope.num_queues() != spec.num_queues() {
        return Err(Error::DimensionMismatch {
            what: "polytope queue count",
            expected: spec.num_queues(),
            actual: polytope.num_queues(),
        });
    }
    let queue_loads = spec.queue_loads();
    let pool_loads = polytope.usage(&queue_loads);
    let admissible = pool_loads.iter().all(|&a| a < 1.0);
    Ok(LoadProfile { queue_loads, pool_loads, admissible })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("q{i}")).collect()
    }

    fn single_pool(rates: (f64, f64)) -> NetworkSpec {
        NetworkSpec::new(
            names(2),
            vec![Route::new("r1", vec![0], rates.0), Route::new("r2", vec![1], rates.1)],
            Capacity::Matrix(CapacityPolytope::new(vec![vec![1.0, 1.0]]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn loads_single_pool() {
        let spec = single_pool((0.2, 0.3));
        let loads = compute_loads(&spec, &spec.polytope().unwrap()).unwrap();
        assert_eq!(loads.queue_loads, vec![0.2, 0.3]);
        assert!((loads.pool_loads[0] - 0.5).abs() < 1e-15);
        assert!(loads.admissible);
    }

    #[test]
    fn loads_tandem() {
        let spec = NetworkSpec::new(
            names(2),
            vec![Route::new("r", vec![0, 1], 0.5)],
            Capacity::Matrix(CapacityPolytope::identity(2)),
        )
        .unwrap();
        let loads = compute_loads(&spec, &spec.polytope().unwrap()).unwrap();
        assert_eq!(loads.queue_loads, vec![0.5, 0.5]);
        assert_eq!(loads.pool_loads, vec![0.5, 0.5]);
        assert!(loads.admissible);
    }

    #[test]
    fn overloaded_pool_is_flagged() {
        let spec = single_pool((0.6, 0.5));
        let loads = compute_loads(&spec, &spec.polytope().unwrap()).unwrap();
        assert!((loads.pool_loads[0] - 1.1).abs() < 1e-12);
        assert!(!loads.admissible);
        assert!(matches!(loads.require_admissible(), Err(Error::Inadmissible { pool: 0, .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let spec = single_pool((0.2, 0.3));
        let p = CapacityPolytope::identity(3);
        assert!(matches!(compute_loads(&spec, &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn route_validation() {
        let cap = || Capacity::Matrix(CapacityPolytope::identity(2));
        assert!(NetworkSpec::new(names(2), vec![Route::new("r", vec![0, 0], 0.1)], cap()).is_err());
        assert!(NetworkSpec::new(names(2), vec![Route::new("r", vec![], 0.1)], cap()).is_err());
        assert!(NetworkSpec::new(names(2), vec![Route::new("r", vec![2], 0.1)], cap()).is_err());
        assert!(NetworkSpec::new(names(2), vec![Route::new("r", vec![0], 0.0)], cap()).is_err());
        assert!(NetworkSpec::new(names(2), vec![], cap()).is_ok());
    }

    #[test]
    fn zero_column_is_rejected() {
        assert!(CapacityPolytope::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(CapacityPolytope::new(vec![vec![1.0, -1.0]]).is_err());
    }

    #[test]
    fn rank_check() {
        assert!(CapacityPolytope::identity(3).has_full_row_rank());
        let k22 = CapacityPolytope::new(vec![
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(!k22.has_full_row_rank());
    }

    #[test]
    fn lattice_schedules_match_matrix() {
        let single = CapacityPolytope::new(vec![vec![1.0, 1.0]]).unwrap();
        assert_eq!(single.lattice_schedules(24).unwrap(), vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert_eq!(CapacityPolytope::identity(4).lattice_schedules(24).unwrap().len(), 16);
        let half = CapacityPolytope::new(vec![vec![0.5]]).unwrap();
        assert_eq!(half.lattice_schedules(24).unwrap(), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn max_pool_load_rescaling() {
        let spec = single_pool((0.2, 0.3)).with_max_pool_load(0.8).unwrap();
        let loads = compute_loads(&spec, &spec.polytope().unwrap()).unwrap();
        assert!((loads.pool_loads[0] - 0.8).abs() < 1e-12);
    }
}
