use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CapacityPolytope, NetworkSpec};

/// Per-queue packet counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct QueueVector(pub Vec<u32>);

impl QueueVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&q| q as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&q| q == 0)
    }

    pub fn scaled(&self, c: u32) -> Self {
        Self(self.0.iter().map(|&q| q * c).collect())
    }

    /// `Q - e_j`, or `None` when `Q_j = 0`.
    pub fn minus_unit(&self, j: usize) -> Option<Self> {
        let mut v = self.0.clone();
        v[j] = v[j].checked_sub(1)?;
        Some(Self(v))
    }

    pub fn plus_unit(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        v[j] += 1;
        Self(v)
    }
}

impl Deref for QueueVector {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for QueueVector {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[u32; N]> for QueueVector {
    fn from(v: [u32; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Route indices of the packets in each queue, front of the queue first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FifoContents(pub Vec<Vec<usize>>);

impl FifoContents {
    pub fn empty(num_queues: usize) -> Self {
        Self(vec![Vec::new(); num_queues])
    }

    pub fn queue_vector(&self) -> QueueVector {
        QueueVector(self.0.iter().map(|q| q.len() as u32).collect())
    }

    /// Packets of `route` in `queue` (the final value of the cumulative count).
    pub fn count(&self, queue: usize, route: usize) -> usize {
        self.0[queue].iter().filter(|&&r| r == route).count()
    }

    /// Cumulative per-route counts along queue `j`: entry `[k][r]` counts
    /// route-`r` packets among the first `k + 1` positions.
    pub fn cumulative_counts(&self, queue: usize, num_routes: usize) -> Vec<Vec<u32>> {
        let mut running = vec![0u32; num_routes];
        self.0[queue]
            .iter()
            .map(|&r| {
                running[r] += 1;
                running.clone()
            })
            .collect()
    }

    /// Every packet's route visits the queue holding it.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.0.len() != spec.num_queues() {
            return Err(Error::DimensionMismatch {
                what: "FIFO contents queue count",
                expected: spec.num_queues(),
                actual: self.0.len(),
            });
        }
        for (j, queue) in self.0.iter().enumerate() {
            for &r in queue {
                let ok = spec.routes().get(r).is_some_and(|route| route.visits(j));
                if !ok {
                    return Err(Error::InvalidNetwork(format!(
                        "queue {} holds a packet of route index {r}, which does not visit it",
                        spec.queues()[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Index<usize> for FifoContents {
    type Output = Vec<usize>;

    fn index(&self, j: usize) -> &Vec<usize> {
        &self.0[j]
    }
}

/// Queue lengths together with the order of route labels inside each queue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    pub fifo: FifoContents,
}

impl NetworkState {
    pub fn empty(num_queues: usize) -> Self {
        Self { fifo: FifoContents::empty(num_queues) }
    }

    pub fn queues(&self) -> QueueVector {
        self.fifo.queue_vector()
    }
}

/// Per-pool, per-class counts `m_lj` of the auxiliary closed network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolOccupancy {
    /// `counts[l][j]`; zero whenever queue `j` is not in pool `l`.
    pub counts: Vec<Vec<u32>>,
}

impl PoolOccupancy {
    pub fn pool_total(&self, pool: usize) -> u32 {
        self.counts[pool].iter().sum()
    }

    /// `Q_j = Σ_{l∋j} m_lj`.
    pub fn aggregate(&self) -> QueueVector {
        let n = self.counts.first().map_or(0, Vec::len);
        let mut q = vec![0u32; n];
        for row in &self.counts {
            for (j, &m) in row.iter().enumerate() {
                q[j] += m;
            }
        }
        QueueVector(q)
    }

    pub fn respects(&self, polytope: &CapacityPolytope) -> bool {
        self.counts.len() == polytope.num_pools()
            && self.counts.iter().enumerate().all(|(l, row)| {
                row.len() == polytope.num_queues()
                    && row.iter().enumerate().all(|(j, &m)| m == 0 || polytope.contains(l, j))
            })
    }
}

/// Per-queue service rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation(pub Vec<f64>);

impl Deref for Allocation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}
