//! Large-deviation rate of the Store-Forward stationary law for piecewise
//! linear queue profiles, and the scaling limit of `ln Φ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CapacityPolytope, NetworkSpec};
use crate::phi::PhiCache;
use crate::propfair::pf_solve_weighted;
use crate::sim::TraceMetrics;
use crate::state::{FifoContents, QueueVector};
use crate::stats::least_squares;

const PROFILE_TOLERANCE: f64 = 1e-9;

/// Queue contents described stage by stage: in stage `k`, queue `j` grows by
/// `Q_j(k+1) - Q_j(k)` packets whose routes have proportions `Γ'_jr(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearProfile {
    /// `breakpoints[j][k]`, `k = 0..=K`, starting at zero.
    pub breakpoints: Vec<Vec<f64>>,
    /// `gradients[j][k][r]`, `k = 0..K`.
    pub gradients: Vec<Vec<Vec<f64>>>,
}

impl PiecewiseLinearProfile {
    pub fn stages(&self) -> usize {
        self.breakpoints.first().map_or(0, |b| b.len().saturating_sub(1))
    }

    /// `Q_j(K)` for every queue.
    pub fn endpoint(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| *b.last().unwrap_or(&0.0)).collect()
    }

    /// One stage per queue with the stationary composition `a_r / a_j`.
    pub fn stationary(q: &[f64], spec: &NetworkSpec) -> Result<Self> {
        let loads = spec.queue_loads();
        let num_routes = spec.routes().len();
        let mut gradients = Vec::with_capacity(q.len());
        for j in 0..q.len() {
            let mut g = vec![0.0; num_routes];
            if loads[j] > 0.0 {
                for r in spec.routes_through(j) {
                    g[r] = spec.routes()[r].rate / loads[j];
                }
            } else if q[j] > 0.0 {
                return Err(Error::ProfileMismatch(format!(
                    "queue {} carries no route but has content {}",
                    spec.queues()[j],
                    q[j]
                )));
            }
            gradients.push(vec![g]);
        }
        Ok(Self { breakpoints: q.iter().map(|&v| vec![0.0, v]).collect(), gradients })
    }

    /// Empirical profile of queue contents: each queue is cut into stages of
    /// `stage_len` packets from the front (a single stage when `None`), and
    /// each stage's gradient is its route composition. Queues with fewer
    /// stages are padded with empty ones.
    pub fn from_fifo(fifo: &FifoContents, num_routes: usize, stage_len: Option<usize>) -> Self {
        let chunks: Vec<Vec<&[usize]>> = fifo
            .0
            .iter()
            .map(|queue| match stage_len {
                Some(len) if len > 0 => queue.chunks(len).collect(),
                _ if queue.is_empty() => Vec::new(),
                _ => vec![queue.as_slice()],
            })
            .collect();
        let k = chunks.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let mut breakpoints = Vec::with_capacity(chunks.len());
        let mut gradients = Vec::with_capacity(chunks.len());
        for stages in &chunks {
            let mut b = vec![0.0];
            let mut g = Vec::with_capacity(k);
            for i in 0..k {
                let mut comp = vec![0.0; num_routes];
                let len = stages.get(i).map_or(0, |s| s.len());
                if let Some(stage) = stages.get(i) {
                    for &r in *stage {
                        comp[r] += 1.0 / len as f64;
                    }
                }
                b.push(b[i] + len as f64);
                g.push(comp);
            }
            breakpoints.push(b);
            gradients.push(g);
        }
        Self { breakpoints, gradients }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let n = spec.num_queues();
        let num_routes = spec.routes().len();
        if self.breakpoints.len() != n || self.gradients.len() != n {
            return Err(Error::ProfileMismatch(format!("profile must cover {n} queues")));
        }
        let k = self.stages();
        for j in 0..n {
            let b = &self.breakpoints[j];
            let g = &self.gradients[j];
            if b.len() != k + 1 || g.len() != k {
                return Err(Error::ProfileMismatch(format!("queue {j} has the wrong number of stages")));
            }
            if b[0] != 0.0 || b.windows(2).any(|w| !(w[1] >= w[0])) {
                return Err(Error::ProfileMismatch(format!(
                    "breakpoints of queue {j} must start at 0 and be nondecreasing"
                )));
            }
            for (stage, grad) in g.iter().enumerate() {
                if grad.len() != num_routes {
                    return Err(Error::ProfileMismatch(format!("gradient of queue {j} has the wrong length")));
                }
                for (r, &v) in grad.iter().enumerate() {
                    if !(v >= 0.0) || (v > 0.0 && !spec.routes()[r].visits(j)) {
                        return Err(Error::ProfileMismatch(format!(
                            "gradient of route {r} at queue {j} must be nonnegative and vanish off the route"
                        )));
                    }
                }
                let total: f64 = grad.iter().sum();
                if b[stage + 1] > b[stage] && (total - 1.0).abs() > PROFILE_TOLERANCE {
                    return Err(Error::ProfileMismatch(format!(
                        "gradients of queue {j} in stage {stage} sum to {total}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rate `I(Q, Γ) = max_{σ∈⟨S⟩} Σ_j Q_j ln σ_j
///   + Σ_j Σ_k Σ_r ΔQ_j(k) Γ'_jr(k) ln(Γ'_jr(k) / a_r)`, with `0 ln 0 = 0`.
pub fn ldp_rate(
    q: &[f64],
    profile: &PiecewiseLinearProfile,
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
) -> Result<f64> {
    profile.validate(spec)?;
    let end = profile.endpoint();
    if q.len() != end.len() || q.iter().zip(&end).any(|(a, b)| (a - b).abs() > PROFILE_TOLERANCE * a.abs().max(1.0)) {
        return Err(Error::ProfileMismatch(format!("Q = {q:?} does not match the profile endpoint {end:?}")));
    }
    if q.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let pf = pf_solve_weighted(q, polytope)?;
    let mut entropy = 0.0;
    for j in 0..q.len() {
        let b = &profile.breakpoints[j];
        for (k, grad) in profile.gradients[j].iter().enumerate() {
            let dq = b[k + 1] - b[k];
            if dq == 0.0 {
                continue;
            }
            for (r, &g) in grad.iter().enumerate() {
                if g > 0.0 {
                    entropy += dq * g * (g / spec.routes()[r].rate).ln();
                }
            }
        }
    }
    Ok(pf.objective + entropy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPhiLimit {
    /// `(c, (1/c) ln Φ(cQ))`.
    pub values: Vec<(u32, f64)>,
    /// `-max_{σ∈⟨S⟩} Σ_j Q_j ln σ_j`.
    pub target: f64,
    pub gaps: Vec<f64>,
    pub last_gap: f64,
    /// Gaps never increase along the scale list.
    pub decreasing: bool,
}

/// `(1/c) ln Φ(cQ)` along `c_list` against its proportional-fair limit.
pub fn phi_log_limit(q: &QueueVector, polytope: &CapacityPolytope, c_list: &[u32]) -> Result<LogPhiLimit> {
    if q.len() != polytope.num_queues() {
        return Err(Error::DimensionMismatch {
            what: "queue vector length",
            expected: polytope.num_queues(),
            actual: q.len(),
        });
    }
    let target = if q.is_zero() {
        0.0
    } else {
        let w: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        -pf_solve_weighted(&w, polytope)?.objective
    };
    let mut cache = PhiCache::new(polytope);
    let mut values = Vec::with_capacity(c_list.len());
    for &c in c_list {
        if c == 0 {
            return Err(Error::Config("scale factors must be positive".into()));
        }
        values.push((c, cache.log_phi(&q.scaled(c)) / c as f64));
        cache.clear();
    }
    let gaps: Vec<f64> = values.iter().map(|(_, v)| (v - target).abs()).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(LogPhiLimit { last_gap: gaps.last().copied().unwrap_or(0.0), values, target, gaps, decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
}

/// Rate function evaluated on the empirical profile at each checkpoint of a
/// trace, with a least-squares trend.
pub fn lyapunov_drift(
    trace: &TraceMetrics,
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    stage_len: Option<usize>,
) -> Result<DriftReport> {
    if trace.checkpoints.is_empty() {
        return Err(Error::NoData("trace has no checkpoints"));
    }
    let num_routes = spec.routes().len();
    let mut times = Vec::with_capacity(trace.checkpoints.len());
    let mut values = Vec::with_capacity(trace.checkpoints.len());
    for cp in &trace.checkpoints {
        let profile = PiecewiseLinearProfile::from_fifo(&cp.fifo, num_routes, stage_len);
        let q: Vec<f64> = cp.fifo.0.iter().map(|f| f.len() as f64).collect();
        times.push(cp.time);
        values.push(ldp_rate(&q, &profile, spec, polytope)?);
    }
    let fit = least_squares(&times, &values)?;
    Ok(DriftReport { times, values, slope: fit.slope, slope_stderr: fit.slope_stderr })
}
