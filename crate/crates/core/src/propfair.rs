//! Proportional-fair allocation over the capacity polytope, its relation to the
//! Store-Forward allocation, and decomposition of a fractional allocation into
//! a distribution over integer schedules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp;
use crate::network::{CapacityPolytope, Schedule};
use crate::phi::PhiCache;
use crate::state::QueueVector;
use crate::storeforward::sf_allocation;

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITERATIONS: usize = 100_000;
/// Largest tolerated deviation of a decomposition's mean from its target.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    /// Maximizer `s*`; zero on queues with zero weight.
    pub allocation: Vec<f64>,
    /// `Σ_{j: Q_j > 0} Q_j ln s*_j`.
    pub objective: f64,
    /// Pool prices `p_l` with `Q_j / s*_j = Σ_l p_l A_lj`.
    pub prices: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Maximizes `Σ_j Q_j ln s_j` over `A s <= 1, s >= 0`.
pub fn pf_solve(q: &QueueVector, polytope: &CapacityPolytope) -> Result<PfSolution> {
    let w: Vec<f64> = q.iter().map(|&x| x as f64).collect();
    pf_solve_weighted(&w, polytope)
}

/// Same as [`pf_solve`] for real nonnegative weights.
pub fn pf_solve_weighted(weights: &[f64], polytope: &CapacityPolytope) -> Result<PfSolution> {
    if weights.len() != polytope.num_queues() {
        return Err(Error::DimensionMismatch {
            what: "weight vector length",
            expected: polytope.num_queues(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidNetwork("weights must be finite and nonnegative".into()));
    }
    let scale: f64 = weights.iter().sum();
    if scale == 0.0 {
        return Err(Error::NoData("proportional-fair weights are all zero"));
    }
    let w: Vec<f64> = weights.iter().map(|x| x / scale).collect();
    let dual = DualProblem::new(&w, polytope);
    let (prices, residual, iterations) = dual.minimize()?;

    let u = dual.loads_on_queues(&prices);
    let allocation: Vec<f64> = (0..w.len()).map(|j| if w[j] > 0.0 { w[j] / u[j] } else { 0.0 }).collect();
    let objective = weights.iter().zip(&allocation).filter(|(&wj, _)| wj > 0.0).map(|(wj, s)| wj * s.ln()).sum();
    Ok(PfSolution {
        allocation,
        objective,
        prices: prices.iter().map(|p| p * scale).collect(),
        kkt_residual: residual,
        iterations,
    })
}

/// Dual of the normalized problem (weights summing to one):
/// minimize `D(p) = Σ_j w_j ln(w_j / (Aᵀp)_j) - 1 + Σ_l p_l` over `p >= 0`.
struct DualProblem<'a> {
    w: &'a [f64],
    a: &'a CapacityPolytope,
    /// Pools touching a queue with positive weight; the rest keep price zero.
    pools: Vec<usize>,
}

impl<'a> DualProblem<'a> {
    fn new(w: &'a [f64], a: &'a CapacityPolytope) -> Self {
        let pools = (0..a.num_pools()).filter(|&l| a.members(l).any(|(j, _)| w[j] > 0.0)).collect();
        Self { w, a, pools }
    }

    fn loads_on_queues(&self, p: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.w.len()];
        for &l in &self.pools {
            for (j, a) in self.a.members(l) {
                u[j] += a * p[l];
            }
        }
        u
    }

    fn value(&self, p: &[f64]) -> f64 {
        let u = self.loads_on_queues(p);
        let mut v: f64 = self.pools.iter().map(|&l| p[l]).sum::<f64>() - 1.0;
        for (j, &wj) in self.w.iter().enumerate() {
            if wj > 0.0 {
                if u[j] <= 0.0 {
                    return f64::INFINITY;
                }
                v += wj * (wj / u[j]).ln();
            }
        }
        v
    }

    /// Gradient `1 - (A s)_l` and Hessian `A diag(s²/w) Aᵀ` on the active pools.
    fn derivatives(&self, p: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let u = self.loads_on_queues(p);
        let s: Vec<f64> = (0..self.w.len()).map(|j| if self.w[j] > 0.0 { self.w[j] / u[j] } else { 0.0 }).collect();
        let k = self.pools.len();
        let mut g = vec![0.0; k];
        let mut h = DMatrix::zeros(k, k);
        for (a, &la) in self.pools.iter().enumerate() {
            let row = self.a.row(la);
            g[a] = 1.0 - row.iter().zip(&s).map(|(x, y)| x * y).sum::<f64>();
            for (b, &lb) in self.pools.iter().enumerate().skip(a) {
                let other = self.a.row(lb);
                let mut v = 0.0;
                for j in 0..self.w.len() {
                    if self.w[j] > 0.0 && row[j] > 0.0 && other[j] > 0.0 {
                        v += row[j] * other[j] * s[j] * s[j] / self.w[j];
                    }
                }
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        (g, h)
    }

    /// Projected Newton with an Armijo search along the projection arc.
    fn minimize(&self) -> Result<(Vec<f64>, f64, usize)> {
        let k = self.pools.len();
        let mut p = vec![0.0; self.a.num_pools()];
        for &l in &self.pools {
            p[l] = 1.0;
        }
        let mut residual = f64::INFINITY;
        for iter in 0..PF_MAX_ITERATIONS {
            let (g, h) = self.derivatives(&p);
            residual = (0..k).map(|a| p[self.pools[a]].min(g[a]).abs()).fold(0.0, f64::max);
            if residual <= PF_TOLERANCE {
                return Ok((p, residual, iter));
            }
            let eps = residual.min(1e-3);
            let bound: Vec<bool> = (0..k).map(|a| p[self.pools[a]] <= eps && g[a] > 0.0).collect();
            let free: Vec<usize> = (0..k).filter(|&a| !bound[a]).collect();

            let mut d = vec![0.0; k];
            for a in 0..k {
                if bound[a] {
                    d[a] = -g[a] / h[(a, a)];
                }
            }
            if !free.is_empty() {
                let n = free.len();
                let mut hf = DMatrix::from_fn(n, n, |x, y| h[(free[x], free[y])]);
                let gf = DVector::from_fn(n, |x, _| -g[free[x]]);
                let ridge = 1e-14 * (0..n).map(|x| hf[(x, x)]).fold(0.0, f64::max).max(1e-300);
                for x in 0..n {
                    hf[(x, x)] += ridge;
                }
                match hf.cholesky() {
                    Some(ch) => {
                        let sol = ch.solve(&gf);
                        for (x, &a) in free.iter().enumerate() {
                            d[a] = sol[x];
                        }
                    }
                    None => {
                        for &a in &free {
                            d[a] = -g[a] / h[(a, a)];
                        }
                    }
                }
            }

            let current = self.value(&p);
            let step = |dir: &[f64], alpha: f64| {
                let mut next = p.clone();
                for (a, &l) in self.pools.iter().enumerate() {
                    next[l] = (p[l] + alpha * dir[a]).max(0.0);
                }
                next
            };
            let accept = |next: &[f64]| {
                let decrease: f64 = (0..k).map(|a| g[a] * (next[self.pools[a]] - p[self.pools[a]])).sum();
                self.value(next) <= current + 1e-4 * decrease
            };
            let mut accepted = None;
            for dir in [d, g.iter().map(|x| -x).collect::<Vec<_>>()] {
                let mut alpha = 1.0;
                while alpha > 1e-20 {
                    let next = step(&dir, alpha);
                    if accept(&next) {
                        if next != p {
                            accepted = Some(next);
                        }
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted.is_some() {
                    break;
                }
            }
            if let Some(next) = accepted {
                p = next;
            } else {
                return Err(Error::NotConverged { iterations: iter, residual });
            }
        }
        Err(Error::NotConverged { iterations: PF_MAX_ITERATIONS, residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub c: u32,
    /// `max_j |σ^SF_j(cQ) - σ^PF_j(Q)|`.
    pub gap: f64,
}

/// Distance between the Store-Forward allocation at `cQ` and the
/// proportional-fair allocation at `Q`, for each scale `c`.
pub fn sf_pf_gap(q: &QueueVector, polytope: &CapacityPolytope, c_list: &[u32]) -> Result<Vec<GapPoint>> {
    let pf = pf_solve(q, polytope)?;
    let mut cache = PhiCache::new(polytope);
    c_list
        .iter()
        .map(|&c| {
            if c == 0 {
                return Err(Error::Config("scale factors must be positive".into()));
            }
            let sf = sf_allocation(&q.scaled(c), &mut cache);
            let gap = sf.iter().zip(&pf.allocation).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(GapPoint { c, gap })
        })
        .collect()
}

/// A probability distribution on schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDistribution {
    pub entries: Vec<(Schedule, f64)>,
    pub mean: Vec<f64>,
}

impl ScheduleDistribution {
    pub fn point_mass(schedule: Schedule) -> Self {
        let mean = schedule.iter().map(|&x| x as f64).collect();
        Self { entries: vec![(schedule, 1.0)], mean }
    }

    /// Schedule selected by a uniform draw `u ∈ [0, 1)`.
    pub fn select(&self, u: f64) -> &Schedule {
        let mut acc = 0.0;
        for (s, p) in &self.entries {
            acc += p;
            if u < acc {
                return s;
            }
        }
        &self.entries.last().expect("distribution is nonempty").0
    }
}

/// Writes `target` as a convex combination of `schedules`. The support has at
/// most `|J| + 1` points (a basic solution of the feasibility LP).
pub fn decompose_mean(target: &[f64], schedules: &[Schedule]) -> Result<ScheduleDistribution> {
    let n = target.len();
    if schedules.is_empty() {
        return Err(Error::NoData("schedule set is empty"));
    }
    if let Some(s) = schedules.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch { what: "schedule length", expected: n, actual: s.len() });
    }
    if let Some(&bad) = target.iter().find(|&&x| !x.is_finite() || x < -1e-8) {
        return Err(Error::Infeasible { residual: -bad });
    }
    let target: Vec<f64> = target.iter().map(|x| x.max(0.0)).collect();

    let mut rows: Vec<Vec<f64>> = (0..n).map(|j| schedules.iter().map(|s| s[j] as f64).collect()).collect();
    rows.push(vec![1.0; schedules.len()]);
    let mut rhs = target.clone();
    rhs.push(1.0);

    let sol = lp::find_feasible(&rows, &rhs);
    let total: f64 = sol.x.iter().sum();
    if sol.infeasibility > 1e-7 || total <= 0.0 {
        return Err(Error::Infeasible { residual: sol.infeasibility });
    }
    let entries: Vec<(Schedule, f64)> =
        schedules.iter().zip(&sol.x).filter(|(_, &w)| w > 1e-15).map(|(s, &w)| (s.clone(), w / total)).collect();
    let mut mean = vec![0.0; n];
    for (s, w) in &entries {
        for j in 0..n {
            mean[j] += w * s[j] as f64;
        }
    }
    let residual = mean.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if residual > DECOMPOSITION_TOLERANCE {
        return Err(Error::Infeasible { residual });
    }
    Ok(ScheduleDistribution { entries, mean })
}
