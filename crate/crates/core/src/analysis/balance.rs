//! Replays the balance equations of the Store-Forward network against its
//! time reversal.
//!
//! Forward chain: route `r` arrivals join the back of the route's first
//! queue at rate `a_r`; queue `j` serves its front packet at rate `σ_j(Q)`,
//! sending it to the back of the next queue or out of the network.
//! Reversed chain: route `r` arrivals join the front of the route's last
//! queue at rate `a_r`; queue `j` serves its back packet at rate `σ_j(Q)`,
//! sending it to the front of the previous queue, or out at the first hop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{compute_loads, CapacityPolytope, NetworkSpec};
use crate::phi::PhiCache;
use crate::state::NetworkState;
use crate::storeforward::{log_stationary_weight, sf_allocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionClass {
    Arrival { route: usize },
    Departure { route: usize, queue: usize },
    InternalMove { route: usize, from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub class: TransitionClass,
    pub target: NetworkState,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub class: TransitionClass,
    /// `π(x) q(x, y)`.
    pub lhs: f64,
    /// `π(y) q^R(y, x)`.
    pub rhs: f64,
    pub residual: f64,
    pub total_rate_forward: f64,
    pub total_rate_reversed: f64,
    pub total_rate_residual: f64,
}

const EPS: f64 = 1e-300;

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.max(b).max(EPS)
}

/// All transitions of the forward chain out of `state`.
pub fn forward_transitions(state: &NetworkState, spec: &NetworkSpec, cache: &mut PhiCache) -> Vec<Transition> {
    let q = state.queues();
    let sigma = sf_allocation(&q, cache);
    let mut out = Vec::new();
    for (r, route) in spec.routes().iter().enumerate() {
        let mut target = state.clone();
        target.fifo.0[route.path[0]].push(r);
        out.push(Transition { class: TransitionClass::Arrival { route: r }, target, rate: route.rate });
    }
    for j in 0..spec.num_queues() {
        let Some(&r) = state.fifo[j].first() else { continue };
        let mut target = state.clone();
        target.fifo.0[j].remove(0);
        let class = match spec.next_queue(r, j) {
            Some(k) => {
                target.fifo.0[k].push(r);
                TransitionClass::InternalMove { route: r, from: j, to: k }
            }
            None => TransitionClass::Departure { route: r, queue: j },
        };
        out.push(Transition { class, target, rate: sigma[j] });
    }
    out
}

fn previous_queue(spec: &NetworkSpec, route: usize, queue: usize) -> Option<usize> {
    let path = &spec.routes()[route].path;
    let k = path.iter().position(|&q| q == queue)?;
    k.checked_sub(1).map(|i| path[i])
}

/// All transitions of the reversed chain out of `state`. Classes are named
/// after the forward transition they undo.
pub fn reversed_transitions(state: &NetworkState, spec: &NetworkSpec, cache: &mut PhiCache) -> Vec<Transition> {
    let q = state.queues();
    let sigma = sf_allocation(&q, cache);
    let mut out = Vec::new();
    for (r, route) in spec.routes().iter().enumerate() {
        let last = *route.path.last().expect("routes are nonempty");
        let mut target = state.clone();
        target.fifo.0[last].insert(0, r);
        out.push(Transition { class: TransitionClass::Departure { route: r, queue: last }, target, rate: route.rate });
    }
    for j in 0..spec.num_queues() {
        let Some(&r) = state.fifo[j].last() else { continue };
        let mut target = state.clone();
        target.fifo.0[j].pop();
        let class = match previous_queue(spec, r, j) {
            Some(k) => {
                target.fifo.0[k].insert(0, r);
                TransitionClass::InternalMove { route: r, from: k, to: j }
            }
            None => TransitionClass::Arrival { route: r },
        };
        out.push(Transition { class, target, rate: sigma[j] });
    }
    out
}

/// Compares `π(x) q(x, y)` with `π(y) q^R(y, x)` for a forward transition
/// `x → y`, and the total outflow rates of `x` in both chains.
pub fn balance_check(
    from: &NetworkState,
    to: &NetworkState,
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    cache: &mut PhiCache,
) -> Result<BalanceReport> {
    compute_loads(spec, polytope)?.require_admissible()?;
    from.fifo.validate(spec)?;
    to.fifo.validate(spec)?;
    let forward = forward_transitions(from, spec, cache);
    let step = forward.iter().find(|t| &t.target == to).ok_or_else(|| {
        Error::InvalidTransition("successor is not reachable by an arrival, departure or move".into())
    })?;
    let back: f64 = reversed_transitions(to, spec, cache).iter().filter(|t| &t.target == from).map(|t| t.rate).sum();

    let log_from = log_stationary_weight(from, spec, polytope, cache)?;
    let log_to = log_stationary_weight(to, spec, polytope, cache)?;
    let log_lhs = log_from + step.rate.ln();
    let log_rhs = log_to + back.ln();
    let residual = if back > 0.0 && step.rate > 0.0 {
        -(-(log_lhs - log_rhs).abs()).exp_m1()
    } else {
        relative(log_lhs.exp(), log_rhs.exp())
    };

    let total_rate_forward: f64 = forward.iter().map(|t| t.rate).sum();
    let total_rate_reversed: f64 = reversed_transitions(from, spec, cache).iter().map(|t| t.rate).sum();
    Ok(BalanceReport {
        class: step.class,
        lhs: log_lhs.exp(),
        rhs: log_rhs.exp(),
        residual,
        total_rate_forward,
        total_rate_reversed,
        total_rate_residual: relative(total_rate_forward, total_rate_reversed),
    })
}
