//! The normalizing constant Φ(Q) of the auxiliary closed multi-class network:
//!
//! Φ(Q) = Σ_m Π_l [ multinomial(m_l; m_lj) Π_{j∈l} A_lj^{m_lj} ]
//!
//! summed over pool occupancies `m` with `Σ_{l∋j} m_lj = Q_j`.
//!
//! Values are kept as natural logarithms. Pools are convolved one at a time in
//! a greedy order; the dynamic-programming state only tracks queues that have been
//! touched by an earlier pool and still appear in a later one, so networks whose
//! pools overlap in a chain (cycles, grids) stay tractable at large `Q`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::network::CapacityPolytope;
use crate::state::QueueVector;

/// Packet cap for [`phi_bruteforce`].
pub const DEFAULT_BRUTEFORCE_CAP: u64 = 24;

#[derive(Debug, Clone)]
struct PoolPlan {
    /// `(queue, ln A_lj)` per pool.
    members: Vec<Vec<(usize, f64)>>,
    /// `max_l ln A_lj` per queue.
    heaviest: Vec<f64>,
}

/// Convolution order for one queue vector.
#[derive(Debug, Clone)]
struct Order {
    pools: Vec<usize>,
    /// Position in `pools` of the last pool containing each nonempty queue.
    last: Vec<usize>,
}

impl PoolPlan {
    fn new(polytope: &CapacityPolytope) -> Self {
        let members: Vec<Vec<(usize, f64)>> =
            (0..polytope.num_pools()).map(|l| polytope.members(l).map(|(j, a)| (j, a.ln())).collect()).collect();
        let mut heaviest = vec![f64::NEG_INFINITY; polytope.num_queues()];
        for m in &members {
            for &(j, ln_a) in m {
                heaviest[j] = heaviest[j].max(ln_a);
            }
        }
        Self { members, heaviest }
    }

    /// Linear arithmetic when a priori bounds keep `Φ(Q)` and every partial
    /// sum inside `[e^-600, e^600]`: from above by the generating function at
    /// `z_j = 1 / (2 max_l Σ_j A_lj)`, from below by the single term that
    /// puts each queue in its heaviest pool.
    fn domain(&self, q: &[u32]) -> Domain {
        let total: u64 = q.iter().map(|&x| x as u64).sum();
        if total as usize > LINEAR_MAX_TOTAL {
            return Domain::Log;
        }
        let row_sum =
            self.members.iter().map(|m| m.iter().map(|&(_, ln_a)| ln_a.exp()).sum::<f64>()).fold(0.0, f64::max);
        let upper = total as f64 * (2.0 * row_sum).ln().max(0.0) + self.members.len() as f64 * std::f64::consts::LN_2;
        let lower: f64 =
            q.iter().enumerate().filter(|&(_, &x)| x > 0).map(|(j, &x)| x as f64 * self.heaviest[j].min(0.0)).sum();
        if upper < LINEAR_MAX_LOG && lower > -LINEAR_MAX_LOG {
            Domain::Linear
        } else {
            Domain::Log
        }
    }

    /// Greedy order keeping the dynamic-programming frontier small: each
    /// step takes the pool after which the open queues have the fewest
    /// joint states.
    fn order(&self, q: &[u32]) -> Order {
        let n = q.len();
        let live: Vec<Vec<usize>> =
            self.members.iter().map(|m| m.iter().map(|&(j, _)| j).filter(|&j| q[j] > 0).collect()).collect();
        let mut remaining = vec![0usize; n];
        for m in &live {
            for &j in m {
                remaining[j] += 1;
            }
        }
        let weight: Vec<f64> = q.iter().map(|&x| (x as f64 + 1.0).ln()).collect();
        let mut open = vec![false; n];
        let mut used = vec![false; live.len()];
        let mut pools = Vec::with_capacity(live.len());
        let mut last = vec![usize::MAX; n];
        loop {
            let mut best: Option<(f64, usize)> = None;
            for (l, m) in live.iter().enumerate() {
                if used[l] || m.is_empty() {
                    continue;
                }
                let mut cost: f64 = (0..n).filter(|&j| open[j]).map(|j| weight[j]).sum();
                for &j in m {
                    let closes = remaining[j] == 1;
                    match (open[j], closes) {
                        (true, true) => cost -= weight[j],
                        (false, false) => cost += weight[j],
                        _ => {}
                    }
                }
                if best.is_none_or(|(c, _)| cost < c - 1e-12) {
                    best = Some((cost, l));
                }
            }
            let Some((_, l)) = best else { break };
            used[l] = true;
            for &j in &live[l] {
                remaining[j] -= 1;
                open[j] = remaining[j] > 0;
                if remaining[j] == 0 {
                    last[j] = pools.len();
                }
            }
            pools.push(l);
        }
        Order { pools, last }
    }
}

/// Memo table of `ln Φ(Q)` for one constraint matrix. Not shared between
/// threads; give each worker its own cache.
#[derive(Debug, Clone)]
pub struct PhiCache {
    polytope: CapacityPolytope,
    plan: PoolPlan,
    memo: HashMap<Vec<u32>, f64>,
    ln_fact: Vec<f64>,
    fact: Vec<f64>,
}

impl PhiCache {
    pub fn new(polytope: &CapacityPolytope) -> Self {
        Self {
            polytope: polytope.clone(),
            plan: PoolPlan::new(polytope),
            memo: HashMap::new(),
            ln_fact: vec![0.0],
            fact: vec![1.0],
        }
    }

    pub fn polytope(&self) -> &CapacityPolytope {
        &self.polytope
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }

    pub fn clear(&mut self) {
        self.memo.clear();
    }

    /// `ln Φ(Q)`; `ln Φ(0) = 0`.
    pub fn log_phi(&mut self, q: &[u32]) -> f64 {
        self.check_len(q);
        if q.iter().all(|&x| x == 0) {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(q) {
            return v;
        }
        self.ensure_fact(q);
        let order = self.plan.order(q);
        let domain = self.plan.domain(q);
        let v = self.run(q, q, &order, domain, 0, Stage::initial(domain), None);
        self.memo.insert(q.to_vec(), v);
        v
    }

    /// `ln Φ(Q - e_j)`, which is `-∞` when `Q_j = 0`.
    pub fn log_phi_minus(&mut self, q: &[u32], j: usize) -> f64 {
        if q[j] == 0 {
            return f64::NEG_INFINITY;
        }
        let mut v = q.to_vec();
        v[j] -= 1;
        self.log_phi(&v)
    }

    /// `ln Φ(Q)` together with `ln Φ(Q - e_j)` for every `j`. The
    /// neighbours reuse the convolution of `Q` up to the pool where queue
    /// `j` is last seen.
    pub fn log_phi_with_neighbours(&mut self, q: &[u32]) -> (f64, Vec<f64>) {
        self.check_len(q);
        let neighbour = |j: usize| {
            let mut v = q.to_vec();
            v[j] -= 1;
            v
        };
        let missing: Vec<usize> = (0..q.len())
            .filter(|&j| q[j] > 0 && !neighbour(j).iter().all(|&x| x == 0) && !self.memo.contains_key(&neighbour(j)))
            .collect();
        if missing.is_empty() {
            let total = self.log_phi(q);
            let minus = (0..q.len()).map(|j| self.log_phi_minus(q, j)).collect();
            return (total, minus);
        }
        self.ensure_fact(q);
        let mut stages = Vec::new();
        let order = self.plan.order(q);
        let domain = self.plan.domain(q);
        let total = self.run(q, q, &order, domain, 0, Stage::initial(domain), Some(&mut stages));
        self.memo.insert(q.to_vec(), total);
        for j in missing {
            let target = neighbour(j);
            let k = order.last[j];
            let v = self.run(q, &target, &order, domain, k, stages[k].clone(), None);
            self.memo.insert(target, v);
        }
        let minus = (0..q.len()).map(|j| self.log_phi_minus(q, j)).collect();
        (total, minus)
    }

    /// Linear-domain Φ(Q); overflows to `inf` for large vectors.
    pub fn phi(&mut self, q: &[u32]) -> f64 {
        self.log_phi(q).exp()
    }

    fn check_len(&self, q: &[u32]) {
        assert_eq!(q.len(), self.polytope.num_queues(), "queue vector length must match the constraint matrix");
    }

    fn ensure_fact(&mut self, q: &[u32]) {
        let n: usize = q.iter().map(|&x| x as usize).sum();
        while self.ln_fact.len() <= n {
            let k = self.ln_fact.len();
            let prev = self.ln_fact[k - 1];
            self.ln_fact.push(prev + (k as f64).ln());
        }
        while self.fact.len() <= n.min(LINEAR_MAX_TOTAL) {
            let k = self.fact.len();
            let prev = self.fact[k - 1];
            self.fact.push(prev * k as f64);
        }
    }

    /// Convolves pools `start..` from `stage` and returns `ln Φ`. The state
    /// space (which queues take part, the radix of each) follows `bounds`;
    /// queue `j` must be consumed exactly `target[j] <= bounds[j]` times.
    /// When `record` is given, the stage entering each pool is stored at its
    /// position in `order`.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        bounds: &[u32],
        target: &[u32],
        order: &Order,
        domain: Domain,
        start: usize,
        stage: Stage,
        mut record: Option<&mut Vec<Stage>>,
    ) -> f64 {
        let fact: &[f64] = match domain {
            Domain::Log => &self.ln_fact,
            Domain::Linear => &self.fact,
        };
        let Stage { mut active, mut vals } = stage;

        for (k, &pool) in order.pools.iter().enumerate().skip(start) {
            if let Some(rec) = record.as_deref_mut() {
                rec.push(Stage { active: active.clone(), vals: vals.clone() });
            }
            let members: Vec<(usize, f64, bool)> = self.plan.members[pool]
                .iter()
                .filter(|&&(j, _)| bounds[j] > 0)
                .map(|&(j, ln_a)| (j, ln_a, order.last[j] == k))
                .collect();
            if members.is_empty() {
                continue;
            }
            let closes = |j: usize| members.iter().any(|&(m, _, c)| m == j && c);

            let mut next_active: Vec<usize> = active.iter().copied().filter(|&j| !closes(j)).collect();
            for &(j, _, c) in &members {
                if !c && !active.contains(&j) {
                    next_active.push(j);
                }
            }

            let new_strides = strides(&next_active, bounds);
            let new_size = radix_size(&next_active, bounds);
            let new_pos = |j: usize| next_active.iter().position(|&x| x == j);

            // Pass-through queues: active, not in this pool.
            let carried: Vec<(usize, usize)> = active
                .iter()
                .enumerate()
                .filter(|&(_, &j)| !members.iter().any(|&(m, _, _)| m == j))
                .map(|(i, &j)| (i, new_strides[new_pos(j).expect("carried queues stay active")]))
                .collect();
            // Members that stay active get a stride in the next state; the rest close here.
            let pool_members: Vec<Member> = members
                .iter()
                .map(|&(j, ln_a, c)| Member {
                    queue: j,
                    old_pos: active.iter().position(|&x| x == j),
                    weight: member_weights(domain, ln_a, bounds[j], &self.ln_fact),
                    new_stride: if c { 0 } else { new_strides[new_pos(j).unwrap()] },
                    closes: c,
                })
                .collect();
            let (forced, free): (Vec<&Member>, Vec<&Member>) = pool_members.iter().partition(|m| m.closes);
            let step =
                PoolStep { active: &active, bounds, target, carried: &carried, forced: &forced, free: &free, fact };

            vals = match domain {
                Domain::Linear => {
                    let mut acc = vec![0.0f64; new_size];
                    step.visit::<Linear>(&vals, |idx, t| acc[idx] += t);
                    acc
                }
                Domain::Log => {
                    // First pass: the largest term reaching each new state.
                    let mut acc_max = vec![f64::NEG_INFINITY; new_size];
                    step.visit::<Logarithmic>(&vals, |idx, t| {
                        if t > acc_max[idx] {
                            acc_max[idx] = t;
                        }
                    });
                    // Second pass: sum the terms that are not negligible against it.
                    let mut acc_sum = vec![0.0f64; new_size];
                    step.visit::<Logarithmic>(&vals, |idx, t| {
                        let d = t - acc_max[idx];
                        if d > -NEGLIGIBLE {
                            acc_sum[idx] += d.exp();
                        }
                    });
                    acc_max
                        .iter()
                        .zip(&acc_sum)
                        .map(|(&m, &s)| if s > 0.0 { m + s.ln() } else { f64::NEG_INFINITY })
                        .collect()
                }
            };
            active = next_active;
        }
        debug_assert!(active.is_empty());
        match domain {
            Domain::Log => vals[0],
            Domain::Linear => vals[0].ln(),
        }
    }
}

/// Terms more than this many nats below the largest term of their state are
/// dropped; each is below `e^-40` of the total.
const NEGLIGIBLE: f64 = 40.0;

/// Largest packet total convolved with plain floating-point products;
/// `170!` is the largest factorial below `f64::MAX`.
const LINEAR_MAX_TOTAL: usize = 170;

/// Bound on `|ln Φ|` (and on every intermediate value) for the linear domain.
const LINEAR_MAX_LOG: f64 = 600.0;

/// Arithmetic of one convolution: log-sum-exp, or plain products and sums
/// when every value is known to stay well inside the range of `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Log,
    Linear,
}

trait Arithmetic {
    fn mul(a: f64, b: f64) -> f64;
    fn is_zero(v: f64) -> bool;
}

struct Logarithmic;
struct Linear;

impl Arithmetic for Logarithmic {
    #[inline(always)]
    fn mul(a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline(always)]
    fn is_zero(v: f64) -> bool {
        v == f64::NEG_INFINITY
    }
}

impl Arithmetic for Linear {
    #[inline(always)]
    fn mul(a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline(always)]
    fn is_zero(v: f64) -> bool {
        v == 0.0
    }
}

/// `A^x / x!` for `x = 0..=bound`, in the given domain.
fn member_weights(domain: Domain, ln_a: f64, bound: u32, ln_fact: &[f64]) -> Vec<f64> {
    match domain {
        Domain::Log => (0..=bound as usize).map(|x| x as f64 * ln_a - ln_fact[x]).collect(),
        Domain::Linear => {
            let a = ln_a.exp();
            let mut w = Vec::with_capacity(bound as usize + 1);
            let mut cur = 1.0;
            w.push(cur);
            for x in 1..=bound {
                cur *= a / x as f64;
                w.push(cur);
            }
            w
        }
    }
}

#[derive(Debug, Clone)]
struct Stage {
    active: Vec<usize>,
    vals: Vec<f64>,
}

impl Stage {
    fn initial(domain: Domain) -> Self {
        Self {
            active: Vec::new(),
            vals: vec![match domain {
                Domain::Log => 0.0,
                Domain::Linear => 1.0,
            }],
        }
    }
}

struct Member {
    queue: usize,
    old_pos: Option<usize>,
    /// `A^x / x!` in the convolution's domain.
    weight: Vec<f64>,
    new_stride: usize,
    closes: bool,
}

struct PoolStep<'a> {
    active: &'a [usize],
    bounds: &'a [u32],
    target: &'a [u32],
    carried: &'a [(usize, usize)],
    forced: &'a [&'a Member],
    free: &'a [&'a Member],
    /// `n!` in the convolution's domain.
    fact: &'a [f64],
}

impl PoolStep<'_> {
    /// Calls `f(new_state, term)` for every term of the pool's convolution.
    #[inline(always)]
    fn visit<D: Arithmetic>(&self, vals: &[f64], mut f: impl FnMut(usize, f64)) {
        let fact = self.fact;
        let free = self.free;
        let mut consumed = vec![0u32; self.active.len()];
        let mut x = vec![0u32; free.len()];
        let mut rem = vec![0u32; free.len()];
        let mut c_old = vec![0u32; free.len()];

        'states: for (idx, &v) in vals.iter().enumerate() {
            if D::is_zero(v) {
                continue;
            }
            decode(idx, self.active, self.bounds, &mut consumed);
            let consumed_of = |m: &Member| m.old_pos.map_or(0, |p| consumed[p]);

            let mut base_target = 0usize;
            for &(i, stride) in self.carried {
                base_target += consumed[i] as usize * stride;
            }
            let mut base_term = v;
            let mut base_sum = 0usize;
            for m in self.forced {
                let Some(take) = self.target[m.queue].checked_sub(consumed_of(m)) else {
                    continue 'states;
                };
                base_term = D::mul(base_term, m.weight[take as usize]);
                base_sum += take as usize;
            }
            for (i, m) in free.iter().enumerate() {
                c_old[i] = consumed_of(m);
                let Some(r) = self.target[m.queue].checked_sub(c_old[i]) else {
                    continue 'states;
                };
                rem[i] = r;
            }

            if free.is_empty() {
                f(base_target, D::mul(base_term, fact[base_sum]));
                continue;
            }

            // Odometer over all but the last free member; the last one is
            // the inner loop.
            let last = free.len() - 1;
            x.iter_mut().for_each(|v| *v = 0);
            loop {
                let mut term = base_term;
                let mut sum = base_sum;
                let mut tgt = base_target;
                for i in 0..last {
                    let m = free[i];
                    term = D::mul(term, m.weight[x[i] as usize]);
                    sum += x[i] as usize;
                    tgt += (c_old[i] + x[i]) as usize * m.new_stride;
                }
                let m = free[last];
                let stride = m.new_stride;
                tgt += c_old[last] as usize * stride;
                let w = &m.weight[..=rem[last] as usize];
                let fs = &fact[sum..=sum + rem[last] as usize];
                for (xl, (&wx, &fx)) in w.iter().zip(fs).enumerate() {
                    f(tgt + xl * stride, D::mul(D::mul(term, wx), fx));
                }

                let mut i = 0;
                while i < last {
                    if x[i] < rem[i] {
                        x[i] += 1;
                        break;
                    }
                    x[i] = 0;
                    i += 1;
                }
                if i == last {
                    break;
                }
            }
        }
    }
}

fn strides(queues: &[usize], q: &[u32]) -> Vec<usize> {
    let mut out = Vec::with_capacity(queues.len());
    let mut s = 1usize;
    for &j in queues {
        out.push(s);
        s *= q[j] as usize + 1;
    }
    out
}

fn radix_size(queues: &[usize], q: &[u32]) -> usize {
    queues.iter().map(|&j| q[j] as usize + 1).product()
}

fn decode(mut idx: usize, queues: &[usize], q: &[u32], out: &mut [u32]) {
    for (i, &j) in queues.iter().enumerate() {
        let radix = q[j] as usize + 1;
        out[i] = (idx % radix) as u32;
        idx /= radix;
    }
}

/// `ln Φ(Q)` through the cache's convolution engine.
pub fn log_phi(q: &QueueVector, cache: &mut PhiCache) -> f64 {
    cache.log_phi(q)
}

/// Φ(Q) by direct enumeration of every pool occupancy aggregating to `Q`;
/// no memoization and no convolution.
pub fn phi_bruteforce(q: &QueueVector, polytope: &CapacityPolytope, cap: u64) -> Result<f64> {
    if q.len() != polytope.num_queues() {
        return Err(Error::DimensionMismatch {
            what: "queue vector length",
            expected: polytope.num_queues(),
            actual: q.len(),
        });
    }
    let total = q.total();
    if total > cap {
        return Err(Error::CapExceeded {
            what: "brute-force packet total",
            limit: cap as usize,
            actual: total as usize,
        });
    }
    let pools_of: Vec<Vec<usize>> = (0..q.len()).map(|j| polytope.pools_of(j).collect()).collect();
    let fact: Vec<f64> = (0..=total as usize)
        .scan(1.0, |f, k| {
            if k > 0 {
                *f *= k as f64;
            }
            Some(*f)
        })
        .collect();
    let mut m = vec![vec![0u32; q.len()]; polytope.num_pools()];
    let mut sum = 0.0;
    split_queue(0, q, &pools_of, polytope, &fact, &mut m, &mut sum);
    Ok(sum)
}

fn split_queue(
    j: usize,
    q: &[u32],
    pools_of: &[Vec<usize>],
    polytope: &CapacityPolytope,
    fact: &[f64],
    m: &mut Vec<Vec<u32>>,
    sum: &mut f64,
) {
    if j == q.len() {
        let mut term = 1.0;
        for (l, row) in m.iter().enumerate() {
            let n: u32 = row.iter().sum();
            term *= fact[n as usize];
            for (k, &c) in row.iter().enumerate() {
                term /= fact[c as usize];
                if c > 0 {
                    term *= polytope.entry(l, k).powi(c as i32);
                }
            }
        }
        *sum += term;
        return;
    }
    compositions(q[j], &pools_of[j], 0, j, q, pools_of, polytope, fact, m, sum);
}

#[allow(clippy::too_many_arguments)]
fn compositions(
    remaining: u32,
    pools: &[usize],
    k: usize,
    j: usize,
    q: &[u32],
    pools_of: &[Vec<usize>],
    polytope: &CapacityPolytope,
    fact: &[f64],
    m: &mut Vec<Vec<u32>>,
    sum: &mut f64,
) {
    if k + 1 == pools.len() {
        m[pools[k]][j] = remaining;
        split_queue(j + 1, q, pools_of, polytope, fact, m, sum);
        m[pools[k]][j] = 0;
        return;
    }
    for take in 0..=remaining {
        m[pools[k]][j] = take;
        compositions(remaining - take, pools, k + 1, j, q, pools_of, polytope, fact, m, sum);
    }
    m[pools[k]][j] = 0;
}
