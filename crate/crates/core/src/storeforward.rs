//! Store-Forward allocation, its product-form stationary law, an exact
//! stationary sampler and the closed-form queue-length and delay formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{compute_loads, CapacityPolytope, LoadProfile, NetworkSpec};
use crate::phi::PhiCache;
use crate::state::{Allocation, FifoContents, NetworkState, PoolOccupancy, QueueVector};

/// `σ_j(Q) = Φ(Q - e_j) / Φ(Q)`, zero for empty queues.
pub fn sf_allocation(q: &[u32], cache: &mut PhiCache) -> Allocation {
    let (log_total, minus) = cache.log_phi_with_neighbours(q);
    Allocation((0..q.len()).map(|j| if q[j] == 0 { 0.0 } else { (minus[j] - log_total).exp() }).collect())
}

fn admissible_loads(spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<LoadProfile> {
    let loads = compute_loads(spec, polytope)?;
    loads.require_admissible()?;
    Ok(loads)
}

/// `ln π(Q, Γ) = ln Φ(Q) + Σ_j Σ_{packets in j} ln a_{route}`.
pub fn log_stationary_weight(
    state: &NetworkState,
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    cache: &mut PhiCache,
) -> Result<f64> {
    admissible_loads(spec, polytope)?;
    state.fifo.validate(spec)?;
    let q = state.queues();
    let route_part: f64 = state.fifo.0.iter().flatten().map(|&r| spec.routes()[r].rate.ln()).sum();
    Ok(cache.log_phi(&q) + route_part)
}

/// Unnormalized stationary weight `Φ(Q) Π a_r^{Γ_jr(Q_j)}`.
///
/// Summed over all states the weights total `Π_l (1 - a_l)^{-1}`; see
/// [`stationary_probability`] for the normalized law.
pub fn stationary_weight(
    state: &NetworkState,
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    cache: &mut PhiCache,
) -> Result<f64> {
    Ok(log_stationary_weight(state, spec, polytope, cache)?.exp())
}

/// `Π_l (1 - a_l)`, the factor turning weights into probabilities.
pub fn normalization_factor(spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<f64> {
    let loads = admissible_loads(spec, polytope)?;
    Ok(loads.pool_loads.iter().map(|a| 1.0 - a).product())
}

pub fn stationary_probability(
    state: &NetworkState,
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    cache: &mut PhiCache,
) -> Result<f64> {
    Ok(stationary_weight(state, spec, polytope, cache)? * normalization_factor(spec, polytope)?)
}

/// Marginal law of the queue-length vector:
/// `P(Q) = Π_l (1 - a_l) · Φ(Q) Π_j a_j^{Q_j}`.
pub fn queue_length_probability(
    q: &[u32],
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    cache: &mut PhiCache,
) -> Result<f64> {
    let loads = admissible_loads(spec, polytope)?;
    let norm: f64 = loads.pool_loads.iter().map(|a| (1.0 - a).ln()).sum();
    let mut log_p = norm + cache.log_phi(q);
    for (j, &n) in q.iter().enumerate() {
        if n > 0 {
            log_p += n as f64 * loads.queue_loads[j].ln();
        }
    }
    Ok(log_p.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySample {
    pub occupancy: PoolOccupancy,
    pub state: NetworkState,
}

impl StationarySample {
    pub fn queues(&self) -> QueueVector {
        self.state.queues()
    }
}

/// Draws independent stationary states of the FIFO-routed Store-Forward
/// network: geometric pool totals, multinomial class splits, i.i.d. route
/// labels within each queue.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    num_queues: usize,
    /// Per pool: success probability `1 - a_l` and `(queue, A_lj a_j / a_l)`.
    pools: Vec<(f64, Vec<(usize, f64)>)>,
    /// Per queue: `(route, a_r / a_j)`.
    routes: Vec<Vec<(usize, f64)>>,
}

impl ExactSampler {
    pub fn new(spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<Self> {
        let loads = admissible_loads(spec, polytope)?;
        let pools = (0..polytope.num_pools())
            .map(|l| {
                let al = loads.pool_loads[l];
                let split = polytope
                    .members(l)
                    .map(|(j, a)| {
                        let p = if al > 0.0 { a * loads.queue_loads[j] / al } else { 0.0 };
                        (j, p)
                    })
                    .collect();
                (1.0 - al, split)
            })
            .collect();
        let routes = (0..spec.num_queues())
            .map(|j| {
                spec.routes_through(j).into_iter().map(|r| (r, spec.routes()[r].rate / loads.queue_loads[j])).collect()
            })
            .collect();
        Ok(Self { num_queues: spec.num_queues(), pools, routes })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StationarySample {
        let mut counts = vec![vec![0u32; self.num_queues]; self.pools.len()];
        for (l, (success, split)) in self.pools.iter().enumerate() {
            let total = Geometric::new(*success).expect("pool load lies in [0, 1)").sample(rng);
            let mut left = total;
            let mut mass = 1.0;
            for (i, &(j, p)) in split.iter().enumerate() {
                if left == 0 {
                    break;
                }
                let take = if i + 1 == split.len() || p >= mass {
                    left
                } else {
                    Binomial::new(left, (p / mass).clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
                };
                counts[l][j] = take as u32;
                left -= take;
                mass -= p;
            }
        }
        let occupancy = PoolOccupancy { counts };
        let q = occupancy.aggregate();
        let fifo = (0..self.num_queues)
            .map(|j| (0..q[j]).map(|_| pick(&self.routes[j], rng.random::<f64>())).collect())
            .collect();
        StationarySample { occupancy, state: NetworkState { fifo: FifoContents(fifo) } }
    }
}

fn pick(weights: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(r, w) in weights {
        acc += w;
        if u < acc {
            return r;
        }
    }
    weights.last().expect("queue with packets has a route").0
}

/// `n` exact stationary samples from a ChaCha8 stream seeded with `seed`.
pub fn exact_sampler(
    spec: &NetworkSpec,
    polytope: &CapacityPolytope,
    seed: u64,
    n: usize,
) -> Result<Vec<StationarySample>> {
    let sampler = ExactSampler::new(spec, polytope)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// `E[Q_j] = Σ_{l∋j} A_lj a_j / (1 - a_l)`.
pub fn expected_queue_length(j: usize, spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<f64> {
    let loads = admissible_loads(spec, polytope)?;
    if j >= spec.num_queues() {
        return Err(Error::DimensionMismatch { what: "queue index", expected: spec.num_queues(), actual: j });
    }
    Ok(polytope.pools_of(j).map(|l| polytope.entry(l, j) * loads.queue_loads[j] / (1.0 - loads.pool_loads[l])).sum())
}

pub fn expected_queue_lengths(spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<Vec<f64>> {
    (0..spec.num_queues()).map(|j| expected_queue_length(j, spec, polytope)).collect()
}

/// `E[D] = m̄ᵀ A n̄` with `m̄_l = (1 - a_l)^{-1}` and `n̄` the mean number of
/// visits to each queue.
pub fn expected_delay_for_visits(visits: &[f64], spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<f64> {
    let loads = admissible_loads(spec, polytope)?;
    if visits.len() != polytope.num_queues() {
        return Err(Error::DimensionMismatch {
            what: "visit-count vector",
            expected: polytope.num_queues(),
            actual: visits.len(),
        });
    }
    let per_unit = polytope.usage(visits);
    Ok(per_unit.iter().zip(&loads.pool_loads).map(|(u, a)| u / (1.0 - a)).sum())
}

/// Mean end-to-end delay on route index `route`.
pub fn expected_delay(route: usize, spec: &NetworkSpec, polytope: &CapacityPolytope) -> Result<f64> {
    let r = spec.routes().get(route).ok_or(Error::DimensionMismatch {
        what: "route index",
        expected: spec.routes().len(),
        actual: route,
    })?;
    let mut visits = vec![0.0; spec.num_queues()];
    for &q in &r.path {
        visits[q] += 1.0;
    }
    expected_delay_for_visits(&visits, spec, polytope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Capacity, Route};

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("q{i}")).collect()
    }

    fn spec(n: usize, routes: Vec<Route>, rows: Vec<Vec<f64>>) -> (NetworkSpec, CapacityPolytope) {
        let p = CapacityPolytope::new(rows).unwrap();
        let s = NetworkSpec::new(names(n), routes, Capacity::Matrix(p.clone())).unwrap();
        (s, p)
    }

    fn single_pool_two_routes() -> (NetworkSpec, CapacityPolytope) {
        spec(2, vec![Route::new("r1", vec![0], 0.2), Route::new("r2", vec![1], 0.3)], vec![vec![1.0, 1.0]])
    }

    #[test]
    fn allocation_examples() {
        let mut mm1 = PhiCache::new(&CapacityPolytope::identity(1));
        assert_eq!(sf_allocation(&[5], &mut mm1).0, vec![1.0]);

        let (_, p) = single_pool_two_routes();
        let mut cache = PhiCache::new(&p);
        let s = sf_allocation(&[2, 1], &mut cache);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(sf_allocation(&[0, 0], &mut cache).0, vec![0.0, 0.0]);
    }

    #[test]
    fn weight_examples() {
        let (s, p) = single_pool_two_routes();
        let mut cache = PhiCache::new(&p);
        let empty = NetworkState::empty(2);
        assert_eq!(stationary_weight(&empty, &s, &p, &mut cache).unwrap(), 1.0);
        let state = NetworkState { fifo: FifoContents(vec![vec![0], vec![1]]) };
        let w = stationary_weight(&state, &s, &p, &mut cache).unwrap();
        assert!((w - 0.12).abs() < 1e-12);

        let (mm1, p1) = spec(1, vec![Route::new("r", vec![0], 0.4)], vec![vec![1.0]]);
        let mut c1 = PhiCache::new(&p1);
        let two = NetworkState { fifo: FifoContents(vec![vec![0, 0]]) };
        let w = stationary_weight(&two, &mm1, &p1, &mut c1).unwrap();
        assert!((w - 0.16).abs() < 1e-12);
        let prob = stationary_probability(&two, &mm1, &p1, &mut c1).unwrap();
        assert!((prob - 0.6 * 0.16).abs() < 1e-12);
    }

    #[test]
    fn weight_rejects_bad_packets() {
        let (s, p) = single_pool_two_routes();
        let mut cache = PhiCache::new(&p);
        let wrong = NetworkState { fifo: FifoContents(vec![vec![1], vec![]]) };
        assert!(stationary_weight(&wrong, &s, &p, &mut cache).is_err());
    }

    #[test]
    fn inadmissible_loads_are_rejected() {
        let (s, p) =
            spec(2, vec![Route::new("r1", vec![0], 0.6), Route::new("r2", vec![1], 0.5)], vec![vec![1.0, 1.0]]);
        assert!(matches!(ExactSampler::new(&s, &p), Err(Error::Inadmissible { .. })));
        assert!(expected_queue_length(0, &s, &p).is_err());
        assert!(expected_delay(0, &s, &p).is_err());
    }

    #[test]
    fn closed_forms() {
        let (mm1, p1) = spec(1, vec![Route::new("r", vec![0], 0.5)], vec![vec![1.0]]);
        assert!((expected_queue_length(0, &mm1, &p1).unwrap() - 1.0).abs() < 1e-12);

        let (s, p) = single_pool_two_routes();
        assert!((expected_queue_length(0, &s, &p).unwrap() - 0.4).abs() < 1e-12);

        let (tandem, pt) = spec(2, vec![Route::new("r", vec![0, 1], 0.5)], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((expected_delay(0, &tandem, &pt).unwrap() - 4.0).abs() < 1e-12);

        let (shared, ps) = spec(2, vec![Route::new("r", vec![0, 1], 0.3)], vec![vec![1.0, 1.0]]);
        assert!((expected_delay(0, &shared, &ps).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(expected_delay_for_visits(&[0.0, 0.0], &shared, &ps).unwrap(), 0.0);
        // a route visiting q1 twice and q2 once
        assert!((expected_delay_for_visits(&[2.0, 1.0], &shared, &ps).unwrap() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn sampler_is_seed_deterministic_and_aggregates() {
        let (s, p) = single_pool_two_routes();
        let a = exact_sampler(&s, &p, 7, 200).unwrap();
        let b = exact_sampler(&s, &p, 7, 200).unwrap();
        assert_eq!(a, b);
        for sample in &a {
            assert_eq!(sample.occupancy.aggregate(), sample.queues());
            assert!(sample.occupancy.respects(&p));
        }
    }

    #[test]
    fn sampler_geometric_at_zero() {
        // a_l = 0.5: P(m_l = 0) = 0.5
        let (s, p) = spec(1, vec![Route::new("r", vec![0], 0.5)], vec![vec![1.0]]);
        let n = 40_000;
        let zeros = exact_sampler(&s, &p, 3, n).unwrap().iter().filter(|x| x.queues().is_zero()).count();
        let frac = zeros as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 4.0 * se, "P(0) = {frac}");
    }

    #[test]
    fn sampler_route_mix() {
        // one queue on routes of rate 0.2 and 0.3: each position is r1 w.p. 0.4
        let (s, p) = spec(1, vec![Route::new("r1", vec![0], 0.2), Route::new("r2", vec![0], 0.3)], vec![vec![1.0]]);
        let (mut r1, mut total) = (0usize, 0usize);
        for x in exact_sampler(&s, &p, 11, 40_000).unwrap() {
            r1 += x.state.fifo.count(0, 0);
            total += x.state.fifo[0].len();
        }
        let frac = r1 as f64 / total as f64;
        let se = (0.24 / total as f64).sqrt();
        assert!((frac - 0.4).abs() < 4.0 * se, "route share {frac}");
    }
}
