use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{initial_fifo, Counts, Horizon, Packet, Policy, Recorder, SimConfig, TraceMetrics};
use crate::error::{Error, Result};
use crate::network::{compute_loads, CapacityPolytope, NetworkSpec};
use crate::phi::PhiCache;
use crate::state::FifoContents;
use crate::storeforward::sf_allocation;

/// Per route, the queue following each queue on the route (`None` at the last hop
/// and for queues off the route).
pub(super) fn next_hops(spec: &NetworkSpec) -> Vec<Vec<Option<usize>>> {
    spec.routes()
        .iter()
        .map(|route| {
            let mut next = vec![None; spec.num_queues()];
            for w in route.path.windows(2) {
                next[w[0]] = Some(w[1]);
            }
            next
        })
        .collect()
}

fn fifo_of(queues: &[VecDeque<Packet>]) -> FifoContents {
    FifoContents(queues.iter().map(|d| d.iter().map(|p| p.route).collect()).collect())
}

/// Simulates the FIFO-routed Store-Forward network by uniformization.
///
/// Arrivals on route `r` are Poisson with rate `a_r` into the route's first
/// queue; queue `j` completes the service of its front packet at rate
/// `σ_j(Q)`. The dominating rate is `Σ a_r + Σ_j 1/max_l A_lj`, which bounds
/// every service rate because `A σ <= 1`.
pub fn simulate_sf_ctmc(spec: &NetworkSpec, polytope: &CapacityPolytope, cfg: &SimConfig) -> Result<TraceMetrics> {
    cfg.validate(spec.num_queues())?;
    let loads = compute_loads(spec, polytope)?;
    let transient = !loads.admissible;
    let n = spec.num_queues();
    let num_routes = spec.routes().len();
    let next = next_hops(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut queues: Vec<VecDeque<Packet>> = vec![VecDeque::new(); n];
    let mut q = vec![0u32; n];
    let mut x = vec![vec![0u32; num_routes]; n];
    let mut counts = Counts::default();
    for (j, labels) in initial_fifo(cfg, spec, &mut rng)?.0.into_iter().enumerate() {
        for r in labels {
            queues[j].push_back(Packet { route: r, arrival: 0.0, arrival_progress: 0.0 });
            q[j] += 1;
            x[j][r] += 1;
            counts.admitted += 1;
        }
    }

    let rates: Vec<f64> = spec.routes().iter().map(|r| r.rate).collect();
    let arrival_total: f64 = rates.iter().sum();
    let bounds: Vec<f64> = (0..n)
        .map(|j| {
            let max = polytope.pools_of(j).map(|l| polytope.entry(l, j)).fold(0.0, f64::max);
            1.0 / max
        })
        .collect();
    let lambda = arrival_total + bounds.iter().sum::<f64>();
    let clock_dist = Exp::new(lambda).map_err(|e| Error::InvalidNetwork(e.to_string()))?;

    let mut recorder = Recorder::new(cfg, n, num_routes, false);
    let mut cache = PhiCache::new(polytope);
    let mut sigma = sf_allocation(&q, &mut cache);
    let total = cfg.total_progress();
    let mut clock = 0.0;

    loop {
        let progress = match cfg.horizon {
            Horizon::Time(_) => clock,
            Horizon::Events(_) => counts.events as f64,
        };
        if progress >= total {
            break;
        }
        if arrival_total == 0.0 && q.iter().all(|&v| v == 0) {
            if let Horizon::Time(t) = cfg.horizon {
                recorder.hold(clock, progress, t - clock, &q, &x, || fifo_of(&queues));
            }
            break;
        }
        let mut dt = clock_dist.sample(&mut rng);
        let last = matches!(cfg.horizon, Horizon::Time(t) if clock + dt >= t);
        if let Horizon::Time(t) = cfg.horizon {
            dt = dt.min(t - clock);
        }
        recorder.hold(clock, progress, dt, &q, &x, || fifo_of(&queues));
        clock += dt;
        if last {
            break;
        }

        let mut u = rng.random::<f64>() * lambda;
        let mut changed = false;
        if u < arrival_total {
            let r = pick(&rates, u);
            let j = spec.routes()[r].path[0];
            queues[j].push_back(Packet { route: r, arrival: clock, arrival_progress: progress });
            q[j] += 1;
            x[j][r] += 1;
            counts.admitted += 1;
            changed = true;
        } else {
            u -= arrival_total;
            let j = pick(&bounds, u);
            let offset = u - bounds[..j].iter().sum::<f64>();
            if offset < sigma[j] {
                if let Some(p) = queues[j].pop_front() {
                    q[j] -= 1;
                    x[j][p.route] -= 1;
                    match next[p.route][j] {
                        Some(k) => {
                            queues[k].push_back(p);
                            q[k] += 1;
                            x[k][p.route] += 1;
                        }
                        None => {
                            counts.departed += 1;
                            recorder.depart(p.arrival_progress, progress, p.route, clock - p.arrival);
                        }
                    }
                    changed = true;
                }
            }
        }
        if changed {
            counts.events += 1;
            sigma = sf_allocation(&q, &mut cache);
        }
    }
    counts.in_system = q.iter().map(|&v| v as u64).sum();
    Ok(recorder.finish(Policy::StoreForward, transient, counts))
}

/// Index of the segment of `weights` (laid end to end) containing `u`.
fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Capacity, Route};

    fn mm1(rate: f64) -> (NetworkSpec, CapacityPolytope) {
        let p = CapacityPolytope::identity(1);
        let spec =
            NetworkSpec::new(vec!["q1".into()], vec![Route::new("r1", vec![0], rate)], Capacity::Matrix(p.clone()))
                .unwrap();
        (spec, p)
    }

    #[test]
    fn mm1_mean_queue() {
        let (spec, p) = mm1(0.5);
        let cfg = SimConfig::new(Horizon::Events(400_000), 3);
        let t = simulate_sf_ctmc(&spec, &p, &cfg).unwrap();
        let m = t.queue_means[0];
        assert!(m.within(1.0, 4.0), "{m:?}");
        assert!(t.is_conserved());
    }

    #[test]
    fn seed_determinism() {
        let (spec, p) = mm1(0.5);
        let cfg = SimConfig::new(Horizon::Time(500.0), 11);
        assert_eq!(simulate_sf_ctmc(&spec, &p, &cfg).unwrap(), simulate_sf_ctmc(&spec, &p, &cfg).unwrap());
    }

    #[test]
    fn zero_arrivals_give_empty_trace() {
        let p = CapacityPolytope::identity(1);
        let spec = NetworkSpec::new(vec!["q1".into()], vec![], Capacity::Matrix(p.clone())).unwrap();
        let t = simulate_sf_ctmc(&spec, &p, &SimConfig::new(Horizon::Events(1000), 1)).unwrap();
        assert_eq!(t.queue_means[0].mean, 0.0);
        assert_eq!(t.admitted, 0);
        let t = simulate_sf_ctmc(&spec, &p, &SimConfig::new(Horizon::Time(100.0), 1)).unwrap();
        assert_eq!(t.queue_means[0].mean, 0.0);
        assert!((t.observed_time - 80.0).abs() < 1e-9);
    }

    #[test]
    fn overload_is_flagged() {
        let (spec, p) = mm1(1.5);
        let t = simulate_sf_ctmc(&spec, &p, &SimConfig::new(Horizon::Time(100.0), 1)).unwrap();
        assert!(t.transient);
    }
}
