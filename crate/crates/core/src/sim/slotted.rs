use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Poisson};

use super::ctmc::next_hops;
use super::{initial_fifo, ArrivalModel, Counts, Packet, Policy, Recorder, SimConfig, TraceMetrics};
use crate::error::{Error, Result};
use crate::network::{compute_loads, NetworkSpec, Schedule};
use crate::propfair::{decompose_mean, pf_solve, ScheduleDistribution};
use crate::state::{FifoContents, QueueVector};

/// Memoized schedule distributions are dropped beyond this many states.
const PS_MEMO_LIMIT: usize = 200_000;

enum Arrivals {
    Poisson(Vec<Option<Poisson<f64>>>),
    Bernoulli(Vec<Bernoulli>),
}

impl Arrivals {
    fn new(spec: &NetworkSpec, model: ArrivalModel) -> Result<Self> {
        let rates = spec.routes().iter().map(|r| r.rate);
        match model {
            ArrivalModel::Poisson => Ok(Self::Poisson(rates.map(|a| Poisson::new(a).ok()).collect())),
            ArrivalModel::Bernoulli => rates
                .map(|a| {
                    Bernoulli::new(a)
                        .map_err(|_| Error::Config(format!("Bernoulli arrivals need rates in [0, 1], got {a}")))
                })
                .collect::<Result<_>>()
                .map(Self::Bernoulli),
        }
    }

    fn draw<R: Rng>(&self, route: usize, rng: &mut R) -> u64 {
        match self {
            Self::Poisson(d) => d[route].as_ref().map_or(0, |d| d.sample(rng) as u64),
            Self::Bernoulli(d) => d[route].sample(rng) as u64,
        }
    }
}

fn check_schedules(spec: &NetworkSpec, schedules: &[Schedule]) -> Result<()> {
    if schedules.is_empty() {
        return Err(Error::NoData("schedule set is empty"));
    }
    match schedules.iter().find(|s| s.len() != spec.num_queues()) {
        Some(s) => {
            Err(Error::DimensionMismatch { what: "schedule length", expected: spec.num_queues(), actual: s.len() })
        }
        None => Ok(()),
    }
}

/// Admissibility when a facet description exists; schedule lists are
/// assumed admissible.
fn is_transient(spec: &NetworkSpec) -> Result<bool> {
    match spec.polytope() {
        Ok(p) => Ok(!compute_loads(spec, &p)?.admissible),
        Err(Error::Unsupported(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Proportional Scheduler: each slot, draw arrivals, solve the
/// proportional-fair problem at the current queue lengths, draw a schedule
/// whose mean is the solution, and serve `min(σ_j, Q_j)` packets from the
/// front of each queue. Served packets are forwarded in queue order, then
/// route order. Queue lengths are recorded at the end of each slot.
pub fn simulate_ps(spec: &NetworkSpec, schedules: &[Schedule], cfg: &SimConfig) -> Result<TraceMetrics> {
    cfg.validate(spec.num_queues())?;
    check_schedules(spec, schedules)?;
    let polytope = spec.polytope()?;
    let transient = is_transient(spec)?;
    let n = spec.num_queues();
    let num_routes = spec.routes().len();
    let next = next_hops(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = Arrivals::new(spec, cfg.arrivals)?;

    let mut queues: Vec<VecDeque<Packet>> = vec![VecDeque::new(); n];
    let mut x = vec![vec![0u32; num_routes]; n];
    let mut counts = Counts::default();
    for (j, labels) in initial_fifo(cfg, spec, &mut rng)?.0.into_iter().enumerate() {
        for r in labels {
            queues[j].push_back(Packet { route: r, arrival: 0.0, arrival_progress: 0.0 });
            x[j][r] += 1;
            counts.admitted += 1;
        }
    }

    let mut recorder = Recorder::new(cfg, n, num_routes, true);
    let mut memo: HashMap<Vec<u32>, ScheduleDistribution> = HashMap::new();
    let mut moved: Vec<(usize, Packet)> = Vec::new();
    for slot in 0..cfg.slots() {
        let t = slot as f64;
        for (r, route) in spec.routes().iter().enumerate() {
            let k = arrivals.draw(r, &mut rng);
            let j = route.path[0];
            for _ in 0..k {
                queues[j].push_back(Packet { route: r, arrival: t, arrival_progress: t });
                x[j][r] += 1;
            }
            counts.admitted += k;
            counts.events += k;
        }

        let q: Vec<u32> = queues.iter().map(|d| d.len() as u32).collect();
        if q.iter().any(|&v| v > 0) {
            if memo.len() >= PS_MEMO_LIMIT {
                memo.clear();
            }
            let dist = match memo.get(&q) {
                Some(d) => d,
                None => {
                    let s = pf_solve(&QueueVector(q.clone()), &polytope)?;
                    let d = decompose_mean(&s.allocation, schedules)?;
                    memo.entry(q.clone()).or_insert(d)
                }
            };
            let schedule = dist.select(rng.random::<f64>());
            moved.clear();
            for j in 0..n {
                let serve = schedule[j].min(q[j]) as usize;
                let start = moved.len();
                for p in queues[j].drain(..serve) {
                    x[j][p.route] -= 1;
                    moved.push((j, p));
                }
                moved[start..].sort_by_key(|(_, p)| p.route);
            }
            for &(j, p) in &moved {
                counts.events += 1;
                match next[p.route][j] {
                    Some(k) => {
                        queues[k].push_back(p);
                        x[k][p.route] += 1;
                    }
                    None => {
                        counts.departed += 1;
                        recorder.depart(p.arrival_progress, t, p.route, t - p.arrival);
                    }
                }
            }
        }

        let q: Vec<u32> = queues.iter().map(|d| d.len() as u32).collect();
        recorder.hold(t, t, 1.0, &q, &x, || {
            FifoContents(queues.iter().map(|d| d.iter().map(|p| p.route).collect()).collect())
        });
    }
    counts.in_system = queues.iter().map(|d| d.len() as u64).sum();
    Ok(recorder.finish(Policy::ProportionalScheduler, transient, counts))
}

/// BackPressure weights from per-queue, per-route counts `x[j][r]`:
/// `w_j = max_{r∋j} max(x_jr - x_{next(r,j), r}, 0)` together with the
/// lowest-index route attaining a positive maximum.
pub fn bp_weights(x: &[Vec<u32>], spec: &NetworkSpec) -> Vec<(u32, Option<usize>)> {
    (0..spec.num_queues())
        .map(|j| {
            let mut best = (0u32, None);
            for r in spec.routes_through(j) {
                let downstream = spec.next_queue(r, j).map_or(0, |k| x[k][r]);
                let diff = x[j][r].saturating_sub(downstream);
                if diff > best.0 {
                    best = (diff, Some(r));
                }
            }
            best
        })
        .collect()
}

/// BackPressure: each slot, weight each queue by its largest per-route
/// backlog difference with the downstream queue, pick the schedule of
/// maximum weight (ties to the lexicographically smallest), and move up to
/// `σ_j` packets of the chosen route from queues with positive weight.
pub fn simulate_bp(spec: &NetworkSpec, schedules: &[Schedule], cfg: &SimConfig) -> Result<TraceMetrics> {
    cfg.validate(spec.num_queues())?;
    check_schedules(spec, schedules)?;
    let transient = is_transient(spec)?;
    let n = spec.num_queues();
    let num_routes = spec.routes().len();
    let next = next_hops(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = Arrivals::new(spec, cfg.arrivals)?;
    let mut sorted = schedules.to_vec();
    sorted.sort();
    sorted.dedup();

    let mut buffers: Vec<Vec<VecDeque<Packet>>> = vec![vec![VecDeque::new(); num_routes]; n];
    let mut x = vec![vec![0u32; num_routes]; n];
    let mut counts = Counts::default();
    for (j, labels) in initial_fifo(cfg, spec, &mut rng)?.0.into_iter().enumerate() {
        for r in labels {
            buffers[j][r].push_back(Packet { route: r, arrival: 0.0, arrival_progress: 0.0 });
            x[j][r] += 1;
            counts.admitted += 1;
        }
    }

    let mut recorder = Recorder::new(cfg, n, num_routes, true);
    let mut moved: Vec<(usize, Packet)> = Vec::new();
    for slot in 0..cfg.slots() {
        let t = slot as f64;
        for (r, route) in spec.routes().iter().enumerate() {
            let k = arrivals.draw(r, &mut rng);
            let j = route.path[0];
            for _ in 0..k {
                buffers[j][r].push_back(Packet { route: r, arrival: t, arrival_progress: t });
            }
            x[j][r] += k as u32;
            counts.admitted += k;
            counts.events += k;
        }

        let weights = bp_weights(&x, spec);
        let mut best: Option<(&Schedule, u64)> = None;
        for s in &sorted {
            let value: u64 = s.iter().zip(&weights).map(|(&sj, &(w, _))| sj as u64 * w as u64).sum();
            if best.is_none_or(|(_, v)| value > v) {
                best = Some((s, value));
            }
        }
        let schedule = best.expect("schedule set is nonempty").0;

        moved.clear();
        for j in 0..n {
            let (w, route) = weights[j];
            let Some(r) = route else { continue };
            if w == 0 || schedule[j] == 0 {
                continue;
            }
            let serve = (schedule[j]).min(x[j][r]) as usize;
            for p in buffers[j][r].drain(..serve) {
                moved.push((j, p));
            }
            x[j][r] -= serve as u32;
        }
        for &(j, p) in &moved {
            counts.events += 1;
            match next[p.route][j] {
                Some(k) => {
                    buffers[k][p.route].push_back(p);
                    x[k][p.route] += 1;
                }
                None => {
                    counts.departed += 1;
                    recorder.depart(p.arrival_progress, t, p.route, t - p.arrival);
                }
            }
        }

        let q: Vec<u32> = x.iter().map(|row| row.iter().sum()).collect();
        recorder.hold(t, t, 1.0, &q, &x, || {
            FifoContents(
                buffers
                    .iter()
                    .map(|per_route| per_route.iter().flat_map(|d| d.iter().map(|p| p.route)).collect())
                    .collect(),
            )
        });
    }
    counts.in_system = x.iter().flatten().map(|&v| v as u64).sum();
    Ok(recorder.finish(Policy::BackPressure, transient, counts))
}
