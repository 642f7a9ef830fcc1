//! Simulators for the Store-Forward network (continuous time) and for the
//! Proportional Scheduler and BackPressure (discrete time), sharing one
//! metrics pipeline.

mod ctmc;
mod slotted;

pub use ctmc::simulate_sf_ctmc;
pub use slotted::{bp_weights, simulate_bp, simulate_ps};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DEFAULT_SCHEDULE_VERTEX_CAP;
use crate::network::NetworkSpec;
use crate::state::{FifoContents, QueueVector};
use crate::stats::{batch_stderr, Estimate};
use crate::storeforward::ExactSampler;

/// Queue length at which joint histograms lump the remaining mass.
pub const HISTOGRAM_TRUNCATION: usize = 50;

/// Length of a run. Discrete-time simulators read both variants as slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// Simulated time.
    Time(f64),
    /// Number of state-changing events (arrivals and service completions).
    Events(u64),
}

/// Per-slot arrival law for the discrete-time simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalModel {
    #[default]
    Poisson,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum InitialState {
    #[default]
    Empty,
    /// A draw from the Store-Forward stationary law.
    Stationary,
    /// Given number of packets per route, all waiting at the route's first queue.
    Packets(Vec<u64>),
    Fifo(FifoContents),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: Horizon,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub batches: usize,
    pub arrivals: ArrivalModel,
    pub initial: InitialState,
    /// Spacing of composition and queue-vector snapshots (time units or slots).
    pub snapshot_interval: f64,
    /// Queue pairs with a time-weighted joint histogram.
    pub histogram_pairs: Vec<(usize, usize)>,
    /// Spacing of FIFO checkpoints over the whole run, warmup included.
    pub checkpoint_interval: Option<f64>,
    pub schedule_vertex_cap: usize,
}

impl SimConfig {
    pub fn new(horizon: Horizon, seed: u64) -> Self {
        Self {
            horizon,
            warmup_fraction: 0.2,
            seed,
            batches: 20,
            arrivals: ArrivalModel::Poisson,
            initial: InitialState::Empty,
            snapshot_interval: 10.0,
            histogram_pairs: Vec::new(),
            checkpoint_interval: None,
            schedule_vertex_cap: DEFAULT_SCHEDULE_VERTEX_CAP,
        }
    }

    pub fn validate(&self, num_queues: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warmup fraction must lie in [0, 1), got {}", self.warmup_fraction)));
        }
        if self.batches < 2 {
            return Err(Error::Config(format!("batch count must be at least 2, got {}", self.batches)));
        }
        match self.horizon {
            Horizon::Time(t) if !(t.is_finite() && t > 0.0) => {
                return Err(Error::Config(format!("horizon must be positive, got {t}")));
            }
            Horizon::Events(0) => return Err(Error::Config("horizon must be positive".into())),
            _ => {}
        }
        if !(self.snapshot_interval.is_finite() && self.snapshot_interval > 0.0) {
            return Err(Error::Config("snapshot interval must be positive".into()));
        }
        if let Some(c) = self.checkpoint_interval {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config("checkpoint interval must be positive".into()));
            }
        }
        if let Some(&(a, b)) = self.histogram_pairs.iter().find(|&&(a, b)| a >= num_queues || b >= num_queues) {
            return Err(Error::Config(format!("histogram pair ({a}, {b}) is out of range")));
        }
        Ok(())
    }

    pub(crate) fn total_progress(&self) -> f64 {
        match self.horizon {
            Horizon::Time(t) => t,
            Horizon::Events(n) => n as f64,
        }
    }

    pub(crate) fn slots(&self) -> u64 {
        match self.horizon {
            Horizon::Time(t) => t.ceil() as u64,
            Horizon::Events(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    StoreForward,
    ProportionalScheduler,
    BackPressure,
}

/// Time-weighted joint occupancy of two queues; the last index on each axis
/// collects lengths at or above the truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub pair: (usize, usize),
    pub weights: Vec<Vec<f64>>,
}

impl JointHistogram {
    pub fn new(pair: (usize, usize)) -> Self {
        let n = HISTOGRAM_TRUNCATION + 1;
        Self { pair, weights: vec![vec![0.0; n]; n] }
    }

    pub fn add(&mut self, q: &[u32], weight: f64) {
        let a = (q[self.pair.0] as usize).min(HISTOGRAM_TRUNCATION);
        let b = (q[self.pair.1] as usize).min(HISTOGRAM_TRUNCATION);
        self.weights[a][b] += weight;
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let rows = self.weights.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..self.weights.len()).map(|c| self.weights.iter().map(|r| r[c]).sum()).collect();
        (rows, cols)
    }

    /// Histogram with the same marginals and independent coordinates.
    pub fn product_of_marginals(&self) -> Vec<Vec<f64>> {
        let total = self.total();
        let (rows, cols) = self.marginals();
        rows.iter().map(|r| cols.iter().map(|c| if total > 0.0 { r * c / total } else { 0.0 }).collect()).collect()
    }
}

/// Joint histogram of a queue pair over independent samples; also returns the
/// product-of-marginals histogram.
pub fn collect_joint(samples: &[QueueVector], pair: (usize, usize)) -> Result<(JointHistogram, Vec<Vec<f64>>)> {
    if samples.is_empty() {
        return Err(Error::NoData("no samples for the joint histogram"));
    }
    let n = samples[0].len();
    if pair.0 >= n || pair.1 >= n {
        return Err(Error::Config(format!("queue pair {pair:?} is out of range")));
    }
    let mut h = JointHistogram::new(pair);
    for s in samples {
        h.add(s, 1.0);
    }
    let product = h.product_of_marginals();
    Ok((h, product))
}

/// The joint histogram a trace recorded for `pair`.
pub fn trace_joint(trace: &TraceMetrics, pair: (usize, usize)) -> Result<(JointHistogram, Vec<Vec<f64>>)> {
    let h = trace.joint.iter().find(|h| h.pair == pair).ok_or(Error::NoData("trace has no histogram for this pair"))?;
    if h.total() <= 0.0 {
        return Err(Error::NoData("trace histogram is empty"));
    }
    Ok((h.clone(), h.product_of_marginals()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub time: f64,
    pub fifo: FifoContents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub policy: Policy,
    /// Loads outside the capacity region: averages describe a transient.
    pub transient: bool,
    /// Post-warmup time (or slots) covered by the averages.
    pub observed_time: f64,
    pub queue_means: Vec<Estimate>,
    /// Time-averaged number of packets of each route in the network.
    pub route_populations: Vec<Estimate>,
    pub sojourns: Vec<Estimate>,
    /// `composition[j][r]`: packets of route `r` seen in queue `j` over all snapshots.
    pub composition: Vec<Vec<u64>>,
    pub queue_snapshots: Vec<QueueVector>,
    pub joint: Vec<JointHistogram>,
    pub checkpoints: Vec<Checkpoint>,
    /// Packets that entered the network, initial packets included.
    pub admitted: u64,
    pub departed: u64,
    pub in_system: u64,
    pub events: u64,
}

impl TraceMetrics {
    pub fn is_conserved(&self) -> bool {
        self.admitted == self.departed + self.in_system
    }
}

/// Accumulates time-weighted and per-departure statistics into batches.
pub(crate) struct Recorder {
    progress_is_time: bool,
    num_routes: usize,
    batches: usize,
    warm_end: f64,
    batch_len: f64,
    time: Vec<f64>,
    queue_area: Vec<Vec<f64>>,
    route_area: Vec<Vec<f64>>,
    sojourn_sum: Vec<Vec<f64>>,
    sojourn_count: Vec<Vec<u64>>,
    joint: Vec<JointHistogram>,
    composition: Vec<Vec<u64>>,
    snapshots: Vec<QueueVector>,
    snapshot_interval: f64,
    next_snapshot: Option<f64>,
    checkpoint_interval: Option<f64>,
    next_checkpoint: f64,
    checkpoints: Vec<Checkpoint>,
}

impl Recorder {
    pub(crate) fn new(cfg: &SimConfig, num_queues: usize, num_routes: usize, discrete: bool) -> Self {
        let total = cfg.total_progress();
        let warm_end = cfg.warmup_fraction * total;
        let b = cfg.batches;
        Self {
            progress_is_time: matches!(cfg.horizon, Horizon::Time(_)) && !discrete,
            num_routes,
            batches: b,
            warm_end,
            batch_len: (total - warm_end) / b as f64,
            time: vec![0.0; b],
            queue_area: vec![vec![0.0; num_queues]; b],
            route_area: vec![vec![0.0; num_routes]; b],
            sojourn_sum: vec![vec![0.0; num_routes]; b],
            sojourn_count: vec![vec![0; num_routes]; b],
            joint: cfg.histogram_pairs.iter().map(|&p| JointHistogram::new(p)).collect(),
            composition: vec![vec![0; num_routes]; num_queues],
            snapshots: Vec::new(),
            snapshot_interval: cfg.snapshot_interval,
            next_snapshot: None,
            checkpoint_interval: cfg.checkpoint_interval,
            next_checkpoint: 0.0,
            checkpoints: Vec::new(),
        }
    }

    fn batch_of(&self, progress: f64) -> Option<usize> {
        if progress < self.warm_end {
            return None;
        }
        let b = ((progress - self.warm_end) / self.batch_len) as usize;
        Some(b.min(self.batches - 1))
    }

    /// The state `q` (with per-queue route counts `x`) held for `dt`
    /// starting at clock `clock` and horizon progress `progress`.
    pub(crate) fn hold(
        &mut self,
        clock: f64,
        progress: f64,
        dt: f64,
        q: &[u32],
        x: &[Vec<u32>],
        fifo: impl Fn() -> FifoContents,
    ) {
        if let Some(interval) = self.checkpoint_interval {
            while self.next_checkpoint < clock + dt {
                self.checkpoints.push(Checkpoint { time: self.next_checkpoint, fifo: fifo() });
                self.next_checkpoint += interval;
            }
        }
        if !self.progress_is_time {
            if let Some(b) = self.batch_of(progress) {
                self.accumulate(b, clock, dt, q, x);
            }
            return;
        }
        // Split the interval at the warmup and batch boundaries.
        let end = progress + dt;
        let mut p = progress.max(self.warm_end);
        if p >= end {
            return;
        }
        let mut b = self.batch_of(p).expect("past warmup");
        loop {
            let bound =
                if b + 1 == self.batches { f64::INFINITY } else { self.warm_end + (b + 1) as f64 * self.batch_len };
            let e = bound.min(end);
            if e > p {
                self.accumulate(b, clock + (p - progress), e - p, q, x);
                p = e;
            }
            if p >= end {
                break;
            }
            b += 1;
        }
    }

    fn accumulate(&mut self, b: usize, clock: f64, dt: f64, q: &[u32], x: &[Vec<u32>]) {
        let next = self.next_snapshot.get_or_insert(clock);
        while *next < clock + dt {
            for (j, row) in x.iter().enumerate() {
                for (r, &c) in row.iter().enumerate() {
                    self.composition[j][r] += c as u64;
                }
            }
            self.snapshots.push(QueueVector(q.to_vec()));
            *next += self.snapshot_interval;
        }
        self.time[b] += dt;
        for (area, &n) in self.queue_area[b].iter_mut().zip(q) {
            *area += dt * n as f64;
        }
        for row in x {
            for (r, &c) in row.iter().enumerate() {
                self.route_area[b][r] += dt * c as f64;
            }
        }
        for h in &mut self.joint {
            h.add(q, dt);
        }
    }

    /// A packet that entered at `arrival_progress` leaves at `progress`
    /// after spending `sojourn` in the network.
    pub(crate) fn depart(&mut self, arrival_progress: f64, progress: f64, route: usize, sojourn: f64) {
        if arrival_progress < self.warm_end {
            return;
        }
        if let Some(b) = self.batch_of(progress) {
            self.sojourn_sum[b][route] += sojourn;
            self.sojourn_count[b][route] += 1;
        }
    }

    pub(crate) fn finish(self, policy: Policy, transient: bool, counts: Counts) -> TraceMetrics {
        let observed_time: f64 = self.time.iter().sum();
        let filled: Vec<usize> = (0..self.batches).filter(|&b| self.time[b] > 0.0).collect();
        let area_estimate = |area: &Vec<Vec<f64>>, k: usize| {
            if observed_time <= 0.0 {
                return Estimate::ZERO;
            }
            let total: f64 = filled.iter().map(|&b| area[b][k]).sum();
            let per_batch: Vec<f64> = filled.iter().map(|&b| area[b][k] / self.time[b]).collect();
            Estimate { mean: total / observed_time, stderr: batch_stderr(&per_batch), n: filled.len() as u64 }
        };
        let queue_means = (0..self.queue_area[0].len()).map(|j| area_estimate(&self.queue_area, j)).collect();
        let route_populations = (0..self.num_routes).map(|r| area_estimate(&self.route_area, r)).collect();
        let sojourns = (0..self.num_routes)
            .map(|r| {
                let n: u64 = (0..self.batches).map(|b| self.sojourn_count[b][r]).sum();
                if n == 0 {
                    return Estimate::ZERO;
                }
                let total: f64 = (0..self.batches).map(|b| self.sojourn_sum[b][r]).sum();
                let per_batch: Vec<f64> = (0..self.batches)
                    .filter(|&b| self.sojourn_count[b][r] > 0)
                    .map(|b| self.sojourn_sum[b][r] / self.sojourn_count[b][r] as f64)
                    .collect();
                Estimate { mean: total / n as f64, stderr: batch_stderr(&per_batch), n }
            })
            .collect();
        TraceMetrics {
            policy,
            transient,
            observed_time,
            queue_means,
            route_populations,
            sojourns,
            composition: self.composition,
            queue_snapshots: self.snapshots,
            joint: self.joint,
            checkpoints: self.checkpoints,
            admitted: counts.admitted,
            departed: counts.departed,
            in_system: counts.in_system,
            events: counts.events,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Counts {
    pub admitted: u64,
    pub departed: u64,
    pub in_system: u64,
    pub events: u64,
}

/// A packet in flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Packet {
    pub route: usize,
    pub arrival: f64,
    pub arrival_progress: f64,
}

/// Route labels of the packets present at time zero.
pub(crate) fn initial_fifo<R: rand::Rng>(cfg: &SimConfig, spec: &NetworkSpec, rng: &mut R) -> Result<FifoContents> {
    let n = spec.num_queues();
    match &cfg.initial {
        InitialState::Empty => Ok(FifoContents::empty(n)),
        InitialState::Stationary => {
            let polytope = spec.polytope()?;
            Ok(ExactSampler::new(spec, &polytope)?.sample(rng).state.fifo)
        }
        InitialState::Packets(counts) => {
            if counts.len() != spec.routes().len() {
                return Err(Error::DimensionMismatch {
                    what: "initial packets per route",
                    expected: spec.routes().len(),
                    actual: counts.len(),
                });
            }
            let mut fifo = FifoContents::empty(n);
            for (r, &c) in counts.iter().enumerate() {
                let first = spec.routes()[r].path[0];
                fifo.0[first].extend(std::iter::repeat_n(r, c as usize));
            }
            Ok(fifo)
        }
        InitialState::Fifo(fifo) => {
            fifo.validate(spec)?;
            Ok(fifo.clone())
        }
    }
}
