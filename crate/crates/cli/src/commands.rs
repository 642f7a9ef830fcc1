//! One function per experiment kind. Each returns the metric rows and the
//! structured results for the summary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use switchnet_core::analysis::{
    balance_check, forward_transitions, independence_test, ldp_rate, lyapunov_drift, phi_log_limit, IndependenceConfig,
    PiecewiseLinearProfile, TransitionClass,
};
use switchnet_core::sim::{simulate_bp, simulate_ps, simulate_sf_ctmc, InitialState, SimConfig, TraceMetrics};
use switchnet_core::stats::Estimate;
use switchnet_core::storeforward::{exact_sampler, expected_delay, expected_queue_lengths, ExactSampler};
use switchnet_core::{compute_loads, CapacityPolytope, Error, NetworkSpec, PhiCache, QueueVector, Result};

use crate::experiment::{Experiment, Kind, PolicyName, SampleSource};
use crate::output::{Bundle, MetricRow};

pub fn run(kind: Kind, exp: &Experiment, spec: &NetworkSpec) -> Result<Bundle> {
    match kind {
        Kind::Analyze => analyze(spec),
        Kind::Simulate => simulate(exp, spec),
        Kind::Compare => compare(exp, spec),
        Kind::Independence => independence(exp, spec),
        Kind::Ldp => ldp(exp, spec),
        Kind::Balance => balance(exp, spec),
    }
}

fn route_ids(spec: &NetworkSpec) -> Vec<String> {
    spec.routes().iter().map(|r| r.id.clone()).collect()
}

pub fn analyze(spec: &NetworkSpec) -> Result<Bundle> {
    let p = spec.polytope()?;
    let loads = compute_loads(spec, &p)?;
    loads.require_admissible()?;
    let queue_lengths = expected_queue_lengths(spec, &p)?;
    let delays = (0..spec.routes().len()).map(|r| expected_delay(r, spec, &p)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (label, &a) in p.labels().iter().zip(&loads.pool_loads) {
        rows.push(MetricRow::exact("pool_load", label.clone(), a));
    }
    for (name, &a) in spec.queues().iter().zip(&loads.queue_loads) {
        rows.push(MetricRow::exact("queue_load", name.clone(), a));
    }
    for (name, &q) in spec.queues().iter().zip(&queue_lengths) {
        rows.push(MetricRow::exact("mean_queue_length", name.clone(), q));
    }
    for (id, &d) in route_ids(spec).iter().zip(&delays) {
        rows.push(MetricRow::exact("mean_delay", id.clone(), d));
    }
    let results = json!({
        "pools": p.labels(),
        "pool_loads": loads.pool_loads,
        "queues": spec.queues(),
        "queue_loads": loads.queue_loads,
        "mean_queue_lengths": queue_lengths,
        "routes": route_ids(spec),
        "mean_delays": delays,
    });
    Ok(Bundle { rows, results })
}

/// Runs the configured simulator for one seed.
fn replicate(
    exp: &Experiment,
    spec: &NetworkSpec,
    polytope: Option<&CapacityPolytope>,
    cfg: &SimConfig,
) -> Result<TraceMetrics> {
    match exp.config.simulation.policy {
        PolicyName::Sf => {
            let p = polytope
                .ok_or_else(|| Error::Config("the Store-Forward simulator needs a facet description".into()))?;
            simulate_sf_ctmc(spec, p, cfg)
        }
        PolicyName::Ps => simulate_ps(spec, &spec.schedules(cfg.schedule_vertex_cap)?, cfg),
        PolicyName::Bp => simulate_bp(spec, &spec.schedules(cfg.schedule_vertex_cap)?, cfg),
    }
}

/// One trace per seed, in seed-list order.
fn replications(
    exp: &Experiment,
    spec: &NetworkSpec,
    adjust: impl Fn(&mut SimConfig) + Sync,
) -> Result<Vec<(u64, TraceMetrics)>> {
    let polytope = match exp.config.simulation.policy {
        PolicyName::Sf => Some(spec.polytope()?),
        _ => None,
    };
    let configs = exp
        .config
        .seeds
        .iter()
        .map(|&seed| {
            let mut cfg = exp.config.simulation.to_config(seed)?;
            adjust(&mut cfg);
            cfg.validate(spec.num_queues())?;
            Ok((seed, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    configs.par_iter().map(|(seed, cfg)| replicate(exp, spec, polytope.as_ref(), cfg).map(|t| (*seed, t))).collect()
}

/// Mean over replications, with the batch-means standard errors pooled.
fn merge(estimates: &[Estimate]) -> Estimate {
    let k = estimates.len() as f64;
    Estimate {
        mean: estimates.iter().map(|e| e.mean).sum::<f64>() / k,
        stderr: estimates.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / k,
        n: estimates.iter().map(|e| e.n).sum(),
    }
}

fn merged(traces: &[(u64, TraceMetrics)], pick: impl Fn(&TraceMetrics) -> &[Estimate]) -> Vec<Estimate> {
    let width = pick(&traces[0].1).len();
    (0..width).map(|i| merge(&traces.iter().map(|(_, t)| pick(t)[i]).collect::<Vec<_>>())).collect()
}

fn warn_transient(traces: &[(u64, TraceMetrics)]) {
    if traces.iter().any(|(_, t)| t.transient) {
        eprintln!("warning: loads lie outside the capacity region; averages describe a transient");
    }
}

fn per_seed(traces: &[(u64, TraceMetrics)]) -> serde_json::Value {
    traces
        .iter()
        .map(|(seed, t)| {
            json!({
                "seed": seed,
                "transient": t.transient,
                "observed_time": t.observed_time,
                "events": t.events,
                "admitted": t.admitted,
                "departed": t.departed,
                "in_system": t.in_system,
                "queue_means": t.queue_means,
                "route_populations": t.route_populations,
                "sojourns": t.sojourns,
            })
        })
        .collect()
}

pub fn simulate(exp: &Experiment, spec: &NetworkSpec) -> Result<Bundle> {
    let traces = replications(exp, spec, |_| {})?;
    warn_transient(&traces);
    let queues = merged(&traces, |t| &t.queue_means);
    let populations = merged(&traces, |t| &t.route_populations);
    let sojourns = merged(&traces, |t| &t.sojourns);

    let mut rows = Vec::new();
    for (name, &e) in spec.queues().iter().zip(&queues) {
        rows.push(MetricRow::estimate("mean_queue_length", name.clone(), e));
    }
    for (id, &e) in route_ids(spec).iter().zip(&populations) {
        rows.push(MetricRow::estimate("mean_route_population", id.clone(), e));
    }
    for (id, &e) in route_ids(spec).iter().zip(&sojourns) {
        rows.push(MetricRow::estimate("mean_delay", id.clone(), e));
    }
    let results = json!({
        "policy": exp.config.simulation.policy,
        "queues": spec.queues(),
        "routes": route_ids(spec),
        "mean_queue_lengths": queues,
        "mean_route_populations": populations,
        "mean_delays": sojourns,
        "replications": per_seed(&traces),
    });
    Ok(Bundle { rows, results })
}

pub fn compare(exp: &Experiment, spec: &NetworkSpec) -> Result<Bundle> {
    let analytic = analyze(spec)?;
    let p = spec.polytope()?;
    let queue_lengths = expected_queue_lengths(spec, &p)?;
    let delays = (0..spec.routes().len()).map(|r| expected_delay(r, spec, &p)).collect::<Result<Vec<_>>>()?;
    let traces = replications(exp, spec, |_| {})?;
    warn_transient(&traces);
    let sim_queues = merged(&traces, |t| &t.queue_means);
    let sim_delays = merged(&traces, |t| &t.sojourns);

    let z = |e: &Estimate, v: f64| {
        if e.stderr > 0.0 {
            (e.mean - v) / e.stderr
        } else {
            f64::NAN
        }
    };
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (j, name) in spec.queues().iter().enumerate() {
        rows.push(MetricRow::exact("analytic_mean_queue_length", name.clone(), queue_lengths[j]));
        rows.push(MetricRow::estimate("simulated_mean_queue_length", name.clone(), sim_queues[j]));
        table.push(json!({
            "metric": "mean_queue_length",
            "id": name,
            "analytic": queue_lengths[j],
            "simulated": sim_queues[j],
            "z": z(&sim_queues[j], queue_lengths[j]),
        }));
    }
    for (r, id) in route_ids(spec).iter().enumerate() {
        rows.push(MetricRow::exact("analytic_mean_delay", id.clone(), delays[r]));
        rows.push(MetricRow::estimate("simulated_mean_delay", id.clone(), sim_delays[r]));
        table.push(json!({
            "metric": "mean_delay",
            "id": id,
            "analytic": delays[r],
            "simulated": sim_delays[r],
            "z": z(&sim_delays[r], delays[r]),
        }));
    }
    let results = json!({
        "policy": exp.config.simulation.policy,
        "analytic": analytic.results,
        "comparison": table,
        "replications": per_seed(&traces),
    });
    Ok(Bundle { rows, results })
}

fn queue_pairs(exp: &Experiment, spec: &NetworkSpec) -> Result<Vec<(usize, usize)>> {
    let settings = &exp.config.independence;
    if settings.pairs.is_empty() {
        let n = spec.num_queues();
        return Ok((0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect());
    }
    settings
        .pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let index = |name: &str| {
                spec.queue_index(name)
                    .ok_or_else(|| Error::Config(format!("independence.pairs[{i}]: unknown queue {name:?}")))
            };
            let pair = (index(a)?, index(b)?);
            if pair.0 == pair.1 {
                return Err(Error::Config(format!("independence.pairs[{i}]: a queue is paired with itself")));
            }
            Ok(pair)
        })
        .collect()
}

pub fn independence(exp: &Experiment, spec: &NetworkSpec) -> Result<Bundle> {
    let settings = &exp.config.independence;
    let p = spec.polytope()?;
    let pairs = queue_pairs(exp, spec)?;
    let samples: Vec<QueueVector> = match settings.source {
        SampleSource::Exact => {
            let per_seed = exp
                .config
                .seeds
                .par_iter()
                .map(|&seed| exact_sampler(spec, &p, seed, settings.samples))
                .collect::<Result<Vec<_>>>()?;
            per_seed.into_iter().flatten().map(|s| s.queues()).collect()
        }
        SampleSource::Ctmc => {
            if exp.config.simulation.policy != PolicyName::Sf {
                return Err(Error::Config(
                    "independence.source = \"ctmc\" samples the Store-Forward chain; set simulation.policy = \"sf\""
                        .into(),
                ));
            }
            let traces = replications(exp, spec, |_| {})?;
            traces.into_iter().flat_map(|(_, t)| t.queue_snapshots).collect()
        }
    };
    let cfg = IndependenceConfig {
        p_threshold: settings.p_threshold,
        corr_threshold: settings.corr_threshold,
        ..IndependenceConfig::default()
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &(a, b) in &pairs {
        let report = independence_test(&samples, (a, b), &p, &cfg)?;
        let id = format!("{}:{}", spec.queues()[a], spec.queues()[b]);
        let n = Some(report.samples as u64);
        rows.push(MetricRow { n, ..MetricRow::exact("correlation", id.clone(), report.correlation) });
        rows.push(MetricRow { n, ..MetricRow::exact("chi_square_p_value", id.clone(), report.chi_square.p_value) });
        reports.push(json!({ "id": id, "report": report }));
    }
    let results = json!({
        "source": settings.source,
        "samples": samples.len(),
        "pairs": reports,
    });
    Ok(Bundle { rows, results })
}

pub fn ldp(exp: &Experiment, spec: &NetworkSpec) -> Result<Bundle> {
    let settings = &exp.config.ldp;
    if settings.q.is_empty() {
        return Err(Error::Config("ldp.q: a queue vector is required for ldp experiments".into()));
    }
    if settings.q.len() != spec.num_queues() {
        return Err(Error::Config(format!(
            "ldp.q: expected {} entries (one per queue), got {}",
            spec.num_queues(),
            settings.q.len()
        )));
    }
    let p = spec.polytope()?;
    let q = QueueVector::from(settings.q.clone());
    let limit = phi_log_limit(&q, &p, &settings.scales)?;
    let qf: Vec<f64> = settings.q.iter().map(|&x| x as f64).collect();
    let profile = PiecewiseLinearProfile::stationary(&qf, spec)?;
    let rate = ldp_rate(&qf, &profile, spec, &p)?;

    let mut rows = Vec::new();
    for &(c, v) in &limit.values {
        rows.push(MetricRow::exact("scaled_log_phi", format!("c={c}"), v));
    }
    rows.push(MetricRow::exact("scaled_log_phi_limit", "q", limit.target));
    rows.push(MetricRow::exact("stationary_rate", "q", rate));

    let mut drift = serde_json::Value::Null;
    if settings.drift {
        let packets = vec![settings.initial_packets; spec.routes().len()];
        let interval = settings.checkpoint_interval;
        let mut ps = exp.clone();
        ps.config.simulation.policy = PolicyName::Ps;
        let traces = replications(&ps, spec, |cfg| {
            cfg.initial = InitialState::Packets(packets.clone());
            cfg.checkpoint_interval = Some(interval);
        })?;
        let reports = traces.iter().map(|(_, t)| lyapunov_drift(t, spec, &p, None)).collect::<Result<Vec<_>>>()?;
        let slopes: Vec<Estimate> = reports
            .iter()
            .map(|r| Estimate { mean: r.slope, stderr: r.slope_stderr, n: r.times.len() as u64 })
            .collect();
        rows.push(MetricRow::estimate("ps_rate_slope", "q", merge(&slopes)));
        drift = traces.iter().zip(&reports).map(|((seed, _), r)| json!({ "seed": seed, "drift": r })).collect();
    }
    let results = json!({
        "q": settings.q,
        "limit": limit,
        "stationary_rate": rate,
        "drift": drift,
    });
    Ok(Bundle { rows, results })
}

fn class_name(class: TransitionClass) -> &'static str {
    match class {
        TransitionClass::Arrival { .. } => "arrival",
        TransitionClass::Departure { .. } => "departure",
        TransitionClass::InternalMove { .. } => "move",
    }
}

pub fn balance(exp: &Experiment, spec: &NetworkSpec) -> Result<Bundle> {
    let checks = exp.config.balance.checks;
    if checks == 0 {
        return Err(Error::Config("balance.checks: must be positive".into()));
    }
    let p = spec.polytope()?;
    let sampler = ExactSampler::new(spec, &p)?;
    let per_seed = exp
        .config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut cache = PhiCache::new(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = [0.0f64; 3];
            let mut counts = [0u64; 3];
            let mut worst_total = 0.0f64;
            for _ in 0..checks {
                let from = sampler.sample(&mut rng).state;
                let moves = forward_transitions(&from, spec, &mut cache);
                let to = &moves[rng.random_range(0..moves.len())].target;
                let report = balance_check(&from, to, spec, &p, &mut cache)?;
                let k = match report.class {
                    TransitionClass::Arrival { .. } => 0,
                    TransitionClass::Departure { .. } => 1,
                    TransitionClass::InternalMove { .. } => 2,
                };
                worst[k] = worst[k].max(report.residual);
                counts[k] += 1;
                worst_total = worst_total.max(report.total_rate_residual);
            }
            Ok((seed, worst, counts, worst_total))
        })
        .collect::<Result<Vec<_>>>()?;

    let classes = [
        TransitionClass::Arrival { route: 0 },
        TransitionClass::Departure { route: 0, queue: 0 },
        TransitionClass::InternalMove { route: 0, from: 0, to: 0 },
    ];
    let mut rows = Vec::new();
    for (k, &class) in classes.iter().enumerate() {
        let worst = per_seed.iter().map(|s| s.1[k]).fold(0.0, f64::max);
        let n: u64 = per_seed.iter().map(|s| s.2[k]).sum();
        rows.push(MetricRow { n: Some(n), ..MetricRow::exact("max_balance_residual", class_name(class), worst) });
    }
    let worst_total = per_seed.iter().map(|s| s.3).fold(0.0, f64::max);
    rows.push(MetricRow {
        n: Some((checks * per_seed.len()) as u64),
        ..MetricRow::exact("max_total_rate_residual", "all", worst_total)
    });
    let results = json!({
        "checks_per_seed": checks,
        "replications": per_seed
            .iter()
            .map(|(seed, worst, counts, total)| json!({
                "seed": seed,
                "max_residual": { "arrival": worst[0], "departure": worst[1], "move": worst[2] },
                "checks": { "arrival": counts[0], "departure": counts[1], "move": counts[2] },
                "max_total_rate_residual": total,
            }))
            .collect::<Vec<_>>(),
    });
    Ok(Bundle { rows, results })
}
