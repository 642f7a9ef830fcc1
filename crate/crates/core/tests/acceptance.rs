//! Acceptance criteria. Each test prints one `PASS` or `FAIL` line and then
//! asserts the same condition.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use switchnet_core::analysis::{
    balance_check, forward_transitions, independence_test, ldp_rate, lyapunov_drift, phi_log_limit, IndependenceConfig,
    PiecewiseLinearProfile, Verdict,
};
use switchnet_core::sim::{simulate_bp, simulate_ps, simulate_sf_ctmc, Horizon, InitialState, SimConfig};
use switchnet_core::stats::{chi_square_goodness_of_fit, correlation, least_squares};
use switchnet_core::storeforward::{exact_sampler, expected_queue_lengths, ExactSampler};
use switchnet_core::*;

fn report(id: u32, title: &str, pass: bool, detail: String) {
    let line = format!("{} criterion {id} ({title}): {detail}\n", if pass { "PASS" } else { "FAIL" });
    // Written to the handle directly so the line shows up without `--nocapture`.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn random_polytope(rng: &mut ChaCha8Rng) -> CapacityPolytope {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=3);
    let mut rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| match rng.random_range(0..3) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.random_range(0.1..2.0),
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        if rows.iter().all(|r| r[j] == 0.0) {
            let l = rng.random_range(0..m);
            rows[l][j] = 1.0;
        }
    }
    CapacityPolytope::new(rows).unwrap()
}

/// Every vector of length `n` with entries summing to at most `total`.
fn bounded_vectors(n: usize, total: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in bounded_vectors(n - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[test]
fn criterion_01_phi_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..50 {
        let p = random_polytope(&mut rng);
        let mut cache = PhiCache::new(&p);
        for q in bounded_vectors(p.num_queues(), 10) {
            let oracle = phi_bruteforce(&QueueVector(q.clone()), &p, 24).unwrap();
            let fast = cache.phi(&q);
            worst = worst.max((fast - oracle).abs() / oracle.abs().max(1e-300));
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "normalizing constant against enumeration",
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("{checked} vectors on 50 networks, worst relative error {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_store_forward_approaches_proportional_fairness() {
    let start = Instant::now();
    let scales = [8, 32, 128, 512];
    let mut lines = Vec::new();
    let mut pass = true;

    let single = catalog::example("single-pool").unwrap().polytope().unwrap();
    let mut worst_single = 0.0f64;
    for q in [vec![1, 1], vec![2, 1], vec![3, 7]] {
        for g in sf_pf_gap(&QueueVector(q), &single, &[1, 8, 32, 128, 512]).unwrap() {
            worst_single = worst_single.max(g.gap);
        }
    }
    pass &= worst_single <= 1e-10;
    lines.push(format!("single-pool max gap {worst_single:.1e}"));

    for (name, q) in [("tandem", vec![1, 1]), ("four-cycle", vec![1, 1, 1, 1])] {
        let p = catalog::example(name).unwrap().polytope().unwrap();
        let gaps: Vec<f64> = sf_pf_gap(&QueueVector(q), &p, &scales).unwrap().iter().map(|g| g.gap).collect();
        let last = *gaps.last().unwrap();
        let decreasing = gaps.windows(2).all(|w| w[1] <= w[0]);
        let exact_zero = gaps.iter().all(|&g| g <= 1e-12);
        pass &= last <= 1e-2 && (decreasing || exact_zero);
        lines.push(format!("{name} gaps {}", sci(&gaps)));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    report(2, "SF to PF limit", pass, format!("{}; {elapsed:.2?}", lines.join("; ")));
}

#[test]
fn criterion_03_balance_equations() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_total = 0.0f64;
    let mut checks = 0usize;
    for (k, name) in catalog::example_names().into_iter().enumerate() {
        let spec = catalog::example(name).unwrap();
        let p = spec.polytope().unwrap();
        let mut cache = PhiCache::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let sampler = ExactSampler::new(&spec, &p).unwrap();
        for _ in 0..1000 {
            let from = sampler.sample(&mut rng).state;
            let moves = forward_transitions(&from, &spec, &mut cache);
            let to = &moves[rng.random_range(0..moves.len())].target;
            let rep = balance_check(&from, to, &spec, &p, &mut cache).unwrap();
            worst = worst.max(rep.residual);
            worst_total = worst_total.max(rep.total_rate_residual);
            checks += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        3,
        "balance equations",
        worst < 1e-12 && worst_total < 1e-12 && elapsed < Duration::from_secs(5),
        format!("{checks} transitions, worst residual {worst:.1e}, worst total-rate residual {worst_total:.1e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_delay_formula() {
    let start = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, target, seed) in [("tandem", 4.0, 11), ("single-pool-route", 5.0, 12)] {
        let spec = catalog::example(name).unwrap();
        let p = spec.polytope().unwrap();
        let formula = storeforward::expected_delay(0, &spec, &p).unwrap();
        let trace = simulate_sf_ctmc(&spec, &p, &SimConfig::new(Horizon::Events(1_000_000), seed)).unwrap();
        let d = trace.sojourns[0];
        pass &= (formula - target).abs() < 1e-12 && d.within(target, 3.0);
        lines.push(format!("{name} formula {formula:.4}, simulated {:.4} ± {:.4}", d.mean, d.stderr));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    report(4, "mean delay", pass, format!("{}; {elapsed:.2?}", lines.join("; ")));
}

#[test]
fn criterion_05_queue_length_formula() {
    let start = Instant::now();
    let names = catalog::example_names();
    let runs: Vec<(usize, Vec<String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = names
            .iter()
            .enumerate()
            .flat_map(|(k, &name)| [(k, name, 0usize, 0.5), (k, name, 1, 0.8)])
            .map(|(k, name, i, load)| {
                scope.spawn(move || {
                    let spec = catalog::example(name).unwrap().with_max_pool_load(load).unwrap();
                    let p = spec.polytope().unwrap();
                    let expected = expected_queue_lengths(&spec, &p).unwrap();
                    let events = if spec.num_queues() > 4 { 200_000 } else { 1_000_000 };
                    let mut cfg = SimConfig::new(Horizon::Events(events), 500 + 2 * k as u64 + i as u64);
                    cfg.initial = InitialState::Stationary;
                    let trace = simulate_sf_ctmc(&spec, &p, &cfg).unwrap();
                    let mut failures = Vec::new();
                    for (j, est) in trace.queue_means.iter().enumerate() {
                        if !est.within(expected[j], 3.0) {
                            failures.push(format!(
                                "{name}@{load} {}: {:.4} ± {:.4} vs {:.4}",
                                spec.queues()[j],
                                est.mean,
                                est.stderr,
                                expected[j]
                            ));
                        }
                    }
                    (trace.queue_means.len(), failures)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let compared: usize = runs.iter().map(|r| r.0).sum();
    let failures: Vec<String> = runs.into_iter().flat_map(|r| r.1).collect();
    let elapsed = start.elapsed();
    let detail = if failures.is_empty() {
        format!("{compared} queue means within 3 SE, {elapsed:.2?}")
    } else {
        format!("{} of {compared} outside 3 SE: {}", failures.len(), failures.join("; "))
    };
    report(5, "mean queue lengths", failures.is_empty(), detail);
}

#[test]
fn criterion_06_composition_law() {
    let spec = catalog::example("merge").unwrap();
    let p = spec.polytope().unwrap();
    let mut cfg = SimConfig::new(Horizon::Time(400_000.0), 21);
    cfg.snapshot_interval = 40.0;
    let trace = simulate_sf_ctmc(&spec, &p, &cfg).unwrap();
    let q2 = spec.queue_index("q2").unwrap();
    let observed: Vec<f64> = trace.composition[q2].iter().map(|&c| c as f64).collect();
    let loads = spec.queue_loads();
    let probs: Vec<f64> = spec.routes().iter().map(|r| r.rate / loads[q2]).collect();
    let swapped: Vec<f64> = probs.iter().rev().copied().collect();
    let fit = chi_square_goodness_of_fit(&observed, &probs).unwrap();
    let perturbed = chi_square_goodness_of_fit(&observed, &swapped).unwrap();
    report(
        6,
        "route composition",
        fit.p_value >= 0.001 && perturbed.p_value < 0.001,
        format!(
            "counts {observed:?}, p = {:.3} under a_r/a_j, p = {:.1e} with rates swapped",
            fit.p_value, perturbed.p_value
        ),
    );
}

#[test]
fn criterion_07_independence() {
    let cfg = IndependenceConfig::default();
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, name) in ["k22", "four-cycle", "grid-3x3"].into_iter().enumerate() {
        let spec = catalog::example(name).unwrap();
        let p = spec.polytope().unwrap();
        let samples: Vec<QueueVector> =
            exact_sampler(&spec, &p, 700 + k as u64, 100_000).unwrap().iter().map(|s| s.queues()).collect();
        let mut pairs = 0;
        let mut worst_corr = 0.0f64;
        let mut worst_p = 1.0f64;
        for a in 0..spec.num_queues() {
            for b in a + 1..spec.num_queues() {
                if p.shares_pool(a, b) {
                    continue;
                }
                let rep = independence_test(&samples, (a, b), &p, &cfg).unwrap();
                pairs += 1;
                worst_corr = worst_corr.max(rep.correlation.abs());
                worst_p = worst_p.min(rep.chi_square.p_value);
                pass &= rep.verdict == Verdict::IndependentConsistent;
            }
        }
        lines.push(format!("{name}: {pairs} pairs, max |corr| {worst_corr:.4}, min p {worst_p:.4}"));
    }

    let spec = NetworkSpec::new(
        vec!["q1".into(), "q2".into()],
        vec![Route::new("r1", vec![0], 0.3), Route::new("r2", vec![1], 0.3)],
        Capacity::Matrix(CapacityPolytope::new(vec![vec![1.0, 1.0]]).unwrap()),
    )
    .unwrap();
    let p = spec.polytope().unwrap();
    let samples = exact_sampler(&spec, &p, 777, 100_000).unwrap();
    let xs: Vec<f64> = samples.iter().map(|s| s.queues()[0] as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.queues()[1] as f64).collect();
    let corr = correlation(&xs, &ys);
    pass &= (corr - 3.0 / 7.0).abs() <= 0.02;
    lines.push(format!("single pool corr {corr:.4} (3/7 = {:.4})", 3.0 / 7.0));
    report(7, "independence", pass, lines.join("; "));
}

#[test]
fn criterion_08_log_phi_limit() {
    let p = catalog::example("single-pool").unwrap().polytope().unwrap();
    let lim = phi_log_limit(&QueueVector(vec![2, 1]), &p, &[8, 32, 128, 512]).unwrap();
    let at_512 = lim.values.last().unwrap().1;
    report(
        8,
        "log-normalizer limit",
        (at_512 - 1.9095).abs() <= 2e-2 && lim.decreasing,
        format!("(1/c) ln Φ = {:?}, limit {:.4}, gaps {}", lim.values, lim.target, sci(&lim.gaps)),
    );
}

#[test]
fn criterion_09_rate_function() {
    let mut pass = true;
    let mut lines = Vec::new();

    for name in catalog::example_names() {
        let spec = catalog::example(name).unwrap();
        let p = spec.polytope().unwrap();
        let zero = vec![0.0; spec.num_queues()];
        let profile = PiecewiseLinearProfile::stationary(&zero, &spec).unwrap();
        pass &= ldp_rate(&zero, &profile, &spec, &p).unwrap() == 0.0;
    }
    lines.push("zero at Q = 0 on every example".into());

    // Grid over the composition of the two-route queue q2 of the merge network.
    let spec = catalog::example("merge").unwrap();
    let p = spec.polytope().unwrap();
    let q = [3.0, 5.0];
    let rate_at = |g: f64| {
        let profile = PiecewiseLinearProfile {
            breakpoints: vec![vec![0.0, q[0]], vec![0.0, q[1]]],
            gradients: vec![vec![vec![1.0, 0.0]], vec![vec![g, 1.0 - g]]],
        };
        ldp_rate(&q, &profile, &spec, &p).unwrap()
    };
    let step = 1e-3;
    let (arg, _) = (0..=1000)
        .map(|i| i as f64 * step)
        .map(|g| (g, rate_at(g)))
        .fold((0.0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best });
    let expected = spec.routes()[0].rate / spec.queue_loads()[1];
    pass &= (arg - expected).abs() <= step;
    lines.push(format!("merge q2 minimizer {arg:.3} vs a_r/a_j = {expected:.3}"));

    let spec = catalog::example("mm1").unwrap();
    let p = spec.polytope().unwrap();
    let a = spec.routes()[0].rate;
    let mut worst = 0.0f64;
    for qv in [0.5, 1.0, 7.0, 40.0] {
        let profile = PiecewiseLinearProfile::stationary(&[qv], &spec).unwrap();
        let r = ldp_rate(&[qv], &profile, &spec, &p).unwrap();
        worst = worst.max((r - qv * (1.0 / a).ln()).abs());
    }
    pass &= worst <= 1e-9;
    lines.push(format!("M/M/1 error {worst:.1e}"));
    report(9, "rate function", pass, lines.join("; "));
}

#[test]
fn criterion_10_scheduler_sanity() {
    let mut pass = true;
    let mut lines = Vec::new();

    let spec = catalog::example("one-edge").unwrap().with_max_pool_load(0.9).unwrap();
    let p = spec.polytope().unwrap();
    let schedules = spec.schedules(graph::DEFAULT_SCHEDULE_VERTEX_CAP).unwrap();
    let mut cfg = SimConfig::new(Horizon::Events(100_000), 31);
    cfg.initial = InitialState::Packets(vec![1000, 1000]);
    cfg.checkpoint_interval = Some(1000.0);
    let trace = simulate_ps(&spec, &schedules, &cfg).unwrap();
    let times: Vec<f64> = trace.checkpoints.iter().map(|c| c.time).collect();
    let totals: Vec<f64> =
        trace.checkpoints.iter().map(|c| c.fifo.0.iter().map(|f| f.len()).sum::<usize>() as f64).collect();
    let fit = least_squares(&times, &totals).unwrap();
    let drift = lyapunov_drift(&trace, &spec, &p, None).unwrap();
    pass &= fit.slope <= 2.0 * fit.slope_stderr && drift.slope <= 2.0 * drift.slope_stderr;
    lines.push(format!(
        "PS one-edge@0.9 queue slope {:.3e} ± {:.1e}, rate slope {:.3e} ± {:.1e}",
        fit.slope, fit.slope_stderr, drift.slope, drift.slope_stderr
    ));

    let spec = catalog::example("tandem4").unwrap();
    let schedules = spec.schedules(graph::DEFAULT_SCHEDULE_VERTEX_CAP).unwrap();
    let trace = simulate_bp(&spec, &schedules, &SimConfig::new(Horizon::Events(100_000), 32)).unwrap();
    let means: Vec<f64> = trace.queue_means.iter().map(|e| e.mean).collect();
    pass &= means.windows(2).all(|w| w[1] <= w[0]);
    lines.push(format!("BP tandem4@0.8 queue means {means:.3?}"));
    report(10, "scheduler sanity", pass, lines.join("; "));
}
