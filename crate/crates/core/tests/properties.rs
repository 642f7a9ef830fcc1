use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use switchnet_core::graph::{cliques_to_polytope, enumerate_schedules, is_perfect};
use switchnet_core::storeforward::{queue_length_probability, sf_allocation};
use switchnet_core::*;

/// Pool matrices with every queue in at least one pool.
fn polytope_strategy() -> impl Strategy<Value = CapacityPolytope> {
    (1usize..=4, 1usize..=3)
        .prop_flat_map(|(n, m)| {
            let entry = prop_oneof![Just(0.0), Just(1.0), 0.1f64..2.0];
            prop::collection::vec(prop::collection::vec(entry, n), m)
        })
        .prop_map(|mut rows| {
            let n = rows[0].len();
            for j in 0..n {
                if rows.iter().all(|r| r[j] == 0.0) {
                    let m = rows.len();
                    rows[j % m][j] = 1.0;
                }
            }
            CapacityPolytope::new(rows).expect("every queue is covered")
        })
}

fn queue_vector(n: usize, max_total: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..=max_total, n).prop_filter("bounded total", move |q| q.iter().sum::<u32>() <= max_total)
}

fn polytope_and_queue() -> impl Strategy<Value = (CapacityPolytope, Vec<u32>)> {
    polytope_strategy().prop_flat_map(|p| {
        let n = p.num_queues();
        (Just(p), queue_vector(n, 9))
    })
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_matches_enumeration((p, q) in polytope_and_queue()) {
        let mut cache = PhiCache::new(&p);
        let oracle = phi_bruteforce(&QueueVector(q.clone()), &p, 24).unwrap();
        let fast = cache.phi(&q);
        prop_assert!(relative(fast, oracle) <= 1e-10, "{fast} vs {oracle}");
    }

    #[test]
    fn neighbours_match_direct_evaluation((p, q) in polytope_and_queue()) {
        let mut shared = PhiCache::new(&p);
        let (total, minus) = shared.log_phi_with_neighbours(&q);
        let mut direct = PhiCache::new(&p);
        prop_assert!((total - direct.log_phi(&q)).abs() <= 1e-12);
        for j in 0..q.len() {
            let d = direct.log_phi_minus(&q, j);
            if d.is_finite() {
                prop_assert!((minus[j] - d).abs() <= 1e-12, "queue {j}: {} vs {d}", minus[j]);
            } else {
                prop_assert_eq!(minus[j], f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn allocation_is_feasible((p, q) in polytope_and_queue()) {
        let mut cache = PhiCache::new(&p);
        let sigma = sf_allocation(&q, &mut cache);
        for (j, &s) in sigma.0.iter().enumerate() {
            prop_assert!(s >= 0.0);
            if q[j] == 0 {
                prop_assert_eq!(s, 0.0);
            }
        }
        prop_assert!(p.contains_point(&sigma.0, 1e-9), "{:?} uses {:?}", sigma.0, p.usage(&sigma.0));
    }

    #[test]
    fn schedules_are_downward_closed(p in polytope_strategy()) {
        let schedules = p.lattice_schedules(8).unwrap();
        for s in &schedules {
            prop_assert!(p.contains_point(&s.iter().map(|&x| x as f64).collect::<Vec<_>>(), 1e-9));
            for j in 0..s.len() {
                if s[j] > 0 {
                    let mut t = s.clone();
                    t[j] -= 1;
                    prop_assert!(schedules.binary_search(&t).is_ok(), "{t:?} missing below {s:?}");
                }
            }
        }
    }

    #[test]
    fn loads_are_linear_in_rates(scale in 0.1f64..3.0) {
        for name in catalog::example_names() {
            let spec = catalog::example(name).unwrap();
            let p = spec.polytope().unwrap();
            let base = compute_loads(&spec, &p).unwrap();
            let scaled = compute_loads(&spec.scaled(scale).unwrap(), &p).unwrap();
            for (a, b) in base.pool_loads.iter().zip(&scaled.pool_loads) {
                prop_assert!((a * scale - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pf_is_scale_invariant_and_satisfies_kkt((p, q) in polytope_and_queue(), c in 2u32..6) {
        prop_assume!(q.iter().any(|&x| x > 0));
        let base = pf_solve(&QueueVector(q.clone()), &p).unwrap();
        let scaled = pf_solve(&QueueVector(q.iter().map(|&x| x * c).collect()), &p).unwrap();
        prop_assert!(base.kkt_residual <= 1e-6, "{base:?}");
        prop_assert!(p.contains_point(&base.allocation, 1e-8));
        for (a, b) in base.allocation.iter().zip(&scaled.allocation) {
            prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", base.allocation, scaled.allocation);
        }
        prop_assert!((scaled.objective - c as f64 * base.objective).abs() <= 1e-6 * c as f64 * base.objective.abs().max(1.0));
    }
}

#[test]
fn queue_law_sums_to_one_under_truncation() {
    for name in ["mm1", "single-pool", "merge", "triangle", "four-cycle"] {
        let spec = catalog::example(name).unwrap();
        let p = spec.polytope().unwrap();
        let mut cache = PhiCache::new(&p);
        let n = spec.num_queues();
        let max_total = if n <= 2 { 60 } else { 30 };
        let mut mass = 0.0;
        let mut q = vec![0u32; n];
        loop {
            if q.iter().sum::<u32>() <= max_total {
                mass += queue_length_probability(&q, &spec, &p, &mut cache).unwrap();
            }
            let mut i = 0;
            while i < n {
                q[i] += 1;
                if q[i] <= max_total {
                    break;
                }
                q[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
        assert!((mass - 1.0).abs() < 1e-4, "{name}: mass {mass}");
    }
}

/// Vertices of `{s >= 0, A s <= 1}` by intersecting every choice of `n`
/// tight constraints.
fn polytope_vertices(p: &CapacityPolytope) -> Vec<Vec<f64>> {
    let n = p.num_queues();
    let mut rows: Vec<(Vec<f64>, f64)> = p.rows().iter().map(|r| (r.clone(), 1.0)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        rows.push((e, 0.0));
    }
    let mut out = Vec::new();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[pick[i]].1);
        if let Some(x) = a.clone().lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            let tight_rank_ok = a.rank(1e-9) == n;
            if tight_rank_ok && p.contains_point(&x, 1e-9) {
                out.push(x);
            }
        }
        // Next combination of n out of rows.len().
        let m = rows.len();
        let mut i = n;
        while i > 0 && pick[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        pick[i - 1] += 1;
        for k in i..n {
            pick[k] = pick[k - 1] + 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn perfect_clique_polytopes_have_integral_vertices(
        n in 2usize..=8,
        edges in prop::collection::vec((0usize..8, 0usize..8), 0..16),
    ) {
        let edges: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|&(a, b)| a < n && b < n && a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let g = InterferenceGraph::new(n, &edges).unwrap();
        prop_assume!(is_perfect(&g, 16).unwrap());
        let p = cliques_to_polytope(&g).unwrap();
        let schedules = enumerate_schedules(&g, 16).unwrap();
        for v in polytope_vertices(&p) {
            let rounded: Vec<u32> = v.iter().map(|x| x.round() as u32).collect();
            prop_assert!(v.iter().all(|x| (x - x.round()).abs() < 1e-9), "fractional vertex {v:?}");
            prop_assert!(g.is_independent(&rounded));
            prop_assert!(schedules.contains(&rounded));
        }
    }
}

#[test]
fn odd_cycle_clique_polytope_has_fractional_vertex() {
    let spec = catalog::example("odd-cycle-5").unwrap();
    let vertices = polytope_vertices(&spec.polytope().unwrap());
    assert!(vertices.iter().any(|v| v.iter().all(|&x| (x - 0.5).abs() < 1e-9)));
}

/// Correlation of adjacent single-pool queues at loads (0.3, 0.3) by direct
/// summation of the stationary queue-length law.
#[test]
fn single_pool_correlation_is_three_sevenths() {
    let spec = NetworkSpec::new(
        vec!["q1".into(), "q2".into()],
        vec![Route::new("r1", vec![0], 0.3), Route::new("r2", vec![1], 0.3)],
        Capacity::Matrix(CapacityPolytope::new(vec![vec![1.0, 1.0]]).unwrap()),
    )
    .unwrap();
    let p = spec.polytope().unwrap();
    let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
    let (mut s, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for x in 0..=80u32 {
        for y in 0..=(80 - x) {
            // (1 - a) (x + y)! / (x! y!) 0.3^(x + y), written without Φ.
            let w = 0.4 * fact(x + y) / (fact(x) * fact(y)) * 0.3f64.powi((x + y) as i32);
            let (xf, yf) = (x as f64, y as f64);
            s += w;
            sx += w * xf;
            sy += w * yf;
            sxx += w * xf * xf;
            syy += w * yf * yf;
            sxy += w * xf * yf;
        }
    }
    assert!((s - 1.0).abs() < 1e-12);
    let corr = (sxy - sx * sy) / ((sxx - sx * sx) * (syy - sy * sy)).sqrt();
    assert!((corr - 3.0 / 7.0).abs() < 1e-10, "{corr}");

    let mut cache = PhiCache::new(&p);
    for (x, y) in [(0, 0), (3, 2), (7, 11)] {
        let law = queue_length_probability(&[x, y], &spec, &p, &mut cache).unwrap();
        let direct = 0.4 * fact(x + y) / (fact(x) * fact(y)) * 0.3f64.powi((x + y) as i32);
        assert!(relative(law, direct) < 1e-12);
    }
}
