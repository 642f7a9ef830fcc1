use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::CapacityPolytope;
use crate::sim::collect_joint;
use crate::state::QueueVector;
use crate::stats::{chi_square_independence, correlation, ChiSquareResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceConfig {
    /// Smallest p-value consistent with independence.
    pub p_threshold: f64,
    /// Largest absolute correlation consistent with independence.
    pub corr_threshold: f64,
    pub min_samples: usize,
}

impl Default for IndependenceConfig {
    fn default() -> Self {
        Self { p_threshold: 0.001, corr_threshold: 0.02, min_samples: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    IndependentConsistent,
    Dependent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub pair: (usize, usize),
    /// Whether some pool contains both queues.
    pub shares_pool: bool,
    pub samples: usize,
    pub correlation: f64,
    pub chi_square: ChiSquareResult,
    pub verdict: Verdict,
}

/// Correlation and chi-square independence test of two queue lengths over
/// independent samples of the queue vector.
pub fn independence_test(
    samples: &[QueueVector],
    pair: (usize, usize),
    polytope: &CapacityPolytope,
    cfg: &IndependenceConfig,
) -> Result<IndependenceReport> {
    if samples.len() < cfg.min_samples {
        return Err(Error::InsufficientSamples { needed: cfg.min_samples, got: samples.len() });
    }
    let n = polytope.num_queues();
    if pair.0 >= n || pair.1 >= n || pair.0 == pair.1 {
        return Err(Error::Config(format!("queue pair {pair:?} is invalid")));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s[pair.0] as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s[pair.1] as f64).collect();
    let corr = correlation(&xs, &ys);
    let (hist, _) = collect_joint(samples, pair)?;
    let chi = chi_square_independence(&hist.weights)?;
    let verdict = if chi.p_value < cfg.p_threshold {
        Verdict::Dependent
    } else if corr.abs() <= cfg.corr_threshold {
        Verdict::IndependentConsistent
    } else {
        Verdict::Inconclusive
    };
    Ok(IndependenceReport {
        pair,
        shares_pool: polytope.shares_pool(pair.0, pair.1),
        samples: samples.len(),
        correlation: corr,
        chi_square: chi,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<QueueVector> =
            (0..20_000).map(|_| QueueVector(vec![rng.random_range(0..4), rng.random_range(0..3)])).collect();
        let rep = independence_test(&samples, (0, 1), &CapacityPolytope::identity(2), &Default::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::IndependentConsistent);
        assert!(!rep.shares_pool);
    }

    #[test]
    fn equal_pair_is_dependent() {
        let samples: Vec<QueueVector> = (0..20_000u32).map(|i| QueueVector(vec![i % 3, i % 3])).collect();
        let rep = independence_test(&samples, (0, 1), &CapacityPolytope::identity(2), &Default::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Dependent);
    }

    #[test]
    fn too_few_samples() {
        let samples = vec![QueueVector(vec![0, 0]); 10];
        assert!(matches!(
            independence_test(&samples, (0, 1), &CapacityPolytope::identity(2), &Default::default()),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
