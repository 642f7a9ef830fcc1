//! Small statistical helpers: batch means, correlation, chi-square tests and
//! least-squares slopes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// A point estimate with its standard error and the number of observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { mean: 0.0, stderr: 0.0, n: 0 };

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Standard error of the mean of batch values.
pub fn batch_stderr(batches: &[f64]) -> f64 {
    let b = batches.len();
    if b < 2 {
        return 0.0;
    }
    let mean = batches.iter().sum::<f64>() / b as f64;
    let var = batches.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Pearson correlation; zero when either variance vanishes.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = mean(&xs[..n]);
    let my = mean(&ys[..n]);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn upper_tail(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
}

/// Groups of consecutive indices whose totals reach `threshold`; a group
/// short of it is merged into its smaller neighbour.
fn pool_bins(totals: &[f64], threshold: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<(Vec<usize>, f64)> =
        totals.iter().enumerate().filter(|(_, &t)| t > 0.0).map(|(i, &t)| (vec![i], t)).collect();
    while groups.len() > 1 {
        let Some(k) =
            (0..groups.len()).filter(|&k| groups[k].1 < threshold).min_by(|&a, &b| groups[a].1.total_cmp(&groups[b].1))
        else {
            break;
        };
        let other = if k == 0 {
            1
        } else if k + 1 == groups.len() || groups[k - 1].1 <= groups[k + 1].1 {
            k - 1
        } else {
            k + 1
        };
        let (lo, hi) = (k.min(other), k.max(other));
        let (idx, t) = groups.remove(hi);
        groups[lo].0.extend(idx);
        groups[lo].1 += t;
    }
    groups.into_iter().map(|g| g.0).collect()
}

/// Pearson test of independence on a contingency table of counts. Rows and
/// columns are pooled until every expected cell count is at least 5.
pub fn chi_square_independence(table: &[Vec<f64>]) -> Result<ChiSquareResult> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let n: f64 = table.iter().flatten().sum();
    if rows == 0 || cols == 0 || n <= 0.0 {
        return Err(Error::NoData("contingency table is empty"));
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..cols).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let threshold = (5.0 * n).sqrt();
    let rg = pool_bins(&row_tot, threshold);
    let cg = pool_bins(&col_tot, threshold);
    let pooled: Vec<Vec<f64>> = rg
        .iter()
        .map(|ri| cg.iter().map(|ci| ri.iter().map(|&r| ci.iter().map(|&c| table[r][c]).sum::<f64>()).sum()).collect())
        .collect();
    let pr: Vec<f64> = pooled.iter().map(|r| r.iter().sum()).collect();
    let pc: Vec<f64> = (0..cg.len()).map(|c| pooled.iter().map(|r| r[c]).sum()).collect();
    let mut statistic = 0.0;
    for (a, row) in pooled.iter().enumerate() {
        for (b, &obs) in row.iter().enumerate() {
            let expected = pr[a] * pc[b] / n;
            statistic += (obs - expected).powi(2) / expected;
        }
    }
    let dof = (rg.len() - 1) * (cg.len() - 1);
    Ok(ChiSquareResult { statistic, dof, p_value: upper_tail(statistic, dof) })
}

/// Pearson goodness-of-fit test of observed counts against probabilities.
/// Categories with expected count below 5 are pooled together.
pub fn chi_square_goodness_of_fit(observed: &[f64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() {
        return Err(Error::DimensionMismatch { what: "category count", expected: probs.len(), actual: observed.len() });
    }
    let n: f64 = observed.iter().sum();
    if n <= 0.0 {
        return Err(Error::NoData("no observations"));
    }
    let total_p: f64 = probs.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut small_obs, mut small_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = n * p / total_p;
        if e < 5.0 {
            small_obs += o;
            small_exp += e;
        } else {
            cells.push((o, e));
        }
    }
    if small_exp > 0.0 || small_obs > 0.0 {
        if small_exp >= 5.0 || cells.is_empty() {
            cells.push((small_obs, small_exp));
        } else {
            let last = cells.last_mut().expect("nonempty");
            last.0 += small_obs;
            last.1 += small_exp;
        }
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = cells.len().saturating_sub(1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: if statistic.is_finite() { upper_tail(statistic, dof) } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::DimensionMismatch { what: "regression sample count", expected: xs.len(), actual: ys.len() });
    }
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::NoData("regression abscissae are constant"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_stderr = (rss / (n - 2) as f64 / sxx).sqrt();
    Ok(LinearFit { slope, intercept, slope_stderr })
}
