//! Holding costs, per-replication statistics and the replicated objective.

use rayon::prelude::*;

use crate::dynamics::run_replication;
use crate::model::{ParamError, PolicySpec, SystemParams, SystemState};

/// Per-period cost `r^a` of one needy patient with `r` stages left.
pub fn holding_cost(r: usize, a: f64) -> Result<f64, ParamError> {
    if r < 1 {
        return Err(ParamError::Stage(r));
    }
    Ok(stage_weight(r, a))
}

#[inline]
pub(crate) fn stage_weight(r: usize, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else if a == 1.0 {
        r as f64
    } else {
        (r as f64).powf(a)
    }
}

/// `sum_i sum_r r^a * needy[i][r]`. Content patients cost nothing.
pub fn period_cost(state: &SystemState, a: f64) -> f64 {
    (0..state.nurses())
        .flat_map(|i| state.needy_row(i).iter().enumerate())
        .map(|(k, &n)| stage_weight(k + 1, a) * f64::from(n))
        .sum()
}

/// Neumaier-compensated sum; the result does not depend on chunking.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Statistics of one replication, accumulated over periods after warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    /// Exponent used for `total_cost`.
    pub exponent: f64,
    /// `sum_{t > warmup} sum_i sum_r r^a * X_{r,i,ns}(t)`.
    pub total_cost: f64,
    pub periods_counted: usize,
    /// Needy patient-periods per stage: `needy_occupancy[r - 1]` sums `X_{r,i,ns}(t)` over
    /// nurses and counted periods.
    pub needy_occupancy: Vec<u64>,
    pub admissions: u64,
    pub discharges: u64,
    /// Hash of the `(period, type)` arrival sequence over the whole horizon.
    pub arrival_digest: u64,
}

impl RunStats {
    /// Holding cost of the same sample path under another exponent. Valid
    /// because the counts along the path do not depend on `a` when the
    /// policy does not.
    pub fn cost_at(&self, a: f64) -> f64 {
        compensated_sum(self.needy_occupancy.iter().enumerate().map(|(k, &n)| stage_weight(k + 1, a) * n as f64))
    }

    /// Time-average total needy count.
    pub fn avg_queue_all(&self) -> f64 {
        self.needy_occupancy.iter().sum::<u64>() as f64 / self.periods_counted as f64
    }

    /// Time-average needy count of the two most severe types, `R - 1` and `R`.
    pub fn avg_queue_hi(&self) -> f64 {
        let from = self.needy_occupancy.len().saturating_sub(2);
        self.needy_occupancy[from..].iter().sum::<u64>() as f64 / self.periods_counted as f64
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; 0 when `n < 2`.
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let se = if n < 2 {
            0.0
        } else {
            let ss = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        };
        Self { mean, se, n }
    }

    /// `|mean| > k * se`.
    pub fn is_resolved(&self, k: f64) -> bool {
        self.mean.abs() > k * self.se
    }
}

/// Seed of replication `k`.
pub fn replication_seed(base_seed: u64, k: usize) -> u64 {
    base_seed.wrapping_add(k as u64)
}

/// Runs `n_reps` replications with seeds `base_seed + k` on the rayon pool.
/// The result is ordered by `k` regardless of execution order.
pub fn replicate(params: &SystemParams, policy: PolicySpec, n_reps: usize, base_seed: u64) -> Vec<RunStats> {
    (0..n_reps).into_par_iter().map(|k| run_replication(params, policy, replication_seed(base_seed, k))).collect()
}

/// Replicated estimate of the total holding cost.
pub fn estimate_j(params: &SystemParams, policy: PolicySpec, n_reps: usize, base_seed: u64) -> Estimate {
    let runs = replicate(params, policy, n_reps, base_seed);
    let totals: Vec<f64> = runs.iter().map(|r| r.total_cost).collect();
    Estimate::from_samples(&totals)
}
