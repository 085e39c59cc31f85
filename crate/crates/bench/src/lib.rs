//! Shared fixtures for the criterion benches.

use carequeue_core::{ClearingInstance, RawParams, SystemParams};

/// Baseline single-nurse parameters with the given horizon.
pub fn baseline(horizon: usize) -> SystemParams {
    RawParams { horizon, warmup: horizon / 5, ..RawParams::default() }
        .validate()
        .expect("baseline parameters are valid")
}

/// Two-nurse loaded system used for the assignment rules.
pub fn two_nurse(horizon: usize) -> SystemParams {
    RawParams { horizon, warmup: horizon / 5, nurses: 2, alpha: 0.4, ..RawParams::default() }
        .validate()
        .expect("two-nurse parameters are valid")
}

pub fn clearing_instances(max_j: usize) -> Vec<ClearingInstance> {
    ClearingInstance::enumerate(max_j, &[1, 2])
}
