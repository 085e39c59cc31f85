//! Discrete-time simulation of a reentrant multi-stage nursing queue.
//!
//! Patients arrive needing `r` nurse visits, wait in their nurse's queue,
//! get served non-preemptively, then rest as content patients before
//! needing the next visit. Waiting needy patients accrue a holding cost of
//! `r^a` per period. The crate provides the period dynamics, priority and
//! assignment policies, replicated cost estimation, experiment drivers,
//! CSV output, and an exact two-patient clearing system.

pub mod clearing;
pub mod costing;
pub mod dynamics;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod report;
pub mod rng;

pub use clearing::{
    check_departure_order, check_instance, clearing_costs, clearing_threshold, simulate_clearing, sweep_instances,
    ClearingError, ClearingInstance, ClearingResult, ClearingSystem, Patient,
};
pub use costing::{estimate_j, holding_cost, period_cost, replicate, Estimate, RunStats};
pub use dynamics::{run_replication, run_replication_with, PeriodTrace, Simulator};
pub use experiments::{
    assignment_sweep, priority_sweep, priority_threshold, spearman, tradeoff_curve, tradeoff_load_points,
    ExperimentError, SweepRow, SweepSpec, SweptParam, ThresholdCurve, TradeoffPoint,
};
pub use model::{
    Assignment, ParamError, PolicySpec, Priority, RawParams, SystemParams, SystemState, ThetaMode, DEFAULT_THETA,
};
pub use report::{ReportError, Schema};
pub use rng::RandomStreams;
