//! Exact evaluator for the deterministic two-patient clearing system.
//!
//! Patient 1 needs `i` nurse visits, patient 2 needs `j >= i`. Both start
//! needy at the beginning of period 1 and nobody else arrives. System `s1`
//! always gives patient 1 priority (shortest-first), `s2` always gives
//! patient 2 priority (longest-first); service is non-preemptive.
//!
//! Visit `l` needs `needy_durations[l - 1]` periods of service and is followed
//! (unless it is the patient's last) by `content_durations[l - 1]` periods in
//! the content state. Both patients and both systems read the same tables, so
//! durations are shared at equal visit index.
//!
//! Times are period indices: a departure at `t` means "at the end of period
//! `t`", and a patient leaving content at `t` is needy from period `t + 1`.

use rayon::prelude::*;
use thiserror::Error;

use crate::costing::{compensated_sum, stage_weight};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClearingError {
    #[error("patient types must satisfy 1 <= i <= j, got i = {i}, j = {j}")]
    Types { i: usize, j: usize },
    #[error("expected {expected} {kind} durations, got {got}")]
    DurationCount { kind: &'static str, expected: usize, got: usize },
    #[error("durations must be at least one period")]
    ZeroDuration,
    #[error("bisection tolerance must be positive, got {0}")]
    Tolerance(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClearingInstance {
    i: usize,
    j: usize,
    needy_durations: Vec<u32>,
    content_durations: Vec<u32>,
}

impl ClearingInstance {
    /// `needy_durations` has one entry per visit of patient 2 (`j`), and
    /// `content_durations` one per content spell (`j - 1`).
    pub fn new(
        i: usize,
        j: usize,
        needy_durations: Vec<u32>,
        content_durations: Vec<u32>,
    ) -> Result<Self, ClearingError> {
        if i < 1 || j < i {
            return Err(ClearingError::Types { i, j });
        }
        if needy_durations.len() != j {
            return Err(ClearingError::DurationCount { kind: "needy", expected: j, got: needy_durations.len() });
        }
        if content_durations.len() != j - 1 {
            return Err(ClearingError::DurationCount {
                kind: "content",
                expected: j - 1,
                got: content_durations.len(),
            });
        }
        if needy_durations.iter().chain(&content_durations).any(|&d| d == 0) {
            return Err(ClearingError::ZeroDuration);
        }
        Ok(Self { i, j, needy_durations, content_durations })
    }

    /// Every needy and content spell lasts one period.
    pub fn unit(i: usize, j: usize) -> Result<Self, ClearingError> {
        Self::new(i, j, vec![1; j], vec![1; j.saturating_sub(1)])
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn needy_durations(&self) -> &[u32] {
        &self.needy_durations
    }

    pub fn content_durations(&self) -> &[u32] {
        &self.content_durations
    }

    fn visits(&self, patient: Patient) -> usize {
        match patient {
            Patient::First => self.i,
            Patient::Second => self.j,
        }
    }

    /// All instances with `1 <= i <= j <= max_j` whose durations are drawn
    /// from `values`, in lexicographic order of `(j, i, profile)`.
    pub fn enumerate(max_j: usize, values: &[u32]) -> Vec<ClearingInstance> {
        let mut out = Vec::new();
        for j in 1..=max_j {
            let slots = 2 * j - 1;
            let profiles = values.len().pow(slots as u32);
            for i in 1..=j {
                for code in 0..profiles {
                    let mut rest = code;
                    let mut draw = || {
                        let v = values[rest % values.len()];
                        rest /= values.len();
                        v
                    };
                    let needy: Vec<u32> = (0..j).map(|_| draw()).collect();
                    let content: Vec<u32> = (0..j - 1).map(|_| draw()).collect();
                    out.push(ClearingInstance { i, j, needy_durations: needy, content_durations: content });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Patient {
    /// Type `i`.
    First,
    /// Type `j`.
    Second,
}

impl Patient {
    fn index(self) -> usize {
        match self {
            Self::First => 0,
            Self::Second => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClearingSystem {
    /// `s1`: patient 1 first.
    ShortestFirst,
    /// `s2`: patient 2 first.
    LongestFirst,
}

impl ClearingSystem {
    fn favoured(self) -> Patient {
        match self {
            Self::ShortestFirst => Patient::First,
            Self::LongestFirst => Patient::Second,
        }
    }

    fn index(self) -> usize {
        match self {
            Self::ShortestFirst => 0,
            Self::LongestFirst => 1,
        }
    }
}

/// Timeline of one patient in one system; vectors are indexed by `l - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatientPath {
    /// Period in which visit `l` became needy.
    pub needy_entry: Vec<u64>,
    /// Period in which service for visit `l` started.
    pub service_start: Vec<u64>,
    /// `D_ns,l`: end of the period in which visit `l`'s service finished.
    pub needy_departure: Vec<u64>,
    /// `D_cs,l`: end of the content spell after visit `l` (none after the last).
    pub content_departure: Vec<u64>,
    /// `W_ns,l`: periods spent needy before service started.
    pub waiting: Vec<u64>,
}

impl PatientPath {
    pub fn discharge(&self) -> u64 {
        *self.needy_departure.last().expect("every patient has a visit")
    }

    pub fn time_in_service(&self) -> u64 {
        self.needy_departure.iter().zip(&self.service_start).map(|(d, s)| d - s + 1).sum()
    }
}

/// One system's trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemRun {
    pub patients: [PatientPath; 2],
    /// Needy patient-periods by remaining stages; element `r - 1` holds `r`.
    pub needy_occupancy: Vec<u64>,
    /// Needy patients present in each period, as `(period, [stages left])`.
    pub periods: Vec<Vec<usize>>,
}

impl SystemRun {
    /// Holding cost accumulated period by period.
    pub fn cost(&self, a: f64) -> f64 {
        compensated_sum(self.needy_occupancy.iter().enumerate().map(|(k, &n)| stage_weight(k + 1, a) * n as f64))
    }
}

/// Both systems' trajectories for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClearingResult {
    pub instance: ClearingInstance,
    pub systems: [SystemRun; 2],
}

impl ClearingResult {
    pub fn path(&self, system: ClearingSystem, patient: Patient) -> &PatientPath {
        &self.systems[system.index()].patients[patient.index()]
    }

    /// `D_{m,p,ns,l}` with 1-based `l`.
    pub fn needy_departure(&self, system: ClearingSystem, patient: Patient, l: usize) -> u64 {
        self.path(system, patient).needy_departure[l - 1]
    }

    /// `D_{m,p,cs,l}` with 1-based `l`.
    pub fn content_departure(&self, system: ClearingSystem, patient: Patient, l: usize) -> u64 {
        self.path(system, patient).content_departure[l - 1]
    }

    /// `W_{m,p,ns,l}` with 1-based `l`.
    pub fn waiting(&self, system: ClearingSystem, patient: Patient, l: usize) -> u64 {
        self.path(system, patient).waiting[l - 1]
    }

    /// `(c1(a), c2(a))` from per-period needy occupancy.
    pub fn costs(&self, a: f64) -> (f64, f64) {
        (self.systems[0].cost(a), self.systems[1].cost(a))
    }

    /// Waiting-time form `sum_{p,l} (stages left at visit l)^a * W_{m,p,ns,l}`.
    pub fn waiting_cost(&self, system: ClearingSystem, a: f64) -> f64 {
        let inst = &self.instance;
        compensated_sum([Patient::First, Patient::Second].into_iter().flat_map(|p| {
            let visits = inst.visits(p);
            self.path(system, p).waiting.iter().enumerate().map(move |(k, &w)| stage_weight(visits - k, a) * w as f64)
        }))
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Needy { visit: usize },
    InService { visit: usize, left: u32 },
    Content { visit: usize, left: u32 },
    Done,
}

fn run_system(inst: &ClearingInstance, system: ClearingSystem) -> SystemRun {
    let order = match system.favoured() {
        Patient::First => [0, 1],
        Patient::Second => [1, 0],
    };
    let visits = [inst.i, inst.j];
    let mut phases = [Phase::Needy { visit: 1 }, Phase::Needy { visit: 1 }];
    let mut paths: [PatientPath; 2] = Default::default();
    for path in &mut paths {
        path.needy_entry.push(1);
    }
    let mut occupancy = vec![0u64; inst.j];
    let mut periods = Vec::new();

    let mut t: u64 = 0;
    while phases.iter().any(|p| !matches!(p, Phase::Done)) {
        t += 1;
        let busy = phases.iter().any(|p| matches!(p, Phase::InService { .. }));
        if !busy {
            if let Some(&p) = order.iter().find(|&&p| matches!(phases[p], Phase::Needy { .. })) {
                let Phase::Needy { visit } = phases[p] else { unreachable!() };
                let path = &mut paths[p];
                path.service_start.push(t);
                path.waiting.push(t - path.needy_entry[visit - 1]);
                phases[p] = Phase::InService { visit, left: inst.needy_durations[visit - 1] };
            }
        }

        let mut present = Vec::new();
        for p in 0..2 {
            if let Phase::Needy { visit } | Phase::InService { visit, .. } = phases[p] {
                let stages_left = visits[p] - visit + 1;
                occupancy[stages_left - 1] += 1;
                present.push(stages_left);
            }
        }
        periods.push(present);

        for p in 0..2 {
            phases[p] = match phases[p] {
                Phase::Content { visit, left: 1 } => {
                    paths[p].content_departure.push(t);
                    paths[p].needy_entry.push(t + 1);
                    Phase::Needy { visit: visit + 1 }
                }
                Phase::Content { visit, left } => Phase::Content { visit, left: left - 1 },
                Phase::InService { visit, left: 1 } => {
                    paths[p].needy_departure.push(t);
                    if visit == visits[p] {
                        Phase::Done
                    } else {
                        Phase::Content { visit, left: inst.content_durations[visit - 1] }
                    }
                }
                Phase::InService { visit, left } => Phase::InService { visit, left: left - 1 },
                other => other,
            };
        }
    }

    SystemRun { patients: paths, needy_occupancy: occupancy, periods }
}

/// Simulates both systems until both patients are discharged.
pub fn simulate_clearing(inst: &ClearingInstance) -> ClearingResult {
    ClearingResult {
        instance: inst.clone(),
        systems: [run_system(inst, ClearingSystem::ShortestFirst), run_system(inst, ClearingSystem::LongestFirst)],
    }
}

/// Outcome of the departure-order checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepartureOrder {
    /// `D_{1,1,ns,i} <= D_{2,1,ns,i} <= D_{1,2,ns,j}`.
    pub first_chain: bool,
    /// `D_{1,1,ns,i} <= D_{2,2,ns,j} <= D_{1,2,ns,j}`.
    pub second_chain: bool,
    /// In `s1`, `D_{1,1,ns,l} <= D_{1,2,ns,l}` for every `l <= i`.
    pub s1_needy_order: bool,
    /// In `s1`, `D_{1,1,cs,l} <= D_{1,2,cs,l}` for every `l < i`.
    pub s1_content_order: bool,
}

impl DepartureOrder {
    pub fn holds(&self) -> bool {
        self.first_chain && self.second_chain && self.s1_needy_order && self.s1_content_order
    }
}

pub fn check_departure_order(result: &ClearingResult) -> DepartureOrder {
    use ClearingSystem::{LongestFirst as S2, ShortestFirst as S1};
    use Patient::{First as P1, Second as P2};
    let (i, j) = (result.instance.i, result.instance.j);
    let d = |m, p, l| result.needy_departure(m, p, l);
    let first_discharge = d(S1, P1, i);
    let last_discharge = d(S1, P2, j);
    DepartureOrder {
        first_chain: first_discharge <= d(S2, P1, i) && d(S2, P1, i) <= last_discharge,
        second_chain: first_discharge <= d(S2, P2, j) && d(S2, P2, j) <= last_discharge,
        s1_needy_order: (1..=i).all(|l| d(S1, P1, l) <= d(S1, P2, l)),
        s1_content_order: (1..i).all(|l| result.content_departure(S1, P1, l) <= result.content_departure(S1, P2, l)),
    }
}

/// Costs of both systems at one exponent, with the waiting-time cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingCosts {
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    /// `c2 - c1` from the waiting-time form; the service-time terms of the
    /// two systems cancel because durations are shared.
    pub waiting_form_diff: f64,
}

impl ClearingCosts {
    pub fn diff(&self) -> f64 {
        self.c2 - self.c1
    }

    /// Relative disagreement between the per-period and waiting-time forms.
    pub fn form_gap(&self) -> f64 {
        (self.diff() - self.waiting_form_diff).abs() / self.c1.abs().max(self.c2.abs()).max(1.0)
    }
}

pub fn clearing_costs_of(result: &ClearingResult, a: f64) -> ClearingCosts {
    let (c1, c2) = result.costs(a);
    let waiting_form_diff =
        result.waiting_cost(ClearingSystem::LongestFirst, a) - result.waiting_cost(ClearingSystem::ShortestFirst, a);
    ClearingCosts { a, c1, c2, waiting_form_diff }
}

pub fn clearing_costs(inst: &ClearingInstance, a: f64) -> ClearingCosts {
    clearing_costs_of(&simulate_clearing(inst), a)
}

/// Exponent in `[0, 1]` where `c2(a) - c1(a)` changes sign, by bisection.
///
/// Returns 0 when `i = j` or when `s2` is already no worse at `a = 0`, and 1
/// when `s1` is still no worse at `a = 1`.
pub fn clearing_threshold(inst: &ClearingInstance, tolerance: f64) -> Result<f64, ClearingError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(ClearingError::Tolerance(tolerance.to_string()));
    }
    if inst.i == inst.j {
        return Ok(0.0);
    }
    let result = simulate_clearing(inst);
    Ok(threshold_of(&result, tolerance))
}

pub fn threshold_of(result: &ClearingResult, tolerance: f64) -> f64 {
    let diff = |a: f64| {
        let (c1, c2) = result.costs(a);
        c2 - c1
    };
    if result.instance.i == result.instance.j || diff(0.0) <= 0.0 {
        return 0.0;
    }
    if diff(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if diff(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exponents at which the two cost forms are compared.
pub const FORM_CHECK_EXPONENTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Per-instance verdicts of the exhaustive sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCheck {
    pub instance: ClearingInstance,
    pub departure_order: DepartureOrder,
    /// `c2(0) - c1(0)`.
    pub diff_at_zero: f64,
    /// `c2(1) - c1(1)`.
    pub diff_at_one: f64,
    /// `sum_{l = i+1}^{j} W_{2,2,ns,l}`.
    pub late_waiting: u64,
    /// Largest relative gap between the two cost forms over [`FORM_CHECK_EXPONENTS`].
    pub max_form_gap: f64,
    pub threshold: f64,
}

pub fn check_instance(inst: &ClearingInstance, tolerance: f64) -> InstanceCheck {
    let result = simulate_clearing(inst);
    let (i, j) = (inst.i, inst.j);
    let late_waiting = (i + 1..=j).map(|l| result.waiting(ClearingSystem::LongestFirst, Patient::Second, l)).sum();
    let max_form_gap =
        FORM_CHECK_EXPONENTS.iter().map(|&a| clearing_costs_of(&result, a).form_gap()).fold(0.0, f64::max);
    InstanceCheck {
        instance: inst.clone(),
        departure_order: check_departure_order(&result),
        diff_at_zero: clearing_costs_of(&result, 0.0).diff(),
        diff_at_one: clearing_costs_of(&result, 1.0).diff(),
        late_waiting,
        max_form_gap,
        threshold: threshold_of(&result, tolerance),
    }
}

/// Checks every instance in parallel; output order follows the input.
pub fn sweep_instances(instances: &[ClearingInstance], tolerance: f64) -> Vec<InstanceCheck> {
    instances.par_iter().map(|inst| check_instance(inst, tolerance)).collect()
}
