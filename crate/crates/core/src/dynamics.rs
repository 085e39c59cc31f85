//! One-period transition of the care system and full replications.
//!
//! Within period `t`:
//! 1. at most one arrival, with probability `alpha`, of type drawn from `theta`;
//! 2. the arrival is placed with a nurse and joins that nurse's needy queue;
//! 3. the holding-cost snapshot `X(t)` is taken, then every idle nurse with a
//!    nonempty queue starts serving per its priority discipline (service is
//!    non-preemptive, so a busy nurse keeps serving);
//! 4. at the end of the period service completions resolve first: the patient
//!    is discharged when `r = 1`, otherwise becomes content with `r - 1`
//!    stages. Then each patient already content before this period turns
//!    needy with probability `gamma`, eligible for service from `t + 1`.
//!
//! Completion and return events are realised from per-`(patient, visit)`
//! geometric clocks (see [`crate::rng`]), which has the same law as flipping
//! the per-period coins.

use std::collections::VecDeque;
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::costing::{stage_weight, RunStats};
use crate::model::{InService, PatientId, PolicySpec, SystemParams, SystemState, ThetaMode};
use crate::policies::{assign, select_service};
use crate::rng::RandomStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub nurse: usize,
    /// Stages left when the service started.
    pub stage: usize,
    pub discharged: bool,
}

/// Everything that happened in one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTrace {
    pub t: usize,
    /// Type `Z_t` of the arrival, if any.
    pub arrival: Option<usize>,
    /// Nurse `A_t` receiving the arrival (0-based).
    pub assignment: Option<usize>,
    /// Stage `Y_{t,i}` served by each nurse; `None` for an idle nurse.
    pub service_choice: Vec<Option<usize>>,
    /// Patient served by each nurse this period.
    pub serving: Vec<Option<PatientId>>,
    pub completions: Vec<Completion>,
    /// `(nurse, stage)` content-to-needy transitions at period end.
    pub returns: Vec<(usize, usize)>,
    /// Needy counts per stage summed over nurses at the post-arrival snapshot.
    pub needy_by_stage: Vec<u32>,
}

impl PeriodTrace {
    /// Holding cost of the post-arrival snapshot.
    pub fn snapshot_cost(&self, a: f64) -> f64 {
        self.needy_by_stage.iter().enumerate().map(|(k, &n)| stage_weight(k + 1, a) * f64::from(n)).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct ServiceClock {
    elapsed: u32,
    duration: u32,
}

#[derive(Debug, Clone, Copy)]
struct ContentPatient {
    patient: PatientId,
    nurse: usize,
    stages_left: usize,
    elapsed: u32,
    duration: u32,
}

/// A single replication's mutable world: state, queues and random streams.
#[derive(Debug, Clone)]
pub struct Simulator<'p> {
    params: &'p SystemParams,
    policy: PolicySpec,
    streams: RandomStreams,
    state: SystemState,
    /// Waiting (not in service) patients, FIFO per `[nurse][r - 1]`.
    queues: Vec<Vec<VecDeque<PatientId>>>,
    clocks: Vec<Option<ServiceClock>>,
    content: Vec<ContentPatient>,
    /// Total stages of every admitted patient, indexed by id.
    patient_types: Vec<usize>,
    digest: DefaultHasher,
}

impl<'p> Simulator<'p> {
    pub fn new(params: &'p SystemParams, policy: PolicySpec, seed: u64) -> Self {
        let nurses = params.nurses();
        let stages = params.stages();
        Self {
            params,
            policy,
            streams: RandomStreams::new(seed, stages),
            state: SystemState::empty(nurses, stages),
            queues: vec![vec![VecDeque::new(); stages]; nurses],
            clocks: vec![None; nurses],
            content: Vec::new(),
            patient_types: Vec::new(),
            digest: DefaultHasher::new(),
        }
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    /// Places a new needy patient of `stages` visits at `nurse`, outside the
    /// arrival process. Used to set up initial conditions.
    pub fn admit(&mut self, nurse: usize, stages: usize) -> PatientId {
        assert!((1..=self.params.stages()).contains(&stages), "type {stages} out of range");
        let id = PatientId::try_from(self.patient_types.len()).expect("patient id overflow");
        self.patient_types.push(stages);
        self.state.set_needy(nurse, stages, true);
        self.queues[nurse][stages - 1].push_back(id);
        id
    }

    fn arrival_type(&self, u: f64) -> Option<usize> {
        let theta = self.params.theta();
        let mut cumulative = 0.0;
        for (k, w) in theta.iter().enumerate() {
            cumulative += w;
            if u < cumulative {
                return Some(k + 1);
            }
        }
        match self.params.theta_mode() {
            ThetaMode::AsIs => None,
            // Rounding left `u` just above the last cumulative weight.
            ThetaMode::Normalize => theta.iter().rposition(|&w| w > 0.0).map(|k| k + 1),
        }
    }

    fn visit_of(&self, patient: PatientId, stages_left: usize) -> usize {
        self.patient_types[patient as usize] - stages_left + 1
    }

    /// Executes one period and returns its trace.
    pub fn step(&mut self) -> PeriodTrace {
        let t = self.state.t;
        let nurses = self.state.nurses();
        let stages = self.state.stages();

        // (1) arrival: both uniforms are consumed every period.
        let u_arrival = self.streams.arrival_uniform();
        let u_type = self.streams.type_uniform();
        let arrival = if u_arrival < self.params.alpha() { self.arrival_type(u_type) } else { None };

        // (2) assignment on the pre-arrival state.
        let assignment = arrival.map(|z| {
            (t, z).hash(&mut self.digest);
            let nurse = assign(&self.state, self.policy.assignment, self.params.exponent(), &mut self.streams);
            self.admit(nurse, z);
            nurse
        });

        let needy_by_stage: Vec<u32> =
            (0..stages).map(|k| (0..nurses).map(|i| self.state.needy_row(i)[k]).sum()).collect();

        // (3) idle nurses select; busy nurses continue.
        let mut service_choice = vec![None; nurses];
        let mut serving = vec![None; nurses];
        for i in 0..nurses {
            if self.state.in_service(i).is_none() {
                let waiting: Vec<u32> = self.queues[i].iter().map(|q| q.len() as u32).collect();
                if let Some(r) = select_service(&waiting, self.policy.priority) {
                    let patient = self.queues[i][r - 1].pop_front().expect("selected stage is occupied");
                    let visit = self.visit_of(patient, r);
                    let duration = self.streams.service_periods(patient, visit, self.params.beta());
                    self.state.start_service(i, InService { patient, stages_left: r });
                    self.clocks[i] = Some(ServiceClock { elapsed: 0, duration });
                }
            }
            if let Some(s) = self.state.in_service(i) {
                service_choice[i] = Some(s.stages_left);
                serving[i] = Some(s.patient);
            }
        }

        // (4a) completions.
        let mut completions = Vec::new();
        let mut entering_content = Vec::new();
        for i in 0..nurses {
            let Some(clock) = self.clocks[i].as_mut() else { continue };
            clock.elapsed += 1;
            if clock.elapsed < clock.duration {
                continue;
            }
            self.clocks[i] = None;
            let done = self.state.finish_service(i);
            let r = done.stages_left;
            self.state.remove_needy(i, r);
            let discharged = r == 1;
            if discharged {
                self.state.record_discharge();
            } else {
                let visit = self.visit_of(done.patient, r);
                let duration = self.streams.content_periods(done.patient, visit, self.params.gamma());
                self.state.set_content(i, r - 1);
                entering_content.push(ContentPatient {
                    patient: done.patient,
                    nurse: i,
                    stages_left: r - 1,
                    elapsed: 0,
                    duration,
                });
            }
            completions.push(Completion { nurse: i, stage: r, discharged });
        }

        // (4b) returns from content, only for patients content before this period.
        let mut returns = Vec::new();
        let state = &mut self.state;
        let queues = &mut self.queues;
        self.content.retain_mut(|c| {
            c.elapsed += 1;
            if c.elapsed < c.duration {
                return true;
            }
            state.remove_content(c.nurse, c.stages_left);
            state.set_needy(c.nurse, c.stages_left, false);
            queues[c.nurse][c.stages_left - 1].push_back(c.patient);
            returns.push((c.nurse, c.stages_left));
            false
        });
        self.content.extend(entering_content);

        debug_assert!(self.state.is_conserved(), "conservation violated in period {t}");
        self.state.t += 1;

        PeriodTrace { t, arrival, assignment, service_choice, serving, completions, returns, needy_by_stage }
    }

    pub fn arrival_digest(&self) -> u64 {
        self.digest.finish()
    }
}

/// Runs periods `1..=T` from an empty system and accumulates statistics
/// for `t > warmup`.
pub fn run_replication(params: &SystemParams, policy: PolicySpec, seed: u64) -> RunStats {
    run_replication_with(params, policy, seed, |_, _| {})
}

/// As [`run_replication`], calling `observe` after every period.
pub fn run_replication_with(
    params: &SystemParams,
    policy: PolicySpec,
    seed: u64,
    mut observe: impl FnMut(&PeriodTrace, &SystemState),
) -> RunStats {
    let a = params.exponent();
    let mut sim = Simulator::new(params, policy, seed);
    let mut occupancy = vec![0u64; params.stages()];
    let mut total_cost = 0.0;
    for _ in 0..params.horizon() {
        let trace = sim.step();
        if trace.t > params.warmup() {
            total_cost += trace.snapshot_cost(a);
            for (acc, &n) in occupancy.iter_mut().zip(&trace.needy_by_stage) {
                *acc += u64::from(n);
            }
        }
        observe(&trace, sim.state());
    }
    RunStats {
        exponent: a,
        total_cost,
        periods_counted: params.horizon() - params.warmup(),
        needy_occupancy: occupancy,
        admissions: sim.state().admitted(),
        discharges: sim.state().discharged(),
        arrival_digest: sim.arrival_digest(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, Priority, RawParams};

    fn params(edit: impl FnOnce(&mut RawParams)) -> SystemParams {
        let mut raw = RawParams { horizon: 50, warmup: 0, ..RawParams::default() };
        edit(&mut raw);
        raw.validate().unwrap()
    }

    const SF: PolicySpec = PolicySpec { priority: Priority::ShortestFirst, assignment: Assignment::Random };

    #[test]
    fn empty_system_without_arrivals_idles() {
        let p = params(|r| r.alpha = 0.0);
        let mut sim = Simulator::new(&p, SF, 1);
        let trace = sim.step();
        assert_eq!(trace.arrival, None);
        assert_eq!(trace.assignment, None);
        assert_eq!(trace.service_choice, vec![None]);
        assert!(trace.completions.is_empty() && trace.returns.is_empty());
        let mut expected = SystemState::empty(1, 5);
        expected.t = 2;
        assert_eq!(sim.state(), &expected);
    }

    #[test]
    fn certain_service_discharges_a_one_stage_patient() {
        let p = params(|r| {
            r.alpha = 0.0;
            r.beta = 1.0;
        });
        let mut sim = Simulator::new(&p, SF, 1);
        sim.admit(0, 1);
        let trace = sim.step();
        assert_eq!(trace.service_choice, vec![Some(1)]);
        assert_eq!(trace.completions, vec![Completion { nurse: 0, stage: 1, discharged: true }]);
        assert_eq!(sim.state().total_needy(), 0);
        assert_eq!(sim.state().discharged(), 1);
    }

    #[test]
    fn two_stage_lifecycle_with_certain_transitions() {
        // Served in t, content through t + 1, served again in t + 2.
        let p = params(|r| {
            r.alpha = 0.0;
            r.beta = 1.0;
            r.gamma = 1.0;
        });
        let mut sim = Simulator::new(&p, SF, 1);
        sim.admit(0, 2);

        let first = sim.step();
        assert_eq!(first.completions, vec![Completion { nurse: 0, stage: 2, discharged: false }]);
        assert!(first.returns.is_empty());
        assert_eq!((sim.state().needy(0, 2), sim.state().content(0, 1)), (0, 1));

        let second = sim.step();
        assert_eq!(second.service_choice, vec![None]);
        assert_eq!(second.returns, vec![(0, 1)]);
        assert_eq!((sim.state().needy(0, 1), sim.state().content(0, 1)), (1, 0));

        let third = sim.step();
        assert_eq!(third.service_choice, vec![Some(1)]);
        assert_eq!(third.completions, vec![Completion { nurse: 0, stage: 1, discharged: true }]);
        assert_eq!(sim.state().in_system(), 0);
        assert_eq!(sim.state().t, 4);
    }

    #[test]
    fn arrival_is_served_in_its_own_period() {
        let p = params(|r| {
            r.alpha = 1.0;
            r.beta = 1.0;
            r.theta = vec![1.0];
            r.stages = 1;
        });
        let mut sim = Simulator::new(&p, SF, 3);
        let trace = sim.step();
        assert_eq!(trace.arrival, Some(1));
        assert_eq!(trace.assignment, Some(0));
        assert_eq!(trace.needy_by_stage, vec![1]);
        assert_eq!(trace.completions.len(), 1);
        assert_eq!(sim.state().in_system(), 0);
    }

    #[test]
    fn deterministic_single_stage_chain() {
        let p = params(|r| {
            r.alpha = 1.0;
            r.beta = 1.0;
            r.gamma = 1.0;
            r.theta = vec![1.0];
            r.stages = 1;
            r.horizon = 300;
            r.warmup = 100;
            r.exponent = 0.0;
        });
        let stats = run_replication(&p, SF, 9);
        assert_eq!(stats.total_cost, 200.0);
        assert_eq!(stats.avg_queue_all(), 1.0);
        assert_eq!(stats.discharges, 300);
    }

    #[test]
    fn zero_counted_cost_without_arrivals() {
        let p = params(|r| {
            r.alpha = 0.0;
            r.horizon = 11;
            r.warmup = 10;
        });
        let stats = run_replication(&p, SF, 1);
        assert_eq!(stats.total_cost, 0.0);
        assert_eq!(stats.periods_counted, 1);
    }

    #[test]
    fn replications_are_reproducible() {
        let p = params(|r| {
            r.horizon = 3000;
            r.nurses = 2;
            r.alpha = 0.4;
        });
        let policy = PolicySpec::new(Priority::LongestFirst, Assignment::H2);
        assert_eq!(run_replication(&p, policy, 17), run_replication(&p, policy, 17));
        assert_ne!(run_replication(&p, policy, 17), run_replication(&p, policy, 18));
    }

    #[test]
    fn as_is_theta_thins_arrivals() {
        let p = params(|r| {
            r.alpha = 1.0;
            r.theta_mode = ThetaMode::AsIs;
            r.horizon = 20_000;
            r.beta = 1.0;
        });
        let stats = run_replication(&p, SF, 2);
        let rate = stats.admissions as f64 / 20_000.0;
        assert!((rate - 0.808).abs() < 0.01, "{rate}");
    }
}
