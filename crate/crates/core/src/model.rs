//! Model parameters, policy selectors and the mutable system state.
//!
//! Stage indices are 1-based in every public accessor (`r = 1` means one
//! remaining nurse visit). Storage is 0-based: `needy_row(i)[0]` holds the
//! count for `r = 1`. Nurse indices are 0-based throughout.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Arrival-type weights used by the default experiments (`R = 5`).
///
/// The printed vector sums to 0.808; [`ThetaMode::Normalize`] rescales it.
pub const DEFAULT_THETA: [f64; 5] = [0.0, 0.3380, 0.2238, 0.1481, 0.0981];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("{name} must lie in (0, 1], got {value}")]
    Rate { name: &'static str, value: f64 },
    #[error("theta must not be empty")]
    EmptyTheta,
    #[error("theta[{index}] must be finite and nonnegative, got {value}")]
    NegativeTheta { index: usize, value: f64 },
    #[error("theta has no positive entry")]
    ZeroTheta,
    #[error("theta sums to {sum}, which exceeds 1 (as-is mode cannot thin a surplus)")]
    ThetaExceedsOne { sum: f64 },
    #[error("theta has {len} entries but R = {stages}")]
    ThetaLength { len: usize, stages: usize },
    #[error("R must be at least 1")]
    NoStages,
    #[error("I must be at least 1")]
    NoNurses,
    #[error("horizon T must be at least 1")]
    EmptyHorizon,
    #[error("warmup ({warmup}) must be smaller than the horizon ({horizon})")]
    Warmup { warmup: usize, horizon: usize },
    #[error("cost exponent must be finite and nonnegative, got {0}")]
    Exponent(f64),
    #[error("holding cost is defined for r >= 1, got r = {0}")]
    Stage(usize),
}

/// How a raw arrival-type vector becomes a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaMode {
    /// Divide by the sum so the weights form a probability vector.
    #[default]
    Normalize,
    /// Use the weights unchanged. Any missing mass `1 - sum` thins the
    /// arrival stream: a draw that lands there produces no patient.
    AsIs,
}

impl FromStr for ThetaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalize" => Ok(Self::Normalize),
            "as-is" | "as_is" => Ok(Self::AsIs),
            other => Err(format!("unknown theta mode `{other}` (expected normalize or as-is)")),
        }
    }
}

impl fmt::Display for ThetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Normalize => "normalize",
            Self::AsIs => "as-is",
        })
    }
}

/// Unvalidated model constants. [`RawParams::default`] gives the baseline
/// single-nurse experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RawParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: Vec<f64>,
    pub theta_mode: ThetaMode,
    pub stages: usize,
    pub nurses: usize,
    pub horizon: usize,
    pub warmup: usize,
    pub exponent: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.8,
            gamma: 0.1,
            theta: DEFAULT_THETA.to_vec(),
            theta_mode: ThetaMode::Normalize,
            stages: DEFAULT_THETA.len(),
            nurses: 1,
            horizon: 10_000,
            warmup: 2_000,
            exponent: 0.0,
        }
    }
}

impl RawParams {
    pub fn validate(self) -> Result<SystemParams, ParamError> {
        validate_params(self)
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ParamError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ParamError::Probability { name, value })
    }
}

fn check_rate(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(ParamError::Rate { name, value })
    }
}

/// Validates raw constants, resolves the arrival-type distribution and
/// computes the load ratio. An unstable load is flagged, not rejected.
pub fn validate_params(raw: RawParams) -> Result<SystemParams, ParamError> {
    check_probability("alpha", raw.alpha)?;
    check_rate("beta", raw.beta)?;
    check_rate("gamma", raw.gamma)?;
    if raw.stages < 1 {
        return Err(ParamError::NoStages);
    }
    if raw.nurses < 1 {
        return Err(ParamError::NoNurses);
    }
    if raw.horizon < 1 {
        return Err(ParamError::EmptyHorizon);
    }
    if raw.warmup >= raw.horizon {
        return Err(ParamError::Warmup { warmup: raw.warmup, horizon: raw.horizon });
    }
    if !raw.exponent.is_finite() || raw.exponent < 0.0 {
        return Err(ParamError::Exponent(raw.exponent));
    }
    if raw.theta.is_empty() {
        return Err(ParamError::EmptyTheta);
    }
    if raw.theta.len() != raw.stages {
        return Err(ParamError::ThetaLength { len: raw.theta.len(), stages: raw.stages });
    }
    if let Some((index, &value)) = raw.theta.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(ParamError::NegativeTheta { index, value });
    }
    let theta_sum: f64 = raw.theta.iter().sum();
    if theta_sum <= 0.0 {
        return Err(ParamError::ZeroTheta);
    }
    let theta = match raw.theta_mode {
        ThetaMode::Normalize => raw.theta.iter().map(|w| w / theta_sum).collect(),
        ThetaMode::AsIs => {
            if theta_sum > 1.0 + 1e-12 {
                return Err(ParamError::ThetaExceedsOne { sum: theta_sum });
            }
            raw.theta.clone()
        }
    };

    let mut params = SystemParams {
        alpha: raw.alpha,
        beta: raw.beta,
        gamma: raw.gamma,
        theta,
        theta_raw_sum: theta_sum,
        theta_mode: raw.theta_mode,
        nurses: raw.nurses,
        horizon: raw.horizon,
        warmup: raw.warmup,
        exponent: raw.exponent,
        stability_ratio: 0.0,
    };
    params.stability_ratio = stability_ratio(&params);
    Ok(params)
}

/// `alpha * sum_r r * theta_r / (beta * I)`; the system is stable iff this is below 1.
pub fn stability_ratio(p: &SystemParams) -> f64 {
    p.alpha * p.mean_visits() / (p.beta * p.nurses as f64)
}

/// Validated, immutable model constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
    theta: Vec<f64>,
    theta_raw_sum: f64,
    theta_mode: ThetaMode,
    nurses: usize,
    horizon: usize,
    warmup: usize,
    exponent: f64,
    stability_ratio: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        RawParams::default().validate().expect("default parameters are valid")
    }
}

impl SystemParams {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Resolved arrival-type distribution; `theta()[r - 1]` is the weight of type `r`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    /// Sum of the raw weights before normalization.
    pub fn theta_raw_sum(&self) -> f64 {
        self.theta_raw_sum
    }
    pub fn theta_mode(&self) -> ThetaMode {
        self.theta_mode
    }
    /// Maximum number of service stages `R`.
    pub fn stages(&self) -> usize {
        self.theta.len()
    }
    pub fn nurses(&self) -> usize {
        self.nurses
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn warmup(&self) -> usize {
        self.warmup
    }
    pub fn exponent(&self) -> f64 {
        self.exponent
    }
    pub fn stability_ratio(&self) -> f64 {
        self.stability_ratio
    }
    pub fn is_unstable(&self) -> bool {
        self.stability_ratio >= 1.0
    }
    /// Expected nurse visits per arriving patient, `sum_r r * theta_r`.
    pub fn mean_visits(&self) -> f64 {
        self.theta.iter().enumerate().map(|(k, w)| (k + 1) as f64 * w).sum()
    }

    pub fn to_raw(&self) -> RawParams {
        let theta = match self.theta_mode {
            ThetaMode::Normalize => self.theta.clone(),
            ThetaMode::AsIs => self.theta.clone(),
        };
        RawParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            theta,
            theta_mode: self.theta_mode,
            stages: self.theta.len(),
            nurses: self.nurses,
            horizon: self.horizon,
            warmup: self.warmup,
            exponent: self.exponent,
        }
    }

    /// Rebuilds the parameters after applying `edit` to a raw copy.
    pub fn with(&self, edit: impl FnOnce(&mut RawParams)) -> Result<Self, ParamError> {
        let mut raw = self.to_raw();
        edit(&mut raw);
        let mut rebuilt = raw.validate()?;
        if rebuilt.theta_mode == self.theta_mode && rebuilt.theta == self.theta {
            rebuilt.theta_raw_sum = self.theta_raw_sum;
        }
        Ok(rebuilt)
    }
}

/// Priority discipline used by every nurse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Priority {
    /// Serve the waiting patient with the fewest remaining stages.
    ShortestFirst,
    /// Serve the waiting patient with the most remaining stages.
    LongestFirst,
}

impl Priority {
    pub const ALL: [Priority; 2] = [Priority::ShortestFirst, Priority::LongestFirst];

    pub fn name(self) -> &'static str {
        match self {
            Self::ShortestFirst => "shortest_first",
            Self::LongestFirst => "longest_first",
        }
    }

    /// Discipline paired with a holding-cost exponent in the assignment
    /// experiments: shortest-first for `a <= 0.5`, longest-first above.
    pub fn paired_with_exponent(a: f64) -> Self {
        if a <= 0.5 {
            Self::ShortestFirst
        } else {
            Self::LongestFirst
        }
    }
}

/// Rule for placing an arriving patient with a nurse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assignment {
    /// Lowest instantaneous weighted needy cost.
    H1,
    /// Lowest aggregate remaining needy cost over needy and content patients.
    H2,
    /// Uniform over all nurses.
    Random,
}

impl Assignment {
    pub const ALL: [Assignment; 3] = [Assignment::H1, Assignment::H2, Assignment::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::H1 => "h1",
            Self::H2 => "h2",
            Self::Random => "random",
        }
    }
}

macro_rules! name_parsing {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.replace('-', "_");
                Self::ALL
                    .into_iter()
                    .find(|v| v.name() == wanted)
                    .ok_or_else(|| format!("unknown {} `{s}`", stringify!($ty).to_lowercase()))
            }
        }
    };
}

name_parsing!(Priority);
name_parsing!(Assignment);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicySpec {
    pub priority: Priority,
    pub assignment: Assignment,
}

impl PolicySpec {
    pub fn new(priority: Priority, assignment: Assignment) -> Self {
        Self { priority, assignment }
    }

    /// Single-nurse policy; the assignment rule is irrelevant when `I = 1`.
    pub fn single(priority: Priority) -> Self {
        Self { priority, assignment: Assignment::Random }
    }

    pub fn label(&self) -> String {
        format!("{}+{}", self.priority, self.assignment)
    }
}

/// Sequential patient identifier, assigned in admission order.
pub type PatientId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InService {
    pub patient: PatientId,
    /// Remaining stages of the patient, including the one being served.
    pub stages_left: usize,
}

/// Per-nurse needy/content counts plus the patient each nurse is serving.
///
/// A patient in service stays counted in `needy`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    /// Index of the next period to execute, starting at 1.
    pub t: usize,
    stages: usize,
    needy: Vec<Vec<u32>>,
    content: Vec<Vec<u32>>,
    in_service: Vec<Option<InService>>,
    admitted: u64,
    discharged: u64,
}

impl SystemState {
    pub fn empty(nurses: usize, stages: usize) -> Self {
        Self {
            t: 1,
            stages,
            needy: vec![vec![0; stages]; nurses],
            content: vec![vec![0; stages.saturating_sub(1)]; nurses],
            in_service: vec![None; nurses],
            admitted: 0,
            discharged: 0,
        }
    }

    pub fn nurses(&self) -> usize {
        self.needy.len()
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Needy counts at nurse `i`; element `r - 1` holds stage `r`.
    pub fn needy_row(&self, nurse: usize) -> &[u32] {
        &self.needy[nurse]
    }

    /// Content counts at nurse `i`; element `r - 1` holds stage `r` for `r < R`.
    pub fn content_row(&self, nurse: usize) -> &[u32] {
        &self.content[nurse]
    }

    pub fn needy(&self, nurse: usize, r: usize) -> u32 {
        self.needy[nurse][r - 1]
    }

    /// Content count for stage `r`; always 0 for `r = R`.
    pub fn content(&self, nurse: usize, r: usize) -> u32 {
        self.content[nurse].get(r - 1).copied().unwrap_or(0)
    }

    pub fn in_service(&self, nurse: usize) -> Option<InService> {
        self.in_service[nurse]
    }

    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    pub fn discharged(&self) -> u64 {
        self.discharged
    }

    pub fn total_needy(&self) -> u64 {
        self.needy.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    pub fn total_content(&self) -> u64 {
        self.content.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    pub fn in_system(&self) -> u64 {
        self.total_needy() + self.total_content()
    }

    /// Admissions equal discharges plus the current population.
    pub fn is_conserved(&self) -> bool {
        self.admitted == self.discharged + self.in_system()
    }

    /// Adds a patient to the needy state at `nurse`. `admission` marks a
    /// new arrival rather than a return from content.
    pub fn set_needy(&mut self, nurse: usize, r: usize, admission: bool) {
        self.needy[nurse][r - 1] += 1;
        if admission {
            self.admitted += 1;
        }
    }

    pub(crate) fn remove_needy(&mut self, nurse: usize, r: usize) {
        let slot = &mut self.needy[nurse][r - 1];
        assert!(*slot > 0, "needy count at nurse {nurse}, r = {r} would go negative");
        *slot -= 1;
    }

    /// Adds a content patient with `r < R` stages left at `nurse`.
    pub fn set_content(&mut self, nurse: usize, r: usize) {
        self.content[nurse][r - 1] += 1;
    }

    pub(crate) fn remove_content(&mut self, nurse: usize, r: usize) {
        let slot = &mut self.content[nurse][r - 1];
        assert!(*slot > 0, "content count at nurse {nurse}, r = {r} would go negative");
        *slot -= 1;
    }

    pub(crate) fn start_service(&mut self, nurse: usize, service: InService) {
        debug_assert!(self.in_service[nurse].is_none());
        debug_assert!(self.needy(nurse, service.stages_left) >= 1);
        self.in_service[nurse] = Some(service);
    }

    pub(crate) fn finish_service(&mut self, nurse: usize) -> InService {
        self.in_service[nurse].take().expect("nurse has a patient in service")
    }

    pub(crate) fn record_discharge(&mut self) {
        self.discharged += 1;
    }
}
