//! Replicated policy comparisons: the exponent threshold curve, parameter
//! sweeps for the priority rules and the assignment rules, and the
//! queue-length tradeoff across exponents.
//!
//! Every policy compared within a sweep cell runs on the same replication
//! seeds, so arrival sequences and per-patient clocks are shared (common
//! random numbers) and improvements are estimated from paired differences.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::costing::{replicate, Estimate, RunStats};
use crate::model::{Assignment, ParamError, PolicySpec, Priority, RawParams, SystemParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("at least {0} replications are needed")]
    TooFewReplications(usize),
    #[error("assignment comparisons need at least two nurses, got {0}")]
    SingleNurse(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweptParam {
    A,
    Alpha,
    Beta,
    Gamma,
}

impl SweptParam {
    pub const ALL: [SweptParam; 4] = [SweptParam::A, SweptParam::Alpha, SweptParam::Beta, SweptParam::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Self::A => "a",
            Self::Alpha => "alpha",
            Self::Beta => "beta",
            Self::Gamma => "gamma",
        }
    }

    pub fn apply(self, template: &SystemParams, value: f64) -> Result<SystemParams, ParamError> {
        template.with(|raw: &mut RawParams| match self {
            Self::A => raw.exponent = value,
            Self::Alpha => raw.alpha = value,
            Self::Beta => raw.beta = value,
            Self::Gamma => raw.gamma = value,
        })
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweptParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown sweep parameter `{s}` (expected a, alpha, beta or gamma)"))
    }
}

/// One swept parameter over a grid, everything else fixed by `template`.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweptParam,
    pub grid: Vec<f64>,
    pub template: SystemParams,
    pub n_reps: usize,
    pub base_seed: u64,
}

impl SweepSpec {
    /// Parameters of every grid point, validated up front.
    pub fn cells(&self) -> Result<Vec<SystemParams>, ExperimentError> {
        if self.grid.is_empty() {
            return Err(ExperimentError::EmptyGrid);
        }
        if self.n_reps < 2 {
            return Err(ExperimentError::TooFewReplications(2));
        }
        Ok(self.grid.iter().map(|&v| self.param.apply(&self.template, v)).collect::<Result<_, _>>()?)
    }
}

/// Replication totals of one policy in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub policy: PolicySpec,
    pub estimate: Estimate,
    pub totals: Vec<f64>,
    pub arrival_digests: Vec<u64>,
}

impl PolicyResult {
    fn from_runs(policy: PolicySpec, runs: &[RunStats], cost: impl Fn(&RunStats) -> f64) -> Self {
        let totals: Vec<f64> = runs.iter().map(cost).collect();
        Self {
            policy,
            estimate: Estimate::from_samples(&totals),
            totals,
            arrival_digests: runs.iter().map(|r| r.arrival_digest).collect(),
        }
    }
}

/// Relative cost reduction of `candidate` over `baseline`, `(J_B - J_A) / J_B`, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub candidate: PolicySpec,
    pub baseline: PolicySpec,
    /// `None` when the baseline cost is zero.
    pub pct: Option<f64>,
    /// Standard error of `pct` from the paired per-replication differences.
    pub se_pct: Option<f64>,
    /// Paired difference `J_B - J_A`.
    pub gap: Estimate,
}

impl Improvement {
    pub fn between(candidate: &PolicyResult, baseline: &PolicyResult) -> Self {
        let diffs: Vec<f64> = baseline.totals.iter().zip(&candidate.totals).map(|(b, c)| b - c).collect();
        let gap = Estimate::from_samples(&diffs);
        let base = baseline.estimate.mean;
        let (pct, se_pct) =
            if base > 0.0 { (Some(100.0 * gap.mean / base), Some(100.0 * gap.se / base)) } else { (None, None) };
        Self { candidate: candidate.policy, baseline: baseline.policy, pct, se_pct, gap }
    }

    /// Positive and more than `k` standard errors from zero.
    pub fn significantly_positive(&self, k: f64) -> bool {
        self.gap.mean > 0.0 && self.gap.is_resolved(k)
    }

    pub fn significantly_negative(&self, k: f64) -> bool {
        self.gap.mean < 0.0 && self.gap.is_resolved(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweptParam,
    pub value: f64,
    pub results: Vec<PolicyResult>,
    pub improvements: Vec<Improvement>,
    /// Every compared policy has zero cost (e.g. no arrivals); improvements are undefined.
    pub degenerate: bool,
}

impl SweepRow {
    pub fn result(&self, policy: PolicySpec) -> Option<&PolicyResult> {
        self.results.iter().find(|r| r.policy == policy)
    }

    pub fn improvement_of(&self, candidate: PolicySpec) -> Option<&Improvement> {
        self.improvements.iter().find(|i| i.candidate == candidate)
    }

    /// All policies in the row saw identical arrival sequences.
    pub fn arrivals_shared(&self) -> bool {
        self.results.windows(2).all(|w| w[0].arrival_digests == w[1].arrival_digests)
    }
}

/// Runs every policy on seeds `base_seed + k`, `k < n_reps`.
fn run_policies(params: &SystemParams, policies: &[PolicySpec], n_reps: usize, base_seed: u64) -> Vec<Vec<RunStats>> {
    policies.par_iter().map(|&p| replicate(params, p, n_reps, base_seed)).collect()
}

fn build_row(
    param: SweptParam,
    value: f64,
    policies: &[PolicySpec],
    runs: &[Vec<RunStats>],
    baseline: PolicySpec,
) -> SweepRow {
    let results: Vec<PolicyResult> =
        policies.iter().zip(runs).map(|(&p, r)| PolicyResult::from_runs(p, r, |s| s.total_cost)).collect();
    let base = results.iter().find(|r| r.policy == baseline).expect("baseline is compared");
    let improvements = results.iter().filter(|r| r.policy != baseline).map(|r| Improvement::between(r, base)).collect();
    let degenerate = results.iter().all(|r| r.totals.iter().all(|&t| t == 0.0));
    SweepRow { param, value, results, improvements, degenerate }
}

pub fn priority_policies(assignment: Assignment) -> [PolicySpec; 2] {
    [PolicySpec::new(Priority::ShortestFirst, assignment), PolicySpec::new(Priority::LongestFirst, assignment)]
}

pub fn assignment_policies(priority: Priority) -> [PolicySpec; 3] {
    Assignment::ALL.map(|a| PolicySpec::new(priority, a))
}

/// Shortest-first against longest-first at every grid point; the
/// improvement is measured relative to longest-first.
pub fn priority_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, ExperimentError> {
    let cells = spec.cells()?;
    let policies = priority_policies(Assignment::Random);
    Ok(cells
        .iter()
        .zip(&spec.grid)
        .map(|(params, &value)| {
            let runs = run_policies(params, &policies, spec.n_reps, spec.base_seed);
            build_row(spec.param, value, &policies, &runs, policies[1])
        })
        .collect())
}

/// H1, H2 and random assignment at every grid point, improvements relative
/// to random. The priority rule follows [`Priority::paired_with_exponent`].
pub fn assignment_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, ExperimentError> {
    if spec.template.nurses() < 2 {
        return Err(ExperimentError::SingleNurse(spec.template.nurses()));
    }
    let cells = spec.cells()?;
    Ok(cells
        .iter()
        .zip(&spec.grid)
        .map(|(params, &value)| {
            let policies = assignment_policies(Priority::paired_with_exponent(params.exponent()));
            let runs = run_policies(params, &policies, spec.n_reps, spec.base_seed);
            build_row(spec.param, value, &policies, &runs, policies[2])
        })
        .collect())
}

/// Paired estimate of `J_h2 - J_h1` in an assignment row.
pub fn h1_h2_gap(row: &SweepRow) -> Option<Estimate> {
    let h1 = row.results.iter().find(|r| r.policy.assignment == Assignment::H1)?;
    let h2 = row.results.iter().find(|r| r.policy.assignment == Assignment::H2)?;
    let diffs: Vec<f64> = h2.totals.iter().zip(&h1.totals).map(|(b, a)| b - a).collect();
    Some(Estimate::from_samples(&diffs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub a: f64,
    pub shortest: Estimate,
    pub longest: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub a_hat: f64,
    /// Grid points bracketing the sign change.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub points: Vec<ThresholdPoint>,
    pub crossing: Option<Crossing>,
}

/// Exponent grid `0, step, 2 step, ..., 1`.
pub fn unit_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Estimates `J_shortest(a)` and `J_longest(a)` along `a_grid` and locates
/// where longest-first becomes cheaper by linear interpolation.
///
/// Neither priority rule depends on `a`, so one set of replications per rule
/// is repriced at every grid point: each point reuses the same sample paths.
pub fn priority_threshold(
    template: &SystemParams,
    a_grid: &[f64],
    n_reps: usize,
    base_seed: u64,
) -> Result<ThresholdCurve, ExperimentError> {
    if a_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    if n_reps < 2 {
        return Err(ExperimentError::TooFewReplications(2));
    }
    for &a in a_grid {
        SweptParam::A.apply(template, a)?;
    }
    let [sf, lf] = priority_policies(Assignment::Random);
    let runs = run_policies(template, &[sf, lf], n_reps, base_seed);
    let points: Vec<ThresholdPoint> = a_grid
        .iter()
        .map(|&a| ThresholdPoint {
            a,
            shortest: PolicyResult::from_runs(sf, &runs[0], |s| s.cost_at(a)).estimate,
            longest: PolicyResult::from_runs(lf, &runs[1], |s| s.cost_at(a)).estimate,
        })
        .collect();
    let crossing = locate_crossing(&points);
    Ok(ThresholdCurve { points, crossing })
}

fn locate_crossing(points: &[ThresholdPoint]) -> Option<Crossing> {
    let diff = |p: &ThresholdPoint| p.shortest.mean - p.longest.mean;
    points.windows(2).find_map(|w| {
        let (d0, d1) = (diff(&w[0]), diff(&w[1]));
        if d0 <= 0.0 && d1 > 0.0 && !(d0 == 0.0 && w[0].shortest.mean == 0.0) {
            let a_hat = w[0].a + (w[1].a - w[0].a) * d0 / (d0 - d1);
            Some(Crossing { a_hat, lower: w[0].a, upper: w[1].a })
        } else {
            None
        }
    })
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either sample is constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in rx.iter().zip(&ry) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            out[k] = rank;
        }
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPoint {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// The 75 load settings `alpha in {0.05..0.25}`, `beta in {0.8, 0.9, 1}`,
/// `gamma in {0.1..0.5}`.
pub fn tradeoff_load_points() -> Vec<LoadPoint> {
    let mut out = Vec::with_capacity(75);
    for a in 1..=5 {
        for b in 8..=10 {
            for g in 1..=5 {
                out.push(LoadPoint { alpha: a as f64 * 0.05, beta: b as f64 / 10.0, gamma: g as f64 / 10.0 });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub load: LoadPoint,
    pub a: f64,
    /// Priority rule with the lower mean cost at `a`.
    pub rule: Priority,
    pub cost: Estimate,
    pub avg_queue_all: Estimate,
    pub avg_queue_hi: Estimate,
}

/// For each load and exponent, keeps the cheaper priority rule and reports
/// its average total and severe-type queue lengths.
pub fn tradeoff_curve(
    template: &SystemParams,
    loads: &[LoadPoint],
    a_grid: &[f64],
    n_reps: usize,
    base_seed: u64,
) -> Result<Vec<TradeoffPoint>, ExperimentError> {
    if a_grid.is_empty() || loads.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    if n_reps < 2 {
        return Err(ExperimentError::TooFewReplications(2));
    }
    let cells: Vec<SystemParams> = loads
        .iter()
        .map(|l| {
            template.with(|raw| {
                raw.alpha = l.alpha;
                raw.beta = l.beta;
                raw.gamma = l.gamma;
            })
        })
        .collect::<Result<_, _>>()?;
    for &a in a_grid {
        SweptParam::A.apply(template, a)?;
    }
    let per_load: Vec<Vec<TradeoffPoint>> = cells
        .par_iter()
        .zip(loads)
        .map(|(params, &load)| {
            let policies = priority_policies(Assignment::Random);
            let runs = run_policies(params, &policies, n_reps, base_seed);
            let queue_all: Vec<Estimate> = runs
                .iter()
                .map(|r| Estimate::from_samples(&r.iter().map(RunStats::avg_queue_all).collect::<Vec<_>>()))
                .collect();
            let queue_hi: Vec<Estimate> = runs
                .iter()
                .map(|r| Estimate::from_samples(&r.iter().map(RunStats::avg_queue_hi).collect::<Vec<_>>()))
                .collect();
            a_grid
                .iter()
                .map(|&a| {
                    let costs: Vec<Estimate> = policies
                        .iter()
                        .zip(&runs)
                        .map(|(&p, r)| PolicyResult::from_runs(p, r, |s| s.cost_at(a)).estimate)
                        .collect();
                    let k = if costs[1].mean < costs[0].mean { 1 } else { 0 };
                    TradeoffPoint {
                        load,
                        a,
                        rule: policies[k].priority,
                        cost: costs[k],
                        avg_queue_all: queue_all[k],
                        avg_queue_hi: queue_hi[k],
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_load.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(edit: impl FnOnce(&mut RawParams)) -> SystemParams {
        let mut raw = RawParams { horizon: 2_000, warmup: 400, ..RawParams::default() };
        edit(&mut raw);
        raw.validate().unwrap()
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        // Ties get the average rank: ranks (1.5, 1.5, 3) vs (1, 2, 3).
        let rho = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((rho - 0.8660254037844386).abs() < 1e-12);
    }

    #[test]
    fn unit_grid_hits_both_ends() {
        let g = unit_grid(0.05);
        assert_eq!(g.len(), 21);
        assert_eq!((g[0], g[20]), (0.0, 1.0));
        assert_eq!(unit_grid(0.1).len(), 11);
    }

    #[test]
    fn crossing_interpolates_linearly() {
        let est = |m| Estimate { mean: m, se: 0.0, n: 2 };
        let points = vec![
            ThresholdPoint { a: 0.0, shortest: est(1.0), longest: est(3.0) },
            ThresholdPoint { a: 0.5, shortest: est(2.0), longest: est(3.0) },
            ThresholdPoint { a: 1.0, shortest: est(5.0), longest: est(4.0) },
        ];
        let c = locate_crossing(&points).unwrap();
        assert_eq!((c.lower, c.upper), (0.5, 1.0));
        assert!((c.a_hat - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_arrivals_no_crossing() {
        let p = small(|r| r.alpha = 0.0);
        let curve = priority_threshold(&p, &unit_grid(0.25), 3, 1).unwrap();
        assert!(curve.crossing.is_none());
        assert!(curve.points.iter().all(|pt| pt.shortest.mean == 0.0 && pt.longest.mean == 0.0));
    }

    #[test]
    fn zero_alpha_rows_are_flagged() {
        let spec = SweepSpec {
            param: SweptParam::Alpha,
            grid: vec![0.0, 0.2],
            template: small(|_| {}),
            n_reps: 3,
            base_seed: 5,
        };
        let rows = priority_sweep(&spec).unwrap();
        assert!(rows[0].degenerate);
        assert!(rows[0].improvements[0].pct.is_none());
        assert!(!rows[1].degenerate);
        assert!(rows[1].improvements[0].pct.is_some());

        let two = SweepSpec { template: small(|r| r.nurses = 2), ..spec };
        let rows = assignment_sweep(&two).unwrap();
        assert!(rows[0].degenerate);
        assert_eq!(rows[0].improvements.len(), 2);
    }

    #[test]
    fn sweeps_validate_their_inputs() {
        let spec =
            SweepSpec { param: SweptParam::Beta, grid: vec![], template: small(|_| {}), n_reps: 3, base_seed: 0 };
        assert_eq!(priority_sweep(&spec).unwrap_err(), ExperimentError::EmptyGrid);
        let spec = SweepSpec { grid: vec![1.5], ..spec };
        assert!(matches!(priority_sweep(&spec), Err(ExperimentError::Param(_))));
        let spec = SweepSpec { grid: vec![0.5], n_reps: 1, ..spec };
        assert_eq!(priority_sweep(&spec).unwrap_err(), ExperimentError::TooFewReplications(2));
        let spec = SweepSpec { n_reps: 3, ..spec };
        assert_eq!(assignment_sweep(&spec).unwrap_err(), ExperimentError::SingleNurse(1));
    }

    #[test]
    fn compared_policies_share_arrivals() {
        let spec = SweepSpec {
            param: SweptParam::A,
            grid: vec![0.0, 1.0],
            template: small(|r| {
                r.nurses = 2;
                r.alpha = 0.4;
            }),
            n_reps: 4,
            base_seed: 21,
        };
        for row in assignment_sweep(&spec).unwrap() {
            assert!(row.arrivals_shared());
        }
        for row in priority_sweep(&spec).unwrap() {
            assert!(row.arrivals_shared());
        }
    }

    #[test]
    fn assignment_priority_follows_exponent() {
        let spec = SweepSpec {
            param: SweptParam::A,
            grid: vec![0.0, 1.0],
            template: small(|r| r.nurses = 2),
            n_reps: 2,
            base_seed: 1,
        };
        let rows = assignment_sweep(&spec).unwrap();
        assert!(rows[0].results.iter().all(|r| r.policy.priority == Priority::ShortestFirst));
        assert!(rows[1].results.iter().all(|r| r.policy.priority == Priority::LongestFirst));
    }

    #[test]
    fn seventy_five_loads() {
        let loads = tradeoff_load_points();
        assert_eq!(loads.len(), 75);
        assert!(loads.iter().all(|l| l.alpha > 0.0 && l.alpha < 0.26 && l.beta >= 0.8 && l.gamma <= 0.5));
    }

    #[test]
    fn tradeoff_without_arrivals_is_empty() {
        let p = small(|_| {});
        let load = LoadPoint { alpha: 0.0, beta: 0.8, gamma: 0.1 };
        let pts = tradeoff_curve(&p, &[load], &unit_grid(0.5), 2, 3).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|pt| pt.avg_queue_all.mean == 0.0 && pt.avg_queue_hi.mean == 0.0));
    }
}
