//! Priority disciplines and nurse-assignment rules.
//!
//! All rules read the state as it stands before the arriving patient is
//! placed; none of them looks at the arrival's type.

use crate::costing::holding_cost;
use crate::model::{Assignment, Priority, SystemState};
use crate::rng::RandomStreams;

/// Scores within this relative distance are treated as tied.
const TIE_RTOL: f64 = 1e-12;

/// Stage to serve next from a row of waiting counts (`row[r - 1]` holds
/// stage `r`), or `None` when nobody waits.
pub fn select_service(row: &[u32], priority: Priority) -> Option<usize> {
    let occupied = |k: &usize| row[*k] > 0;
    let k = match priority {
        Priority::ShortestFirst => (0..row.len()).find(occupied),
        Priority::LongestFirst => (0..row.len()).rev().find(occupied),
    };
    k.map(|k| k + 1)
}

/// H1 score: `sum_r r^a * needy[i][r]`.
pub fn score_h1(state: &SystemState, nurse: usize, a: f64) -> f64 {
    state.needy_row(nurse).iter().enumerate().map(|(k, &n)| holding_cost_unchecked(k + 1, a) * f64::from(n)).sum()
}

/// H2 score: `sum_r (needy[i][r] + content[i][r]) * sum_{r' <= r} r'^a`.
/// Content has no `r = R` slot.
pub fn score_h2(state: &SystemState, nurse: usize, a: f64) -> f64 {
    let needy = state.needy_row(nurse);
    let content = state.content_row(nurse);
    let mut cumulative = 0.0;
    let mut score = 0.0;
    for (k, &n) in needy.iter().enumerate() {
        cumulative += holding_cost_unchecked(k + 1, a);
        let c = content.get(k).copied().unwrap_or(0);
        score += f64::from(n + c) * cumulative;
    }
    score
}

fn holding_cost_unchecked(r: usize, a: f64) -> f64 {
    holding_cost(r, a).expect("stage index is at least 1")
}

/// Per-nurse scores for an index rule, `None` for the random baseline.
pub fn assignment_scores(state: &SystemState, rule: Assignment, a: f64) -> Option<Vec<f64>> {
    let score = match rule {
        Assignment::H1 => score_h1,
        Assignment::H2 => score_h2,
        Assignment::Random => return None,
    };
    Some((0..state.nurses()).map(|i| score(state, i, a)).collect())
}

/// Indices attaining the minimum score, up to [`TIE_RTOL`].
pub fn argmin_set(scores: &[f64]) -> Vec<usize> {
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_RTOL * best.abs().max(1.0);
    scores.iter().enumerate().filter(|(_, &s)| s - best <= tol).map(|(i, _)| i).collect()
}

/// Nurse that receives the arriving patient. H1/H2 take the argmin of
/// their score with ties broken uniformly; random picks any nurse uniformly.
pub fn assign(state: &SystemState, rule: Assignment, a: f64, rng: &mut RandomStreams) -> usize {
    match assignment_scores(state, rule, a) {
        None => rng.pick(state.nurses()),
        Some(scores) => {
            let best = argmin_set(&scores);
            best[rng.pick(best.len())]
        }
    }
}
