//! Seeded random substreams with common-random-number keying.
//!
//! Every substream is a ChaCha8 stream under the same master seed. Arrival
//! occurrence and arrival type consume exactly one uniform per period, so
//! any two policies see the same arrival sequence. Service and content
//! durations are keyed by `(patient, visit)` through the ChaCha word
//! position, so a patient's clock is replayed identically whatever order
//! the policy happens to serve patients in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::model::PatientId;

const ARRIVAL_STREAM: u64 = 1;
const TYPE_STREAM: u64 = 2;
const SERVICE_STREAM: u64 = 3;
const CONTENT_STREAM: u64 = 4;
const TIE_BREAK_STREAM: u64 = 5;

/// Words reserved per `(patient, visit)` key.
const WORDS_PER_KEY: u128 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Arrival,
    ArrivalType,
    Service,
    Content,
    TieBreak,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of periods until a per-period coin with success probability `p`
/// first lands, counting the successful period (so the minimum is 1).
fn periods_until<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u32 {
    if p >= 1.0 {
        return 1;
    }
    let failures = Geometric::new(p).expect("rate validated in (0, 1]").sample(rng);
    u32::try_from(failures.saturating_add(1)).unwrap_or(u32::MAX)
}

#[derive(Debug, Clone)]
pub struct RandomStreams {
    master_seed: u64,
    stages: usize,
    arrival: ChaCha8Rng,
    arrival_type: ChaCha8Rng,
    service: ChaCha8Rng,
    content: ChaCha8Rng,
    tie_break: ChaCha8Rng,
}

impl RandomStreams {
    /// `stages` is `R`; it fixes the `(patient, visit)` key layout.
    pub fn new(master_seed: u64, stages: usize) -> Self {
        Self {
            master_seed,
            stages: stages.max(1),
            arrival: substream(master_seed, ARRIVAL_STREAM),
            arrival_type: substream(master_seed, TYPE_STREAM),
            service: substream(master_seed, SERVICE_STREAM),
            content: substream(master_seed, CONTENT_STREAM),
            tie_break: substream(master_seed, TIE_BREAK_STREAM),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The per-period arrival uniform. An arrival occurs iff it is below
    /// `alpha`, which couples runs that differ only in `alpha`.
    pub fn arrival_uniform(&mut self) -> f64 {
        self.arrival.random()
    }

    /// The per-period arrival-type uniform, drawn every period whether or not
    /// a patient arrives.
    pub fn type_uniform(&mut self) -> f64 {
        self.arrival_type.random()
    }

    /// Uniform index in `0..n` from the tie-break stream.
    pub fn pick(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        if n == 1 {
            0
        } else {
            self.tie_break.random_range(0..n)
        }
    }

    fn seek(&mut self, which: Substream, patient: PatientId, visit: usize) -> &mut ChaCha8Rng {
        debug_assert!(visit >= 1 && visit <= self.stages);
        let key = u128::from(patient) * self.stages as u128 + (visit - 1) as u128;
        let rng = match which {
            Substream::Service => &mut self.service,
            Substream::Content => &mut self.content,
            _ => unreachable!("only duration streams are keyed"),
        };
        rng.set_word_pos(key * WORDS_PER_KEY);
        rng
    }

    /// Periods the `visit`-th nurse service of `patient` lasts when it
    /// completes with probability `beta` at the end of each period.
    pub fn service_periods(&mut self, patient: PatientId, visit: usize, beta: f64) -> u32 {
        periods_until(beta, self.seek(Substream::Service, patient, visit))
    }

    /// Periods `patient` stays content after its `visit`-th service when it
    /// turns needy with probability `gamma` at the end of each period.
    pub fn content_periods(&mut self, patient: PatientId, visit: usize, gamma: f64) -> u32 {
        periods_until(gamma, self.seek(Substream::Content, patient, visit))
    }

    /// Raw access to a sequential substream, for reproducibility checks.
    pub fn next_u64(&mut self, which: Substream) -> u64 {
        match which {
            Substream::Arrival => self.arrival.random(),
            Substream::ArrivalType => self.arrival_type.random(),
            Substream::Service => self.service.random(),
            Substream::Content => self.content.random(),
            Substream::TieBreak => self.tie_break.random(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Substream; 5] =
        [Substream::Arrival, Substream::ArrivalType, Substream::Service, Substream::Content, Substream::TieBreak];

    #[test]
    fn same_seed_same_million_draws() {
        let mut a = RandomStreams::new(42, 5);
        let mut b = RandomStreams::new(42, 5);
        for which in ALL {
            for _ in 0..1_000_000 {
                assert_eq!(a.next_u64(which), b.next_u64(which));
            }
        }
    }

    #[test]
    fn substreams_differ() {
        let mut s = RandomStreams::new(7, 5);
        let firsts: Vec<u64> = ALL.iter().map(|&w| s.next_u64(w)).collect();
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                assert_ne!(firsts[i], firsts[j]);
            }
        }
        let mut other = RandomStreams::new(8, 5);
        assert_ne!(other.next_u64(Substream::Arrival), RandomStreams::new(7, 5).next_u64(Substream::Arrival));
    }

    #[test]
    fn durations_are_keyed_not_sequential() {
        let mut forward = RandomStreams::new(3, 5);
        let mut backward = RandomStreams::new(3, 5);
        let keys: Vec<(PatientId, usize)> = (0..50).flat_map(|p| (1..=5).map(move |v| (p, v))).collect();
        let fwd: Vec<u32> = keys.iter().map(|&(p, v)| forward.service_periods(p, v, 0.3)).collect();
        let mut bwd: Vec<u32> = keys.iter().rev().map(|&(p, v)| backward.service_periods(p, v, 0.3)).collect();
        bwd.reverse();
        assert_eq!(fwd, bwd);
        // Arrival draws are untouched by duration lookups.
        let mut fresh = RandomStreams::new(3, 5);
        assert_eq!(forward.arrival_uniform(), fresh.arrival_uniform());
    }

    #[test]
    fn certain_events_last_one_period() {
        let mut s = RandomStreams::new(1, 3);
        for p in 0..100 {
            assert_eq!(s.service_periods(p, 1, 1.0), 1);
            assert_eq!(s.content_periods(p, 2, 1.0), 1);
        }
    }

    #[test]
    fn durations_have_geometric_means() {
        let mut s = RandomStreams::new(11, 5);
        for (p, draw) in [(0.8, true), (0.1, false)] {
            let n = 40_000u32;
            let total: f64 = (0..n)
                .map(|pid| f64::from(if draw { s.service_periods(pid, 2, p) } else { s.content_periods(pid, 2, p) }))
                .sum();
            let mean = total / f64::from(n);
            let sd = (1.0 - p).sqrt() / p / f64::from(n).sqrt();
            assert!((mean - 1.0 / p).abs() < 5.0 * sd, "p = {p}: mean {mean}");
        }
    }

    #[test]
    fn pick_is_uniform() {
        let mut s = RandomStreams::new(5, 1);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[s.pick(3)] += 1;
        }
        for c in counts {
            assert!((f64::from(c) - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }
}
