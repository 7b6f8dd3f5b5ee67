//! Schedule sources: where nondeterministic choices come from.
//!
//! A choice point is any state with more than one enabled action. Seeded
//! runs sample latencies and pick uniformly among currently-eligible
//! actions; scripted runs replay an explicit list of choice indices.
//! Single-option points never consume a choice, so scripts stay short and a
//! seeded run's recorded choices replay exactly under `Scripted`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleSource {
    /// Deterministic pseudo-random schedule; identical inputs and seed give
    /// an identical trace.
    Seeded { seed: u64 },
    /// Explicit list of choice indices, as stored in a trace.
    Scripted { choices: Vec<usize> },
}

impl ScheduleSource {
    pub fn seeded(seed: u64) -> Self {
        ScheduleSource::Seeded { seed }
    }

    pub fn scripted(choices: impl Into<Vec<usize>>) -> Self {
        ScheduleSource::Scripted { choices: choices.into() }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Chooser {
    Seeded { rng: ChaCha8Rng },
    Scripted { choices: Vec<usize>, cursor: usize },
}

impl Chooser {
    pub fn new(source: &ScheduleSource) -> Self {
        match source {
            ScheduleSource::Seeded { seed } => {
                Chooser::Seeded { rng: ChaCha8Rng::seed_from_u64(*seed) }
            }
            ScheduleSource::Scripted { choices } => {
                Chooser::Scripted { choices: choices.clone(), cursor: 0 }
            }
        }
    }

    /// Latencies only matter to seeded runs; everything else treats
    /// completion order as pure scheduler nondeterminism.
    pub fn honors_latency(&self) -> bool {
        matches!(self, Chooser::Seeded { .. })
    }

    /// Samples a latency from `[min, max]`.
    pub fn sample_latency(&mut self, min: u64, max: u64) -> u64 {
        match self {
            Chooser::Seeded { rng } => rng.gen_range(min..=max.max(min)),
            Chooser::Scripted { .. } => min,
        }
    }

    /// Picks one of `eligible` (indices into the full option list).
    /// Returns `None` when a script runs out of choices.
    pub fn pick(&mut self, eligible: &[usize]) -> Option<usize> {
        match self {
            Chooser::Seeded { rng } => {
                let k = rng.gen_range(0..eligible.len());
                Some(eligible[k])
            }
            Chooser::Scripted { choices, cursor } => {
                let idx = *choices.get(*cursor)?;
                *cursor += 1;
                Some(idx)
            }
        }
    }
}
