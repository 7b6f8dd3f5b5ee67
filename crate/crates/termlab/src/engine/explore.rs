//! Exhaustive interleaving exploration.
//!
//! Depth-first search over world states, memoized on a canonical state
//! fingerprint (the virtual clock excluded, so timing-equivalent states
//! merge). Each distinct terminal outcome is reported once, with the first
//! schedule that reached it as a replayable witness.

use super::{EngineError, ScheduleSource, Sim};
use crate::program::Program;
use crate::semantics::SemanticsVariant;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreBounds {
    pub max_depth: usize,
    pub max_states: usize,
}

impl Default for ExploreBounds {
    fn default() -> Self {
        ExploreBounds { max_depth: 10_000, max_states: 100_000 }
    }
}

/// What distinguishes one terminal outcome from another: the final store,
/// the residual promise sites, and the responses. Event status is excluded
/// so coupled and reuse runs of the same behaviour classify together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeData {
    pub db: BTreeMap<String, Value>,
    pub residual: Vec<String>,
    pub responses: Vec<(u64, Value)>,
}

impl OutcomeData {
    pub fn key(&self) -> String {
        crate::canonical::to_canonical_json(self)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeClass {
    pub outcome: OutcomeData,
    /// One schedule that reaches this outcome.
    pub witness_schedule: Vec<usize>,
    /// Number of distinct terminal states classified here.
    pub terminal_states: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub outcomes: BTreeMap<String, OutcomeClass>,
    pub states_explored: usize,
    /// False when a bound was hit; the outcome set is then a lower bound.
    pub complete: bool,
}

impl ExplorationReport {
    pub fn outcome_classes(&self) -> impl Iterator<Item = &OutcomeClass> {
        self.outcomes.values()
    }
}

/// Enumerates every schedule of `program` on `events` under `variant`,
/// within `bounds`. Latency windows are ignored: completion order is pure
/// scheduler nondeterminism, so the state space is finite whenever the
/// program is.
pub fn explore(
    program: &Program,
    events: &[Value],
    variant: SemanticsVariant,
    bounds: ExploreBounds,
) -> Result<ExplorationReport, EngineError> {
    let root = Sim::new_lite(program, events, variant, &ScheduleSource::scripted([]))?;
    let mut visited: HashSet<u64> = HashSet::new();
    let mut outcomes: BTreeMap<String, OutcomeClass> = BTreeMap::new();
    let mut terminal_keys: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Sim, usize)> = vec![(root, 0)];
    let mut complete = true;

    while let Some((mut sim, depth)) = stack.pop() {
        let n = sim.enabled_choices()?;
        let key = sim.state_key();
        if !visited.insert(key) {
            continue;
        }
        if visited.len() > bounds.max_states {
            complete = false;
            break;
        }
        if n == 0 {
            if terminal_keys.insert(key) {
                let outcome = sim.outcome_data();
                let okey = outcome.key();
                let entry = outcomes.entry(okey).or_insert_with(|| OutcomeClass {
                    outcome,
                    witness_schedule: sim.resolved_schedule().to_vec(),
                    terminal_states: 0,
                });
                entry.terminal_states += 1;
            }
            continue;
        }
        if depth >= bounds.max_depth {
            complete = false;
            continue;
        }
        for choice in (0..n).rev() {
            let mut branch = sim.clone();
            branch.apply_choice(choice)?;
            stack.push((branch, depth + 1));
        }
    }

    Ok(ExplorationReport { outcomes, states_explored: visited.len(), complete })
}
