//! The rule engine: local function state and the guarded transitions of all
//! four execution models.
//!
//! A function's local state is `(M, E, Pr)`: a memory mapping, the event
//! processing status, and the set of unresolved promises. The four models
//! share most rules and differ only in the premises and conclusions of the
//! event lifecycle rules:
//!
//! * **SingleExecution** — responding terminates the function for good.
//! * **FunctionReuse** — responding frees the function; a later event may run
//!   in the same environment with memory and pending promises carried over.
//!   An idle environment may be invalidated at any time.
//! * **WaitAllOnRespond** — like reuse, but responding additionally requires
//!   that no unresolved promises remain.
//! * **DecoupledEnd** — responding is a message only and leaves the state
//!   unchanged; a separate `end()` action (requiring no unresolved promises)
//!   frees the function, and a new event may only start with an empty
//!   promise set.
//!
//! `step` is a pure transition function; schedulers must check
//! [`premise_holds`] first, and a step whose premise fails is a scheduler
//! bug surfaced as [`PremiseViolation`], never silently ignored.

mod promise;

pub use promise::*;

use crate::value::{EventId, Value};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Reserved memory location the event payload is stored in.
pub const INPUT_LOC: &str = "input";
/// Reserved memory location the response value is read from.
pub const RESPONSE_LOC: &str = "response";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticsVariant {
    SingleExecution,
    FunctionReuse,
    WaitAllOnRespond,
    DecoupledEnd,
}

impl SemanticsVariant {
    pub const ALL: [SemanticsVariant; 4] = [
        SemanticsVariant::SingleExecution,
        SemanticsVariant::FunctionReuse,
        SemanticsVariant::WaitAllOnRespond,
        SemanticsVariant::DecoupledEnd,
    ];
}

impl fmt::Display for SemanticsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticsVariant::SingleExecution => write!(f, "single"),
            SemanticsVariant::FunctionReuse => write!(f, "reuse"),
            SemanticsVariant::WaitAllOnRespond => write!(f, "waitall"),
            SemanticsVariant::DecoupledEnd => write!(f, "decoupled"),
        }
    }
}

impl FromStr for SemanticsVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "single-execution" => Ok(SemanticsVariant::SingleExecution),
            "reuse" | "function-reuse" => Ok(SemanticsVariant::FunctionReuse),
            "waitall" | "wait-all" => Ok(SemanticsVariant::WaitAllOnRespond),
            "decoupled" | "decoupled-end" => Ok(SemanticsVariant::DecoupledEnd),
            other => Err(format!(
                "unknown variant `{other}` (expected single, reuse, waitall, or decoupled)"
            )),
        }
    }
}

/// Event processing status: free, processing a specific event, or done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventStatus {
    Free,
    Processing(EventId),
    Done,
}

impl EventStatus {
    pub fn is_processing(&self) -> bool {
        matches!(self, EventStatus::Processing(_))
    }

    pub fn current_event(&self) -> Option<EventId> {
        match self {
            EventStatus::Processing(e) => Some(*e),
            _ => None,
        }
    }
}

impl fmt::Display for EventStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventStatus::Free => write!(f, "f"),
            EventStatus::Processing(e) => write!(f, "{e}"),
            EventStatus::Done => write!(f, "d"),
        }
    }
}

/// The local state of a single function instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionState {
    pub memory: BTreeMap<String, Value>,
    pub status: EventStatus,
    pub unresolved: BTreeSet<PromiseId>,
}

/// `(∅, f, ∅)`: empty memory, free, no unresolved promises.
pub fn initial_state() -> FunctionState {
    FunctionState {
        memory: BTreeMap::new(),
        status: EventStatus::Free,
        unresolved: BTreeSet::new(),
    }
}

/// A memory update performed by a local transition. The command itself has
/// already been evaluated; the rule only cares that computation happens
/// exclusively while an event is being processed.
#[derive(Debug, Clone, PartialEq)]
pub struct MemWrite {
    pub name: String,
    pub value: Value,
}

/// One transition of the rule system. Each action corresponds to exactly one
/// inference rule per variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// A new event arrives with payload `v`.
    Receive(Value),
    /// The response value is sent to the event originator.
    Respond(Value),
    /// The program declares all asynchronous processing finished.
    EndCall,
    /// The platform reclaims an idle environment.
    Invalidate,
    /// A command of the running program updates memory.
    LocalStep(MemWrite),
    /// An asynchronous task starts.
    StartAsync(PromiseId),
    /// An asynchronous task resolves.
    Resolve(PromiseId, Settlement),
}

impl Action {
    pub fn rule_name(&self) -> &'static str {
        match self {
            Action::Receive(_) => "Start Event",
            Action::Respond(_) => "Respond" ,
            Action::EndCall => "End Event",
            Action::Invalidate => "Invalidate Env",
            Action::LocalStep(_) => "Local Transition",
            Action::StartAsync(_) => "Start Asynchronous Task",
            Action::Resolve(..) => "End Asynchronous Task",
        }
    }
}

/// Observable side effects emitted by a transition.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    EventStarted(EventId),
    /// A response message left the function. Under the coupled models this
    /// also terminates or frees the function; under the decoupled model it
    /// is a message only.
    ResponseSent(Value),
    Ended,
    Invalidated,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FunctionState,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("premise violation in rule `{rule}`: {missing}")]
pub struct PremiseViolation {
    pub rule: &'static str,
    pub missing: String,
}

/// Monotonic event-id source. Ids are never reused; a simulation or pool
/// owns one counter so ids stay unique across instances.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EidCounter {
    next: u64,
}

impl EidCounter {
    pub fn new() -> Self {
        EidCounter { next: 0 }
    }

    pub fn starting_at(next: u64) -> Self {
        EidCounter { next }
    }

    pub fn fresh(&mut self) -> EventId {
        self.next += 1;
        EventId(self.next)
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

/// Whether the rule for `action` is enabled in `state` under `variant`.
pub fn premise_holds(state: &FunctionState, action: &Action, variant: SemanticsVariant) -> bool {
    match action {
        Action::Receive(_) => {
            state.status == EventStatus::Free
                && (variant != SemanticsVariant::DecoupledEnd || state.unresolved.is_empty())
        }
        Action::Respond(_) => {
            state.status.is_processing()
                && state.memory.contains_key(RESPONSE_LOC)
                && (variant != SemanticsVariant::WaitAllOnRespond || state.unresolved.is_empty())
        }
        Action::EndCall => {
            variant == SemanticsVariant::DecoupledEnd
                && state.status.is_processing()
                && state.unresolved.is_empty()
        }
        Action::Invalidate => {
            variant != SemanticsVariant::SingleExecution && state.status == EventStatus::Free
        }
        Action::LocalStep(_) => state.status.is_processing(),
        Action::StartAsync(_) => true,
        Action::Resolve(id, _) => state.unresolved.contains(id),
    }
}

/// Applies one rule. `Err(PremiseViolation)` means the caller scheduled a
/// disabled action.
pub fn step(
    state: &FunctionState,
    action: &Action,
    variant: SemanticsVariant,
    eids: &mut EidCounter,
) -> Result<StepOutcome, PremiseViolation> {
    if !premise_holds(state, action, variant) {
        return Err(PremiseViolation {
            rule: action.rule_name(),
            missing: describe_missing_premise(state, action, variant),
        });
    }
    let mut next = state.clone();
    let mut effects = Vec::new();
    match action {
        Action::Receive(v) => {
            let eid = eids.fresh();
            next.memory.insert(INPUT_LOC.to_string(), v.clone());
            next.status = EventStatus::Processing(eid);
            effects.push(Effect::EventStarted(eid));
        }
        Action::Respond(v) => {
            effects.push(Effect::ResponseSent(v.clone()));
            next.status = match variant {
                SemanticsVariant::SingleExecution => EventStatus::Done,
                SemanticsVariant::FunctionReuse | SemanticsVariant::WaitAllOnRespond => {
                    EventStatus::Free
                }
                // A message only: the state is unchanged.
                SemanticsVariant::DecoupledEnd => next.status,
            };
        }
        Action::EndCall => {
            next.status = EventStatus::Free;
            effects.push(Effect::Ended);
        }
        Action::Invalidate => {
            next.status = EventStatus::Done;
            effects.push(Effect::Invalidated);
        }
        Action::LocalStep(write) => {
            next.memory.insert(write.name.clone(), write.value.clone());
        }
        Action::StartAsync(id) => {
            next.unresolved.insert(*id);
        }
        Action::Resolve(id, _) => {
            next.unresolved.remove(id);
        }
    }
    Ok(StepOutcome { state: next, effects })
}

fn describe_missing_premise(
    state: &FunctionState,
    action: &Action,
    variant: SemanticsVariant,
) -> String {
    match action {
        Action::Receive(_) => {
            if state.status != EventStatus::Free {
                format!("requires E = f, but E = {}", state.status)
            } else {
                "requires Pr = {} under the decoupled model".to_string()
            }
        }
        Action::Respond(_) => {
            if !state.status.is_processing() {
                format!("requires an event in flight, but E = {}", state.status)
            } else if !state.memory.contains_key(RESPONSE_LOC) {
                "requires M(response) to be bound".to_string()
            } else {
                format!("requires Pr = {{}}, but |Pr| = {}", state.unresolved.len())
            }
        }
        Action::EndCall => {
            if variant != SemanticsVariant::DecoupledEnd {
                format!("only defined under the decoupled model, not {variant}")
            } else if !state.status.is_processing() {
                format!("requires an event in flight, but E = {}", state.status)
            } else {
                format!("requires Pr = {{}}, but |Pr| = {}", state.unresolved.len())
            }
        }
        Action::Invalidate => {
            if variant == SemanticsVariant::SingleExecution {
                "not defined under the single-execution model".to_string()
            } else {
                format!("requires E = f, but E = {}", state.status)
            }
        }
        Action::LocalStep(_) => format!("requires an event in flight, but E = {}", state.status),
        Action::StartAsync(_) => "unreachable".to_string(),
        Action::Resolve(id, _) => format!("requires {id} ∈ Pr"),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("residual execution queried while an event is being processed")]
pub struct QueriedWhileProcessing;

/// The unresolved promises left behind by a terminated or freed function.
/// A nonempty result after the final termination step means residual
/// execution exists; if the environment never runs again those promises are
/// broken.
pub fn residual_execution(
    state: &FunctionState,
) -> Result<BTreeSet<PromiseId>, QueriedWhileProcessing> {
    if state.status.is_processing() {
        return Err(QueriedWhileProcessing);
    }
    Ok(state.unresolved.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    fn processing_state(pending: &[u64]) -> FunctionState {
        let mut s = initial_state();
        s.status = EventStatus::Processing(EventId(1));
        s.memory.insert(RESPONSE_LOC.into(), Value::int(5));
        s.unresolved = pending.iter().map(|n| PromiseId(*n)).collect();
        s
    }

    #[test]
    fn initial_state_is_empty_free_empty() {
        let s = initial_state();
        assert!(s.memory.is_empty());
        assert_eq!(s.status, EventStatus::Free);
        assert!(s.unresolved.is_empty());
        assert_eq!(s, initial_state());
    }

    #[test]
    fn respond_premise_depends_on_variant() {
        let s = processing_state(&[12]);
        let respond = Action::Respond(Value::int(5));
        assert!(premise_holds(&s, &respond, SemanticsVariant::SingleExecution));
        assert!(premise_holds(&s, &respond, SemanticsVariant::FunctionReuse));
        assert!(!premise_holds(&s, &respond, SemanticsVariant::WaitAllOnRespond));
        assert!(premise_holds(&s, &respond, SemanticsVariant::DecoupledEnd));

        let drained = processing_state(&[]);
        assert!(premise_holds(&drained, &respond, SemanticsVariant::WaitAllOnRespond));
    }

    #[test]
    fn resolve_requires_membership() {
        let s = processing_state(&[12]);
        let settled = Settlement::Fulfilled(Value::int(1));
        let hit = Action::Resolve(PromiseId(12), settled.clone());
        let miss = Action::Resolve(PromiseId(99), settled);
        assert!(premise_holds(&s, &hit, SemanticsVariant::SingleExecution));
        assert!(!premise_holds(&s, &miss, SemanticsVariant::SingleExecution));
    }

    #[test]
    fn receive_needs_empty_promise_set_only_when_decoupled() {
        let mut s = initial_state();
        s.unresolved.insert(PromiseId(12));
        let receive = Action::Receive(Value::int(112));
        assert!(premise_holds(&s, &receive, SemanticsVariant::FunctionReuse));
        assert!(!premise_holds(&s, &receive, SemanticsVariant::DecoupledEnd));
    }

    #[test]
    fn receive_carries_pending_promises_over() {
        let mut s = initial_state();
        s.unresolved.insert(PromiseId(12));
        let mut eids = EidCounter::starting_at(1);
        let out = step(
            &s,
            &Action::Receive(Value::int(112)),
            SemanticsVariant::FunctionReuse,
            &mut eids,
        )
        .unwrap();
        assert_eq!(out.state.status, EventStatus::Processing(EventId(2)));
        assert_eq!(out.state.memory.get(INPUT_LOC), Some(&Value::int(112)));
        assert!(out.state.unresolved.contains(&PromiseId(12)));
    }

    #[test]
    fn end_call_frees_a_drained_function() {
        let s = processing_state(&[]);
        let mut eids = EidCounter::new();
        let out = step(&s, &Action::EndCall, SemanticsVariant::DecoupledEnd, &mut eids).unwrap();
        assert_eq!(out.state.status, EventStatus::Free);
        assert!(out.state.unresolved.is_empty());
        assert_eq!(out.effects, vec![Effect::Ended]);
    }

    #[test]
    fn invalidate_marks_an_idle_environment_done() {
        let mut s = initial_state();
        s.unresolved.insert(PromiseId(12));
        let mut eids = EidCounter::new();
        let out = step(&s, &Action::Invalidate, SemanticsVariant::FunctionReuse, &mut eids).unwrap();
        assert_eq!(out.state.status, EventStatus::Done);
        assert!(out.state.unresolved.contains(&PromiseId(12)));
    }

    #[test]
    fn respond_post_state_varies_by_model() {
        let s = processing_state(&[12]);
        let mut eids = EidCounter::new();
        let respond = Action::Respond(Value::int(5));
        let single = step(&s, &respond, SemanticsVariant::SingleExecution, &mut eids).unwrap();
        assert_eq!(single.state.status, EventStatus::Done);
        let reuse = step(&s, &respond, SemanticsVariant::FunctionReuse, &mut eids).unwrap();
        assert_eq!(reuse.state.status, EventStatus::Free);
        let decoupled = step(&s, &respond, SemanticsVariant::DecoupledEnd, &mut eids).unwrap();
        assert_eq!(decoupled.state, s, "respond is a message only under the decoupled model");
        assert_eq!(decoupled.effects, vec![Effect::ResponseSent(Value::int(5))]);
    }

    #[test]
    fn scheduling_a_disabled_action_is_a_hard_error() {
        let s = initial_state();
        let mut eids = EidCounter::new();
        let err = step(
            &s,
            &Action::LocalStep(MemWrite { name: "x".into(), value: Value::int(1) }),
            SemanticsVariant::SingleExecution,
            &mut eids,
        )
        .unwrap_err();
        assert_eq!(err.rule, "Local Transition");
    }

    #[test]
    fn residual_execution_reports_leftover_promises() {
        let mut s = initial_state();
        s.status = EventStatus::Done;
        s.unresolved.insert(PromiseId(12));
        assert_eq!(
            residual_execution(&s).unwrap(),
            [PromiseId(12)].into_iter().collect()
        );
        assert!(residual_execution(&initial_state()).unwrap().is_empty());
        assert!(residual_execution(&processing_state(&[])).is_err());
    }

    #[test]
    fn event_ids_are_never_reissued() {
        let mut eids = EidCounter::new();
        let a = eids.fresh();
        let b = eids.fresh();
        assert_ne!(a, b);
        assert!(b > a);
    }
}
