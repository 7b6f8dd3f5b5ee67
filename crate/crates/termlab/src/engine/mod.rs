//! The execution engine: drives a program under one of the four execution
//! models against the simulated store and a virtual clock.
//!
//! Execution is a sequence of scheduler steps. At every step the enabled
//! options are: advance the mainline by one command batch, fire one pending
//! completion (an in-flight operation or handler result), or start the next
//! queued event when the function is free. A command batch is a row-producing
//! command together with the registrations that follow it on the way to the
//! next one; handler bodies and resolve cascades run to completion inside a
//! single step. Any step with more than one option is a choice point, fed by
//! a seeded or scripted [`ScheduleSource`]; points with a single option never
//! consume a choice, which keeps scripts short.
//!
//! The platform only lets a function compute while it is processing an
//! event, so completions fire only then: work left pending when the function
//! terminates stays pending forever (a broken promise) or leaks into the
//! next event in a reused environment.

mod explore;
mod schedule;
mod store;
mod trace;

pub use explore::{explore, ExploreBounds, ExplorationReport, OutcomeClass, OutcomeData};
pub use schedule::ScheduleSource;
pub use store::{ExternalStore, LatencyConfig};
pub use trace::*;

use crate::canonical;
use crate::program::{
    command_text, handler_text, validate, AsyncOp, Command, CombineKind, Expr,
    EvalScope, Handler, HandlerResult, Loc, OpSpec, Program, ReactionKind, RespondArg, Scope,
    eval_expr, has_errors,
};
use crate::semantics::{
    initial_state, premise_holds, residual_execution, step, Action, DoubleSettle, EidCounter,
    Effect, EventStatus, FunctionState, MemWrite, PremiseViolation, PromiseRecord, PromiseState,
    Settlement, SemanticsVariant, RESPONSE_LOC, INPUT_LOC, PromiseId,
};
use crate::value::{EventId, Value, ValueKind};
use schedule::Chooser;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("program failed validation:\n{0}")]
    InvalidProgram(String),
    #[error("scripted schedule exhausted at choice point {at} ({options} options)")]
    ScheduleExhausted { at: usize, options: usize },
    #[error("scripted choice {got} out of range at choice point {at} ({options} options)")]
    InvalidChoice { at: usize, got: usize, options: usize },
    #[error("step limit exceeded ({0} scheduler steps)")]
    StepLimit(usize),
    #[error("state space exceeded: {0} states explored")]
    StateSpaceExceeded(usize),
    #[error("replay diverged from the recorded trace at row {row}")]
    ReplayDivergence { row: usize },
    #[error("promise name `{name}` is not bound at l{loc}")]
    UnboundPromise { name: String, loc: u32 },
    #[error(transparent)]
    Premise(#[from] PremiseViolation),
    #[error(transparent)]
    DoubleSettle(#[from] DoubleSettle),
}

/// Safety net against runaway schedules.
const MAX_SCHEDULER_STEPS: usize = 200_000;

/// Wraps a raw payload in the event envelope: scalars arrive as
/// `{val: payload}`, records pass through unchanged.
pub fn envelope(payload: Value) -> Value {
    match payload.kind {
        ValueKind::Record(_) => payload,
        _ => Value::record(vec![("val".to_string(), payload)]),
    }
}

/// One schedulable option.
#[derive(Debug, Clone, PartialEq)]
enum ChoiceOption {
    AdvanceMainline,
    Fire(u64),
    ReceiveNext,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Init,
    Root,
    Reaction { kind: ReactionKind, handler: Handler },
    Combinator { kind: CombineKind, members: Vec<usize> },
}

#[derive(Debug, Clone)]
struct SettledNode {
    settlement: Settlement,
    step: Option<usize>,
    during: Option<EventId>,
}

/// Registry entry: one per promise site instance. Registered reaction
/// targets become graph nodes even if they never run.
#[derive(Debug, Clone)]
struct Node {
    event: EventId,
    site: Option<Loc>,
    desc: String,
    parents: Vec<(usize, EdgeKind)>,
    kind: NodeKind,
    dependents: Vec<usize>,
    member_of: Vec<usize>,
    started: Option<(PromiseId, usize)>,
    settled: Option<SettledNode>,
    respond_bound: bool,
    combine_queued: bool,
}

impl Node {
    fn label(&self) -> String {
        match self.site {
            Some(loc) => loc.site(),
            None => "p_init".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
enum PendingKind {
    /// An in-flight asynchronous operation; a db write carries its store
    /// mutation, applied when the completion fires.
    OpDone { node: usize, settlement: Settlement, effect: Option<(String, Value)> },
    /// A handler's value result becoming the settlement of its promise.
    PureDone { node: usize, settlement: Settlement },
    /// A combinator whose outcome is determined.
    CombineDone { node: usize, settlement: Settlement },
    /// A reaction attached to an already-settled promise.
    RunReaction { node: usize, settlement: Settlement },
}

#[derive(Debug, Clone)]
struct Pending {
    seq: u64,
    due: u64,
    issued_at: u64,
    deadline: Option<u64>,
    poisoned: bool,
    kind: PendingKind,
}

#[derive(Debug, Clone, Default)]
struct RespondCtl {
    bound_node: Option<usize>,
    ready: Option<Value>,
    ready_is_error: bool,
    sent: bool,
    loc: Option<Loc>,
}

/// Handler-turn scope: the handler's own node, its locals, and promise
/// names bound inside the body.
#[derive(Debug, Default)]
struct HandlerCtx {
    node: Option<usize>,
    locals: BTreeMap<String, Value>,
    bindings: BTreeMap<String, usize>,
}

/// A single function instance mid-execution. Cloning forks the whole world,
/// which is how exploration branches.
#[derive(Clone)]
pub struct Sim {
    program: Program,
    variant: SemanticsVariant,
    chooser: Chooser,
    lite: bool,

    function: FunctionState,
    records: BTreeMap<PromiseId, PromiseRecord>,
    nodes: Vec<Node>,
    pending: Vec<Pending>,
    store: ExternalStore,
    clock: u64,
    eids: EidCounter,
    next_pid: u64,
    next_seq: u64,
    events_queue: VecDeque<Value>,
    delivered_events: Vec<Value>,

    batches: Vec<Vec<usize>>,
    mainline_pos: usize,
    locals: BTreeMap<String, Value>,
    bindings: BTreeMap<String, usize>,
    extra_globals: BTreeSet<String>,
    respond: RespondCtl,
    has_respond_command: bool,
    end_requested: bool,
    end_loc: Option<Loc>,
    init_node: Option<usize>,

    rows: Vec<TraceStep>,
    row_count: usize,
    steps_taken: usize,
    resolved_schedule: Vec<usize>,
    responses: Vec<ResponseRecord>,
    events_started: Vec<(u64, usize)>,
    ended_events: Vec<(u64, usize)>,
    db_writes: Vec<DbWriteRecord>,
    diagnostics: Vec<String>,
}

impl Sim {
    pub fn new(
        program: &Program,
        events: &[Value],
        variant: SemanticsVariant,
        source: &ScheduleSource,
    ) -> Result<Self, EngineError> {
        Self::build(program, events, variant, source, false)
    }

    /// A simulation that skips trace-row bookkeeping; used by exploration,
    /// where only outcomes matter.
    pub fn new_lite(
        program: &Program,
        events: &[Value],
        variant: SemanticsVariant,
        source: &ScheduleSource,
    ) -> Result<Self, EngineError> {
        Self::build(program, events, variant, source, true)
    }

    fn build(
        program: &Program,
        events: &[Value],
        variant: SemanticsVariant,
        source: &ScheduleSource,
        lite: bool,
    ) -> Result<Self, EngineError> {
        let diags = validate(program, variant);
        if has_errors(&diags) {
            let text = diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n");
            return Err(EngineError::InvalidProgram(text));
        }

        let mut batches: Vec<Vec<usize>> = Vec::new();
        for (i, cmd) in program.body.iter().enumerate() {
            if cmd.produces_row() || batches.is_empty() {
                batches.push(vec![i]);
            } else {
                batches.last_mut().unwrap().push(i);
            }
        }

        let has_respond_command = program_has_respond(&program.body);
        let events: Vec<Value> = events.iter().cloned().map(envelope).collect();

        Ok(Sim {
            program: program.clone(),
            variant,
            chooser: Chooser::new(source),
            lite,
            function: initial_state(),
            records: BTreeMap::new(),
            nodes: Vec::new(),
            pending: Vec::new(),
            store: ExternalStore::new(),
            clock: 0,
            eids: EidCounter::new(),
            next_pid: 0,
            next_seq: 0,
            events_queue: events.iter().cloned().collect(),
            delivered_events: events,
            batches,
            mainline_pos: usize::MAX,
            locals: BTreeMap::new(),
            bindings: BTreeMap::new(),
            extra_globals: BTreeSet::new(),
            respond: RespondCtl::default(),
            has_respond_command,
            end_requested: false,
            end_loc: None,
            init_node: None,
            rows: Vec::new(),
            row_count: 0,
            steps_taken: 0,
            resolved_schedule: Vec::new(),
            responses: Vec::new(),
            events_started: Vec::new(),
            ended_events: Vec::new(),
            db_writes: Vec::new(),
            diagnostics: Vec::new(),
        })
    }

    // ---- public driving API ----------------------------------------------

    /// Runs auto-actions to a fixpoint and returns the number of enabled
    /// scheduler options. Zero means the run is over (or wedged).
    pub fn enabled_choices(&mut self) -> Result<usize, EngineError> {
        self.auto_phase()?;
        Ok(self.full_options().len())
    }

    /// Applies option `idx` of the current option list. Choice points with
    /// more than one option are recorded into the resolved schedule.
    pub fn apply_choice(&mut self, idx: usize) -> Result<(), EngineError> {
        let options = self.full_options();
        if idx >= options.len() {
            return Err(EngineError::InvalidChoice {
                at: self.resolved_schedule.len(),
                got: idx,
                options: options.len(),
            });
        }
        if options.len() > 1 {
            self.resolved_schedule.push(idx);
        }
        let option = options[idx].clone();
        self.apply_option(&option)?;
        self.steps_taken += 1;
        if self.steps_taken > MAX_SCHEDULER_STEPS {
            return Err(EngineError::StepLimit(self.steps_taken));
        }
        self.clock += 1;
        Ok(())
    }

    /// Drives until `stop` holds, the run terminates, or the virtual clock
    /// reaches `deadline`.
    pub fn drive_until(
        &mut self,
        deadline: Option<u64>,
        stop: impl Fn(&Sim) -> bool,
    ) -> Result<DriveStop, EngineError> {
        loop {
            self.auto_phase()?;
            if stop(self) {
                return Ok(DriveStop::Condition);
            }
            if let Some(d) = deadline {
                if self.clock >= d {
                    return Ok(DriveStop::DeadlineExceeded);
                }
            }
            let options = self.full_options();
            if options.is_empty() {
                return Ok(DriveStop::Terminal);
            }
            let eligible = self.eligible_indices(&options);
            if eligible.is_empty() {
                // All pending work lies in the future; jump there.
                let min_due = self
                    .pending
                    .iter()
                    .map(|p| p.due)
                    .min()
                    .expect("ineligible options imply pending work");
                if let Some(d) = deadline {
                    if min_due > d {
                        self.clock = d;
                        return Ok(DriveStop::DeadlineExceeded);
                    }
                }
                self.clock = min_due.max(self.clock);
                continue;
            }
            let idx = if options.len() == 1 {
                0
            } else {
                match self.chooser.pick(&eligible) {
                    Some(i) => i,
                    None => {
                        return Err(EngineError::ScheduleExhausted {
                            at: self.resolved_schedule.len(),
                            options: options.len(),
                        })
                    }
                }
            };
            self.apply_choice(idx)?;
        }
    }

    /// Runs the simulation to the end.
    pub fn run_to_completion(&mut self) -> Result<(), EngineError> {
        match self.drive_until(None, |_| false)? {
            DriveStop::Terminal => Ok(()),
            other => unreachable!("unbounded drive stopped with {other:?}"),
        }
    }

    pub fn enqueue_event(&mut self, payload: Value) {
        let payload = envelope(payload);
        self.events_queue.push_back(payload.clone());
        self.delivered_events.push(payload);
    }

    /// Applies the platform's invalidate transition to an idle environment.
    pub fn invalidate(&mut self) -> Result<(), EngineError> {
        let out = step(&self.function, &Action::Invalidate, self.variant, &mut self.eids)?;
        self.function = out.state;
        self.emit_row("-", "ε".to_string(), Vec::new(), "environment invalidated".to_string());
        Ok(())
    }

    /// Simulates the environment being suspended for `ticks` while idle.
    /// Pending operations with a protocol deadline shorter than the
    /// suspension are poisoned: they will resolve to a peer-timeout
    /// rejection when the function next runs.
    pub fn suspend_resume(&mut self, ticks: u64) {
        debug_assert!(
            !self.function.status.is_processing(),
            "environments are only suspended between events"
        );
        for p in &mut self.pending {
            if let Some(d) = p.deadline {
                if p.issued_at + d < self.clock + ticks {
                    p.poisoned = true;
                }
            }
        }
        self.clock += ticks;
    }

    // ---- accessors --------------------------------------------------------

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn variant(&self) -> SemanticsVariant {
        self.variant
    }

    pub fn responses(&self) -> &[ResponseRecord] {
        &self.responses
    }

    pub fn ended_events(&self) -> &[(u64, usize)] {
        &self.ended_events
    }

    pub fn function_state(&self) -> &FunctionState {
        &self.function
    }

    pub fn resolved_schedule(&self) -> &[usize] {
        &self.resolved_schedule
    }

    pub fn events_remaining(&self) -> usize {
        self.events_queue.len()
    }

    /// Outcome summary used to classify terminal states: the final store
    /// contents, the residual promise sites, and the responses. The event
    /// status is deliberately excluded so outcomes compare across models
    /// that end in `done` versus `free`.
    pub fn outcome_data(&self) -> OutcomeData {
        let residual: Vec<String> = self
            .function
            .unresolved
            .iter()
            .map(|pid| self.records[pid].site.site())
            .collect();
        OutcomeData {
            db: self.store.data.clone(),
            residual,
            responses: self
                .responses
                .iter()
                .map(|r| (r.event, r.value.clone()))
                .collect(),
        }
    }

    /// Canonical fingerprint of the current world, excluding the clock, for
    /// exploration memoization.
    pub fn state_key(&self) -> u64 {
        #[derive(Serialize)]
        struct NodeView<'a> {
            label: String,
            event: u64,
            desc: &'a str,
            status: String,
        }
        #[derive(Serialize)]
        struct Key<'a> {
            memory: &'a BTreeMap<String, Value>,
            status: String,
            nodes: Vec<NodeView<'a>>,
            pending: Vec<(u8, String)>,
            queue: &'a VecDeque<Value>,
            locals: &'a BTreeMap<String, Value>,
            bindings: &'a BTreeMap<String, usize>,
            mainline_pos: usize,
            respond: (Option<usize>, Option<&'a Value>, bool),
            end_requested: bool,
            db: &'a BTreeMap<String, Value>,
            responses: Vec<(u64, &'a Value)>,
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeView {
                label: n.label(),
                event: n.event.0,
                desc: &n.desc,
                status: match (&n.started, &n.settled) {
                    (_, Some(s)) => format!(
                        "settled:{}:{}",
                        s.settlement.outcome(),
                        canonical::to_canonical_json(s.settlement.value())
                    ),
                    (Some(_), None) => "started".to_string(),
                    (None, None) => "registered".to_string(),
                },
            })
            .collect();
        let mut pending: Vec<(u8, String)> = self
            .pending
            .iter()
            .map(|p| {
                let (tag, node) = match &p.kind {
                    PendingKind::OpDone { node, .. } => (0, node),
                    PendingKind::PureDone { node, .. } => (1, node),
                    PendingKind::CombineDone { node, .. } => (2, node),
                    PendingKind::RunReaction { node, .. } => (3, node),
                };
                (tag, self.nodes[*node].label())
            })
            .collect();
        pending.sort();
        let key = Key {
            memory: &self.function.memory,
            status: self.function.status.to_string(),
            nodes,
            pending,
            queue: &self.events_queue,
            locals: &self.locals,
            bindings: &self.bindings,
            mainline_pos: self.mainline_pos,
            respond: (
                self.respond.bound_node,
                self.respond.ready.as_ref(),
                self.respond.sent,
            ),
            end_requested: self.end_requested,
            db: &self.store.data,
            responses: self.responses.iter().map(|r| (r.event, &r.value)).collect(),
        };
        canonical::fingerprint(&canonical::to_canonical_json(&key))
    }

    /// Finalizes the run into a self-contained trace.
    pub fn into_trace(mut self) -> ExecutionTrace {
        if self.function.status.is_processing()
            && self.pending.is_empty()
            && self.mainline_pos >= self.batches.len()
        {
            let n = self.function.unresolved.len();
            if n > 0 {
                self.diagnostics.push(format!(
                    "event wedged while processing: {n} unresolved promise(s) with no runnable work"
                ));
            }
        }
        let residual: Vec<String> = self
            .function
            .unresolved
            .iter()
            .map(|pid| {
                let r = &self.records[pid];
                format!("{} ({})", r.site.site(), r.desc)
            })
            .collect();
        let promise_nodes: Vec<PromiseNode> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| PromiseNode {
                node: i,
                event: n.event.0,
                label: n.label(),
                desc: n.desc.clone(),
                parents: n.parents.clone(),
                started_step: n.started.map(|(_, s)| s),
                started_event: n.started.map(|(pid, _)| self.records[&pid].origin.0),
                settled: n.settled.as_ref().map(|s| SettledInfo {
                    outcome: s.settlement.outcome().to_string(),
                    step: s.step,
                    during: s.during.map(|e| e.0),
                    value: s.settlement.value().clone(),
                }),
                respond_bound: n.respond_bound,
                intermediate: matches!(
                    &n.kind,
                    NodeKind::Reaction { handler, .. }
                        if matches!(handler.result, Some(HandlerResult::Value(_)))
                ) && !n.respond_bound
                    && !n.dependents.is_empty(),
            })
            .collect();

        #[derive(Serialize)]
        struct FinalWorld<'a> {
            function: &'a FunctionState,
            db: &'a BTreeMap<String, Value>,
            queue: &'a VecDeque<Value>,
        }
        let digest = canonical::digest(&FinalWorld {
            function: &self.function,
            db: &self.store.data,
            queue: &self.events_queue,
        });

        ExecutionTrace {
            schema_version: TRACE_SCHEMA_VERSION,
            program_name: self.program.name.clone(),
            program_source: self.program.source.clone(),
            variant: self.variant.to_string(),
            events: self.delivered_events,
            steps: self.rows,
            responses: self.responses,
            schedule: self.resolved_schedule,
            promise_nodes,
            events_started: self.events_started,
            ended_events: self.ended_events,
            db_writes: self.db_writes,
            db_final: self.store.data,
            final_status: self.function.status.to_string(),
            residual,
            diagnostics: self.diagnostics,
            digest,
        }
    }

    // ---- option computation ----------------------------------------------

    fn full_options(&self) -> Vec<ChoiceOption> {
        let mut out = Vec::new();
        match self.function.status {
            EventStatus::Processing(_) => {
                if self.mainline_pos < self.batches.len() {
                    out.push(ChoiceOption::AdvanceMainline);
                }
                let mut seqs: Vec<u64> = self.pending.iter().map(|p| p.seq).collect();
                seqs.sort_unstable();
                out.extend(seqs.into_iter().map(ChoiceOption::Fire));
            }
            EventStatus::Free => {
                let receivable = !self.events_queue.is_empty()
                    && (self.variant != SemanticsVariant::DecoupledEnd
                        || self.function.unresolved.is_empty());
                if receivable {
                    out.push(ChoiceOption::ReceiveNext);
                }
            }
            EventStatus::Done => {}
        }
        out
    }

    fn eligible_indices(&self, options: &[ChoiceOption]) -> Vec<usize> {
        if !self.chooser.honors_latency() {
            return (0..options.len()).collect();
        }
        options
            .iter()
            .enumerate()
            .filter(|(_, o)| match o {
                ChoiceOption::Fire(seq) => {
                    let p = self.pending.iter().find(|p| p.seq == *seq).unwrap();
                    p.due <= self.clock
                }
                _ => true,
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn apply_option(&mut self, option: &ChoiceOption) -> Result<(), EngineError> {
        match option {
            ChoiceOption::AdvanceMainline => self.advance_mainline(),
            ChoiceOption::Fire(seq) => {
                let pos = self
                    .pending
                    .iter()
                    .position(|p| p.seq == *seq)
                    .expect("fired completion exists");
                let p = self.pending.remove(pos);
                self.fire_completion(p)
            }
            ChoiceOption::ReceiveNext => self.receive_next(),
        }
    }

    // ---- auto actions ------------------------------------------------------

    fn auto_phase(&mut self) -> Result<(), EngineError> {
        loop {
            if self.try_respond(false)? {
                continue;
            }
            if self.try_end(false)? {
                continue;
            }
            if self.try_wedge_respond() {
                continue;
            }
            return Ok(());
        }
    }

    /// Fires the respond action if a response value is ready and the current
    /// model's premise holds. With `merge`, the already-emitted row is
    /// annotated instead of a new one.
    fn try_respond(&mut self, merge: bool) -> Result<bool, EngineError> {
        if self.respond.sent || !self.function.status.is_processing() {
            return Ok(false);
        }
        let Some(value) = self.respond.ready.clone() else {
            return Ok(false);
        };
        self.function.memory.insert(RESPONSE_LOC.to_string(), value.clone());
        let action = Action::Respond(value.clone());
        if !premise_holds(&self.function, &action, self.variant) {
            return Ok(false);
        }
        let event = self.current_event();
        let out = step(&self.function, &action, self.variant, &mut self.eids)?;
        self.function = out.state;
        self.respond.sent = true;
        let step_idx = if merge && self.row_count > 0 {
            self.set_last_comment("response produced");
            self.row_count - 1
        } else {
            let loc = self.respond.loc.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
            self.emit_row(&loc, format!("respond({value})"), Vec::new(), "response produced".into())
        };
        self.responses.push(ResponseRecord {
            event: event.0,
            value,
            step: step_idx,
            is_error: self.respond.ready_is_error,
        });
        Ok(true)
    }

    /// Fires the end action once requested and enabled.
    fn try_end(&mut self, merge: bool) -> Result<bool, EngineError> {
        if !self.end_requested {
            return Ok(false);
        }
        if !premise_holds(&self.function, &Action::EndCall, self.variant) {
            return Ok(false);
        }
        let event = self.current_event();
        let out = step(&self.function, &Action::EndCall, self.variant, &mut self.eids)?;
        self.function = out.state;
        self.end_requested = false;
        let step_idx = if merge && self.row_count > 0 {
            self.set_last_comment("function ended");
            self.row_count - 1
        } else {
            let loc = self.end_loc.map(|l| l.to_string()).unwrap_or_else(|| "-".into());
            self.emit_row(&loc, "end()".to_string(), Vec::new(), "function ended".into())
        };
        self.ended_events.push((event.0, step_idx));
        Ok(true)
    }

    /// A program with no respond command still answers its caller: once an
    /// event runs out of work under a coupled model, the platform responds
    /// `undefined`.
    fn try_wedge_respond(&mut self) -> bool {
        if self.has_respond_command
            || self.variant == SemanticsVariant::DecoupledEnd
            || self.respond.sent
            || self.respond.ready.is_some()
            || !self.function.status.is_processing()
            || self.mainline_pos < self.batches.len()
            || !self.pending.is_empty()
        {
            return false;
        }
        let event = self.current_event();
        self.respond.ready = Some(Value::undefined(event));
        self.respond.loc = Some(self.program.main_loc);
        self.diagnostics
            .push(format!("event {event} has no respond command; responding undefined"));
        true
    }

    // ---- event lifecycle ---------------------------------------------------

    fn receive_next(&mut self) -> Result<(), EngineError> {
        let payload = self.events_queue.pop_front().expect("receive with empty queue");
        let out = step(
            &self.function,
            &Action::Receive(payload.clone()),
            self.variant,
            &mut self.eids,
        )?;
        self.function = out.state;
        let eid = match out.effects.first() {
            Some(Effect::EventStarted(e)) => *e,
            _ => unreachable!("receive emits EventStarted"),
        };
        let tainted = payload.tainted(eid);
        self.function.memory.insert(INPUT_LOC.to_string(), tainted.clone());
        self.function
            .memory
            .insert(self.program.param.clone(), tainted);

        self.mainline_pos = 0;
        self.locals.clear();
        self.bindings.clear();
        self.respond = RespondCtl::default();
        self.end_requested = false;
        self.end_loc = None;
        let init = self.add_node(eid, None, "p_init".to_string(), Vec::new(), NodeKind::Init);
        self.init_node = Some(init);

        let carried: Vec<String> = self
            .function
            .unresolved
            .iter()
            .map(|pid| self.records[pid].site.site())
            .collect();
        let comment = if carried.is_empty() {
            String::new()
        } else {
            format!("promise {} carried over from previous run", carried.join(", "))
        };
        let snapshot = self.memory_snapshot();
        let row = self.emit_row(
            &self.program.main_loc.to_string(),
            format!("main({})", self.program.param),
            snapshot,
            comment,
        );
        self.events_started.push((eid.0, row));

        // Anything before the first row-producing command (comments,
        // declarations) belongs to the event-start step.
        if self.mainline_pos < self.batches.len() {
            let first = &self.program.body[self.batches[0][0]];
            if !first.produces_row() {
                self.advance_mainline()?;
            }
        }
        Ok(())
    }

    fn advance_mainline(&mut self) -> Result<(), EngineError> {
        let batch = self.batches[self.mainline_pos].clone();
        self.mainline_pos += 1;
        for idx in batch {
            let cmd = self.program.body[idx].clone();
            self.exec_command(&cmd, &mut None)?;
        }
        Ok(())
    }

    // ---- command execution -------------------------------------------------

    fn exec_command(
        &mut self,
        cmd: &Command,
        hctx: &mut Option<HandlerCtx>,
    ) -> Result<(), EngineError> {
        match cmd {
            Command::Comment { .. } => Ok(()),
            Command::DeclareGlobal { name, .. } => {
                self.extra_globals.insert(name.clone());
                Ok(())
            }
            Command::Assign { loc, name, expr, .. } => {
                let value = self.eval(expr, hctx.as_ref());
                let is_global = self.program.is_global(name)
                    || self.extra_globals.contains(name)
                    || *name == self.program.param;
                let scope = if is_global { Scope::Global } else { Scope::Local };
                match (scope, hctx.as_mut()) {
                    (Scope::Global, _) => {
                        let write = MemWrite { name: name.clone(), value };
                        let out = step(
                            &self.function,
                            &Action::LocalStep(write),
                            self.variant,
                            &mut self.eids,
                        )?;
                        self.function = out.state;
                        let snapshot = self.memory_snapshot();
                        self.emit_row(&loc.to_string(), command_text(cmd), snapshot, String::new());
                    }
                    (Scope::Local, Some(h)) => {
                        h.locals.insert(name.clone(), value);
                        self.emit_row(&loc.to_string(), command_text(cmd), Vec::new(), String::new());
                    }
                    (Scope::Local, None) => {
                        self.locals.insert(name.clone(), value);
                        self.emit_row(&loc.to_string(), command_text(cmd), Vec::new(), String::new());
                    }
                }
                Ok(())
            }
            Command::StartAsync { loc, target, op } => {
                let parent = self.turn_parent(hctx.as_ref());
                let node = self.add_node(
                    self.current_event(),
                    Some(*loc),
                    op.op.label().to_string(),
                    vec![(parent, EdgeKind::Fork)],
                    NodeKind::Root,
                );
                self.bind_promise(target, node, hctx);
                self.start_op(node, op, hctx.as_ref())?;
                Ok(())
            }
            Command::Chain { loc, kind, source, target, handler } => {
                let source_node = self.lookup_promise(source, *loc, hctx.as_ref())?;
                let edge = match kind {
                    ReactionKind::Then => EdgeKind::OnFulfill,
                    ReactionKind::Catch => EdgeKind::OnReject,
                    ReactionKind::Finally => EdgeKind::OnFinally,
                };
                let desc = reaction_desc(*kind, handler);
                let node = self.add_node(
                    self.current_event(),
                    Some(*loc),
                    desc,
                    vec![(source_node, edge)],
                    NodeKind::Reaction { kind: *kind, handler: handler.clone() },
                );
                self.nodes[source_node].dependents.push(node);
                self.bind_promise(target, node, hctx);
                // Chaining onto an already-settled promise runs (or passes
                // through) on a later turn.
                if let Some(settled) = self.nodes[source_node].settled.clone() {
                    let kind = *kind;
                    let activates = match kind {
                        ReactionKind::Then => settled.settlement.is_fulfilled(),
                        ReactionKind::Catch => !settled.settlement.is_fulfilled(),
                        ReactionKind::Finally => true,
                    };
                    if activates {
                        let seq = self.fresh_seq();
                        self.pending.push(Pending {
                            seq,
                            due: self.clock + 1,
                            issued_at: self.clock,
                            deadline: None,
                            poisoned: false,
                            kind: PendingKind::RunReaction {
                                node,
                                settlement: settled.settlement,
                            },
                        });
                    } else {
                        self.pass_through(node, settled.settlement)?;
                    }
                }
                Ok(())
            }
            Command::Combine { loc, kind, sources, target } => {
                let mut members = Vec::new();
                for s in sources {
                    members.push(self.lookup_promise(s, *loc, hctx.as_ref())?);
                }
                let node = self.add_node(
                    self.current_event(),
                    Some(*loc),
                    kind.to_string(),
                    members.iter().map(|m| (*m, EdgeKind::CombinatorMember)).collect(),
                    NodeKind::Combinator { kind: *kind, members: members.clone() },
                );
                for m in &members {
                    self.nodes[*m].member_of.push(node);
                }
                self.bind_promise(target, node, hctx);
                let pid = self.materialize(node);
                let out = step(
                    &self.function,
                    &Action::StartAsync(pid),
                    self.variant,
                    &mut self.eids,
                )?;
                self.function = out.state;
                let row = self.emit_row(
                    &loc.to_string(),
                    command_text(cmd),
                    Vec::new(),
                    "combine started".to_string(),
                );
                self.nodes[node].started = Some((pid, row));
                self.recompute_combinator(node);
                Ok(())
            }
            Command::Respond { loc, arg } => match arg {
                RespondArg::Promise(name) => {
                    let node = self.lookup_promise(name, *loc, hctx.as_ref())?;
                    self.respond.bound_node = Some(node);
                    self.respond.loc = Some(self.nodes[node].site.unwrap_or(*loc));
                    self.nodes[node].respond_bound = true;
                    if matches!(&self.nodes[node].kind, NodeKind::Reaction { handler, .. }
                        if matches!(handler.result, Some(HandlerResult::Value(_))))
                    {
                        self.nodes[node].desc = "produce response".to_string();
                    }
                    if let Some(settled) = self.nodes[node].settled.clone() {
                        self.respond.ready = Some(settled.settlement.value().clone());
                        self.respond.ready_is_error = !settled.settlement.is_fulfilled();
                    }
                    Ok(())
                }
                RespondArg::Value(expr) => {
                    let value = self.eval(expr, hctx.as_ref());
                    self.respond.ready = Some(value.clone());
                    self.respond.ready_is_error = value.is_error();
                    self.respond.loc = Some(*loc);
                    self.emit_row(
                        &loc.to_string(),
                        command_text(cmd),
                        Vec::new(),
                        "response ready".to_string(),
                    );
                    self.try_respond(true)?;
                    Ok(())
                }
            },
            Command::End { loc } => {
                self.end_requested = true;
                self.end_loc = Some(*loc);
                self.emit_row(&loc.to_string(), "end()".to_string(), Vec::new(), "end requested".into());
                self.try_end(true)?;
                Ok(())
            }
        }
    }

    // ---- promises ----------------------------------------------------------

    fn start_op(
        &mut self,
        node: usize,
        spec: &OpSpec,
        hctx: Option<&HandlerCtx>,
    ) -> Result<(), EngineError> {
        let event = self.current_event();
        let (settlement, effect) = self.op_outcome(&spec.op, hctx, event);
        let pid = self.materialize(node);
        let out = step(&self.function, &Action::StartAsync(pid), self.variant, &mut self.eids)?;
        self.function = out.state;

        let latency = spec.latency.unwrap_or_else(|| self.store.default_latency(&spec.op));
        let delay = if self.chooser.honors_latency() {
            self.chooser.sample_latency(latency.min, latency.max)
        } else {
            1
        };
        let seq = self.fresh_seq();
        self.pending.push(Pending {
            seq,
            due: self.clock + delay,
            issued_at: self.clock,
            deadline: spec.deadline,
            poisoned: false,
            kind: PendingKind::OpDone { node, settlement, effect },
        });

        let command = self.op_start_text(&spec.op, hctx);
        let comment = op_start_comment(&spec.op);
        let row = self.emit_row(
            &self.nodes[node].site.unwrap().to_string(),
            command,
            Vec::new(),
            comment.to_string(),
        );
        self.nodes[node].started = Some((pid, row));
        Ok(())
    }

    /// Computes what an operation will settle to. Reads capture the store at
    /// issue time; writes apply their effect when the completion fires.
    fn op_outcome(
        &self,
        op: &AsyncOp,
        hctx: Option<&HandlerCtx>,
        event: EventId,
    ) -> (Settlement, Option<(String, Value)>) {
        match op {
            AsyncOp::DbConnect { service } => (
                Settlement::Fulfilled(
                    Value::record(vec![("service".to_string(), Value::str(service.clone()))])
                        .tainted(event),
                ),
                None,
            ),
            AsyncOp::DbRead { conn, key } => {
                if let Err(e) = self.connection_value(conn, hctx, event) {
                    return (Settlement::Rejected(e), None);
                }
                (Settlement::Fulfilled(self.store.read(key).tainted(event)), None)
            }
            AsyncOp::DbWrite { conn, value, key } => {
                if let Err(e) = self.connection_value(conn, hctx, event) {
                    return (Settlement::Rejected(e), None);
                }
                let v = self.eval(value, hctx);
                (Settlement::Fulfilled(v.clone()), Some((key.clone(), v)))
            }
            AsyncOp::Sleep { .. } => (Settlement::Fulfilled(Value::undefined(event)), None),
            AsyncOp::FailWith { message } => {
                (Settlement::Rejected(Value::error(message.clone(), event)), None)
            }
        }
    }

    fn connection_value(
        &self,
        conn: &str,
        hctx: Option<&HandlerCtx>,
        event: EventId,
    ) -> Result<Value, Value> {
        let v = self.eval(&Expr::Var(conn.to_string()), hctx);
        match &v.kind {
            ValueKind::Record(fields) if fields.contains_key("service") => Ok(v),
            _ => Err(Value::error(
                format!("`{conn}` is not a database connection"),
                event,
            )),
        }
    }

    fn fire_completion(&mut self, p: Pending) -> Result<(), EngineError> {
        match p.kind {
            PendingKind::OpDone { node, mut settlement, effect } => {
                let mut comment = self.op_done_comment(node, &settlement);
                if p.poisoned {
                    settlement = Settlement::Rejected(Value::error(
                        "peer timeout",
                        self.current_event(),
                    ));
                    comment = "failed (peer timed out during suspension)".to_string();
                } else if let Some((key, value)) = effect {
                    let context = self.current_event();
                    let write_step = self.row_count;
                    self.store.write(&key, value.clone());
                    self.db_writes.push(DbWriteRecord {
                        step: write_step,
                        key,
                        value,
                        context: context.0,
                    });
                }
                let command = self.op_done_text(node);
                self.resolve_and_row(node, settlement, command, comment)
            }
            PendingKind::PureDone { node, settlement } => {
                let command = format!("({})", settlement.value());
                let comment = if self.nodes[node].respond_bound {
                    "response ready".to_string()
                } else {
                    "handler finished".to_string()
                };
                self.resolve_and_row(node, settlement, command, comment)
            }
            PendingKind::CombineDone { node, settlement } => {
                let command = format!("{}(...)", self.nodes[node].desc);
                self.resolve_and_row(node, settlement, command, "combine settled".to_string())
            }
            PendingKind::RunReaction { node, settlement } => {
                self.run_reaction(node, &settlement)
            }
        }
    }

    /// Resolves a started promise: removes it from the unresolved set, emits
    /// the resolve row, then runs the settlement cascade and, if this node
    /// backs the response, the respond action.
    fn resolve_and_row(
        &mut self,
        node: usize,
        settlement: Settlement,
        command: String,
        comment: String,
    ) -> Result<(), EngineError> {
        let (pid, _) = self.nodes[node].started.expect("resolving a started promise");
        let out = step(
            &self.function,
            &Action::Resolve(pid, settlement.clone()),
            self.variant,
            &mut self.eids,
        )?;
        self.function = out.state;
        self.records
            .get_mut(&pid)
            .expect("record exists")
            .settle(settlement.clone())?;
        let loc = self.nodes[node].site.unwrap().to_string();
        let row = self.emit_row(&loc, command, Vec::new(), comment);
        self.nodes[node].settled = Some(SettledNode {
            settlement: settlement.clone(),
            step: Some(row),
            during: self.function.status.current_event(),
        });
        self.cascade(node, &settlement)?;
        if self.nodes[node].respond_bound {
            self.try_respond(true)?;
        }
        self.try_end(false)?;
        Ok(())
    }

    /// Propagates a settlement to dependents: activated reactions run their
    /// handler turn now; skipped reactions pass the settlement through
    /// silently; combinators recompute.
    fn cascade(&mut self, node: usize, settlement: &Settlement) -> Result<(), EngineError> {
        if self.nodes[node].respond_bound {
            self.respond.ready = Some(settlement.value().clone());
            self.respond.ready_is_error = !settlement.is_fulfilled();
        }
        let deps = self.nodes[node].dependents.clone();
        for d in deps {
            if self.nodes[d].started.is_some() || self.nodes[d].settled.is_some() {
                continue;
            }
            let kind = match &self.nodes[d].kind {
                NodeKind::Reaction { kind, .. } => *kind,
                _ => unreachable!("dependents are reactions"),
            };
            let activates = match kind {
                ReactionKind::Then => settlement.is_fulfilled(),
                ReactionKind::Catch => !settlement.is_fulfilled(),
                ReactionKind::Finally => true,
            };
            if activates {
                self.run_reaction(d, settlement)?;
            } else {
                self.pass_through(d, settlement.clone())?;
            }
        }
        let combos = self.nodes[node].member_of.clone();
        for c in combos {
            self.recompute_combinator(c);
        }
        if !settlement.is_fulfilled()
            && self.nodes[node].dependents.is_empty()
            && self.nodes[node].member_of.is_empty()
            && !self.nodes[node].respond_bound
        {
            self.diagnostics.push(format!(
                "unhandled rejection at {}: {}",
                self.nodes[node].label(),
                settlement.value()
            ));
        }
        Ok(())
    }

    /// A skipped reaction settles with its source's settlement, without a
    /// promise ever starting and without a trace row.
    fn pass_through(&mut self, node: usize, settlement: Settlement) -> Result<(), EngineError> {
        self.nodes[node].settled = Some(SettledNode {
            settlement: settlement.clone(),
            step: None,
            during: self.function.status.current_event(),
        });
        if self.nodes[node].respond_bound {
            self.respond.ready = Some(settlement.value().clone());
            self.respond.ready_is_error = !settlement.is_fulfilled();
        }
        self.cascade(node, &settlement)
    }

    /// Runs one handler turn: start the reaction's promise, execute the
    /// body, and queue the result.
    fn run_reaction(&mut self, node: usize, source: &Settlement) -> Result<(), EngineError> {
        let (kind, handler) = match &self.nodes[node].kind {
            NodeKind::Reaction { kind, handler, .. } => (*kind, handler.clone()),
            _ => unreachable!("reactions only"),
        };
        let pid = self.materialize(node);
        let out = step(&self.function, &Action::StartAsync(pid), self.variant, &mut self.eids)?;
        self.function = out.state;

        let mut hctx = HandlerCtx { node: Some(node), ..HandlerCtx::default() };
        if let Some(param) = &handler.param {
            hctx.locals.insert(param.clone(), source.value().clone());
        }

        let loc = self.nodes[node].site.unwrap().to_string();
        let single_op = handler.body.is_empty()
            && matches!(handler.result, Some(HandlerResult::Op(_)));
        let row = if single_op {
            let HandlerResult::Op(spec) = handler.result.as_ref().unwrap() else {
                unreachable!()
            };
            let command = self.op_start_text(&spec.op, Some(&hctx));
            self.emit_row(&loc, command, Vec::new(), op_start_comment(&spec.op).to_string())
        } else {
            let comment = if self.nodes[node].respond_bound {
                "response started"
            } else {
                "handler started"
            };
            self.emit_row(&loc, handler_text(&handler), Vec::new(), comment.to_string())
        };
        self.nodes[node].started = Some((pid, row));

        let mut hctx_opt = Some(hctx);
        for cmd in &handler.body {
            self.exec_command(cmd, &mut hctx_opt)?;
        }
        let hctx = hctx_opt.unwrap();

        match &handler.result {
            Some(HandlerResult::Op(spec)) => {
                let event = self.current_event();
                let (settlement, effect) = self.op_outcome(&spec.op, Some(&hctx), event);
                let latency =
                    spec.latency.unwrap_or_else(|| self.store.default_latency(&spec.op));
                let delay = if self.chooser.honors_latency() {
                    self.chooser.sample_latency(latency.min, latency.max)
                } else {
                    1
                };
                if !single_op {
                    let command = self.op_start_text(&spec.op, Some(&hctx));
                    self.emit_row(&loc, command, Vec::new(), op_start_comment(&spec.op).to_string());
                }
                let seq = self.fresh_seq();
                self.pending.push(Pending {
                    seq,
                    due: self.clock + delay,
                    issued_at: self.clock,
                    deadline: spec.deadline,
                    poisoned: false,
                    kind: PendingKind::OpDone { node, settlement, effect },
                });
            }
            Some(HandlerResult::Value(expr)) => {
                let v = self.eval(expr, Some(&hctx));
                let seq = self.fresh_seq();
                self.pending.push(Pending {
                    seq,
                    due: self.clock + 1,
                    issued_at: self.clock,
                    deadline: None,
                    poisoned: false,
                    kind: PendingKind::PureDone { node, settlement: Settlement::Fulfilled(v) },
                });
            }
            None => {
                let settlement = match kind {
                    // finally passes the source settlement through.
                    ReactionKind::Finally => source.clone(),
                    _ => Settlement::Fulfilled(Value::undefined(self.current_event())),
                };
                let seq = self.fresh_seq();
                self.pending.push(Pending {
                    seq,
                    due: self.clock + 1,
                    issued_at: self.clock,
                    deadline: None,
                    poisoned: false,
                    kind: PendingKind::PureDone { node, settlement },
                });
            }
        }
        Ok(())
    }

    fn recompute_combinator(&mut self, node: usize) {
        if self.nodes[node].combine_queued || self.nodes[node].settled.is_some() {
            return;
        }
        let (kind, members) = match &self.nodes[node].kind {
            NodeKind::Combinator { kind, members } => (*kind, members.clone()),
            _ => unreachable!("combinators only"),
        };
        let states: Vec<Option<Settlement>> = members
            .iter()
            .map(|m| self.nodes[*m].settled.as_ref().map(|s| s.settlement.clone()))
            .collect();
        if let Some(settlement) = crate::semantics::combine_settlement(kind, &states) {
            self.nodes[node].combine_queued = true;
            let seq = self.fresh_seq();
            self.pending.push(Pending {
                seq,
                due: self.clock + 1,
                issued_at: self.clock,
                deadline: None,
                poisoned: false,
                kind: PendingKind::CombineDone { node, settlement },
            });
        }
    }

    // ---- helpers -----------------------------------------------------------

    fn add_node(
        &mut self,
        event: EventId,
        site: Option<Loc>,
        desc: String,
        parents: Vec<(usize, EdgeKind)>,
        kind: NodeKind,
    ) -> usize {
        self.nodes.push(Node {
            event,
            site,
            desc,
            parents,
            kind,
            dependents: Vec::new(),
            member_of: Vec::new(),
            started: None,
            settled: None,
            respond_bound: false,
            combine_queued: false,
        });
        self.nodes.len() - 1
    }

    fn materialize(&mut self, node: usize) -> PromiseId {
        self.next_pid += 1;
        let pid = PromiseId(self.next_pid);
        self.records.insert(
            pid,
            PromiseRecord {
                id: pid,
                origin: self.current_event(),
                site: self.nodes[node].site.expect("materialized nodes have sites"),
                desc: self.nodes[node].desc.clone(),
                state: PromiseState::Pending,
                node,
            },
        );
        pid
    }

    fn bind_promise(&mut self, name: &str, node: usize, hctx: &mut Option<HandlerCtx>) {
        match hctx {
            Some(h) => {
                h.bindings.insert(name.to_string(), node);
            }
            None => {
                self.bindings.insert(name.to_string(), node);
            }
        }
    }

    fn lookup_promise(
        &self,
        name: &str,
        loc: Loc,
        hctx: Option<&HandlerCtx>,
    ) -> Result<usize, EngineError> {
        if let Some(h) = hctx {
            if let Some(n) = h.bindings.get(name) {
                return Ok(*n);
            }
        }
        self.bindings
            .get(name)
            .copied()
            .ok_or_else(|| EngineError::UnboundPromise { name: name.to_string(), loc: loc.0 })
    }

    fn turn_parent(&self, hctx: Option<&HandlerCtx>) -> usize {
        hctx.and_then(|h| h.node)
            .or(self.init_node)
            .expect("commands run inside an event")
    }

    fn current_event(&self) -> EventId {
        self.function
            .status
            .current_event()
            .expect("commands run while an event is being processed")
    }

    fn eval(&self, expr: &Expr, hctx: Option<&HandlerCtx>) -> Value {
        eval_expr(
            expr,
            EvalScope {
                memory: &self.function.memory,
                locals: &self.locals,
                handler_locals: hctx.map(|h| &h.locals),
            },
            self.current_event(),
        )
    }

    fn fresh_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    fn memory_snapshot(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for g in &self.program.globals {
            let rendered = self
                .function
                .memory
                .get(g)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "undefined".to_string());
            out.push((g.clone(), rendered));
        }
        for g in &self.extra_globals {
            if !self.program.is_global(g) {
                let rendered = self
                    .function
                    .memory
                    .get(g)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "undefined".to_string());
                out.push((g.clone(), rendered));
            }
        }
        let param = &self.program.param;
        let rendered = self
            .function
            .memory
            .get(param)
            .map(|v| v.to_string())
            .unwrap_or_else(|| "undefined".to_string());
        out.push((param.clone(), rendered));
        out
    }

    fn unresolved_rendered(&self) -> Vec<String> {
        self.function
            .unresolved
            .iter()
            .map(|pid| {
                let r = &self.records[pid];
                format!("{} ({})", r.site.site(), r.desc)
            })
            .collect()
    }

    fn emit_row(
        &mut self,
        loc: &str,
        command: String,
        state: Vec<(String, String)>,
        comment: String,
    ) -> usize {
        let index = self.row_count;
        self.row_count += 1;
        if !self.lite {
            self.rows.push(TraceStep {
                index,
                loc: loc.to_string(),
                command,
                state,
                unresolved: self.unresolved_rendered(),
                comment,
            });
        }
        index
    }

    fn set_last_comment(&mut self, comment: &str) {
        if let Some(last) = self.rows.last_mut() {
            last.comment = comment.to_string();
        }
    }

    fn op_start_text(&self, op: &AsyncOp, hctx: Option<&HandlerCtx>) -> String {
        match op {
            AsyncOp::DbConnect { .. } => "db.connect(...)".to_string(),
            AsyncOp::DbRead { .. } => "con.read(...)".to_string(),
            AsyncOp::DbWrite { value, .. } => {
                format!("con.write({})", self.eval(value, hctx))
            }
            AsyncOp::Sleep { ticks } => format!("sleep({ticks})"),
            AsyncOp::FailWith { .. } => "fail(...)".to_string(),
        }
    }

    fn op_done_text(&self, node: usize) -> String {
        match self.nodes[node].desc.as_str() {
            "db.connect" => "db.connect(...)".to_string(),
            "con.read" => "con.read(...)".to_string(),
            "con.write" => "con.write(...)".to_string(),
            "sleep" => "sleep(...)".to_string(),
            other => format!("{other}(...)"),
        }
    }

    fn op_done_comment(&self, node: usize, settlement: &Settlement) -> String {
        if !settlement.is_fulfilled() {
            return "failed".to_string();
        }
        match self.nodes[node].desc.as_str() {
            "db.connect" => "connection established".to_string(),
            "con.read" => "read finished".to_string(),
            "con.write" => "write finished".to_string(),
            "sleep" => "sleep finished".to_string(),
            _ => "finished".to_string(),
        }
    }
}

fn program_has_respond(body: &[Command]) -> bool {
    body.iter().any(|c| match c {
        Command::Respond { .. } => true,
        Command::Chain { handler, .. } => program_has_respond(&handler.body),
        _ => false,
    })
}

fn reaction_desc(kind: ReactionKind, handler: &Handler) -> String {
    if handler.body.iter().any(|c| matches!(c, Command::End { .. })) {
        return "end()".to_string();
    }
    match &handler.result {
        Some(HandlerResult::Op(spec)) => spec.op.label().to_string(),
        _ => format!("{kind}()"),
    }
}

fn op_start_comment(op: &AsyncOp) -> &'static str {
    match op {
        AsyncOp::DbConnect { .. } => "connection started",
        AsyncOp::DbRead { .. } => "read started",
        AsyncOp::DbWrite { .. } => "write started",
        AsyncOp::Sleep { .. } => "sleep started",
        AsyncOp::FailWith { .. } => "fail started",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveStop {
    Condition,
    Terminal,
    DeadlineExceeded,
}

/// Runs `program` on `events` under `variant` with the given schedule and
/// returns the trace.
pub fn run(
    program: &Program,
    events: &[Value],
    variant: SemanticsVariant,
    source: &ScheduleSource,
) -> Result<ExecutionTrace, EngineError> {
    let mut sim = Sim::new(program, events, variant, source)?;
    sim.run_to_completion()?;
    let _ = residual_execution(&sim.function);
    Ok(sim.into_trace())
}

/// Re-runs a trace's program under its recorded schedule and checks the
/// result is identical. Divergence means the engine's rules changed since
/// the trace was recorded.
pub fn replay(trace: &ExecutionTrace) -> Result<ExecutionTrace, EngineError> {
    let program = crate::program::parse_program(&trace.program_source, &trace.program_name)
        .map_err(|e| EngineError::InvalidProgram(e.to_string()))?;
    let variant: SemanticsVariant = trace
        .variant
        .parse()
        .map_err(EngineError::InvalidProgram)?;
    let source = ScheduleSource::scripted(trace.schedule.clone());
    let new_trace = run(&program, &trace.events, variant, &source)?;
    if new_trace.canonical_json() != trace.canonical_json() {
        let row = trace
            .steps
            .iter()
            .zip(new_trace.steps.iter())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| trace.steps.len().min(new_trace.steps.len()));
        return Err(EngineError::ReplayDivergence { row });
    }
    Ok(new_trace)
}
