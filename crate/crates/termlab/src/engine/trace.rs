//! Execution traces: the table-shaped record of one run.
//!
//! A trace is self-contained — it embeds the program source, the events, and
//! the resolved schedule — so it can be replayed bit-exactly and analyzed
//! without the engine that produced it.

use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// One table row: `# | loc | command | state | unresolved promises | comment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub loc: String,
    pub command: String,
    /// Memory snapshot (globals and the event binding) on rows that changed
    /// memory; empty otherwise.
    pub state: Vec<(String, String)>,
    /// Unresolved promises after this row, rendered as `p12 (db.connect)`.
    pub unresolved: Vec<String>,
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    /// Id of the event this response answers.
    pub event: u64,
    pub value: Value,
    pub step: usize,
    pub is_error: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    OnFulfill,
    OnReject,
    OnFinally,
    CombinatorMember,
    Fork,
}

impl EdgeKind {
    pub fn label(&self) -> &'static str {
        match self {
            EdgeKind::OnFulfill => "onFulfill",
            EdgeKind::OnReject => "onReject",
            EdgeKind::OnFinally => "onFinally",
            EdgeKind::CombinatorMember => "member",
            EdgeKind::Fork => "fork",
        }
    }
}

/// One promise-graph node as recorded in a trace. Nodes exist for every
/// promise site reached by registration, whether or not the promise ever
/// started at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromiseNode {
    pub node: usize,
    /// Event during which the node was created (its origin).
    pub event: u64,
    /// Site label, e.g. `p12`, or `p_init` for the per-event root.
    pub label: String,
    /// Operation description, e.g. `db.connect` or `produce response`.
    pub desc: String,
    /// Incoming edges: (parent node index, edge kind).
    pub parents: Vec<(usize, EdgeKind)>,
    /// Row at which the promise started, if it ever did.
    pub started_step: Option<usize>,
    /// Event during which the promise started. Under environment reuse this
    /// can differ from `event`: a chain registered by one event may run
    /// during a later one.
    pub started_event: Option<u64>,
    /// Settlement outcome (`fulfilled` / `rejected`), row, and the event
    /// during which it settled. Pass-through settlements have no row.
    pub settled: Option<SettledInfo>,
    pub respond_bound: bool,
    /// Handler bodies elide to a value immediately: true for mid-chain
    /// value transformers that a rendering may splice out.
    pub intermediate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettledInfo {
    pub outcome: String,
    pub step: Option<usize>,
    /// Event being processed when the settlement happened, if any.
    pub during: Option<u64>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbWriteRecord {
    pub step: usize,
    pub key: String,
    pub value: Value,
    /// Event being processed when the write resolved.
    pub context: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub schema_version: u32,
    pub program_name: String,
    pub program_source: String,
    pub variant: String,
    pub events: Vec<Value>,
    pub steps: Vec<TraceStep>,
    pub responses: Vec<ResponseRecord>,
    /// Resolved schedule: the choice made at every multi-option point.
    /// Replaying it as a scripted schedule reproduces this trace exactly.
    pub schedule: Vec<usize>,
    pub promise_nodes: Vec<PromiseNode>,
    pub events_started: Vec<(u64, usize)>,
    pub ended_events: Vec<(u64, usize)>,
    pub db_writes: Vec<DbWriteRecord>,
    pub db_final: BTreeMap<String, Value>,
    /// Function status at the end of the run: `f`, `d`, or an event id.
    pub final_status: String,
    /// Unresolved promises at the end of the run, e.g. `p12 (db.connect)`.
    pub residual: Vec<String>,
    pub diagnostics: Vec<String>,
    /// Fingerprint of the final world state.
    pub digest: String,
}

impl ExecutionTrace {
    /// Canonical JSON bytes of the whole trace.
    pub fn canonical_json(&self) -> String {
        crate::canonical::to_canonical_json(self)
    }

    /// Row index of the response for `event`, if one was emitted.
    pub fn response_step(&self, event: u64) -> Option<usize> {
        self.responses.iter().find(|r| r.event == event).map(|r| r.step)
    }

    /// First row index at which a promise at `site` (e.g. "p13") settled
    /// during `event`'s processing, if any.
    pub fn settle_step(&self, event: u64, site: &str) -> Option<usize> {
        self.promise_nodes
            .iter()
            .filter(|n| n.event == event && n.label == site)
            .find_map(|n| n.settled.as_ref().and_then(|s| s.step))
    }
}
