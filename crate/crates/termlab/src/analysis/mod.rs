//! Trace analysis: violation detectors and promise graphs.
//!
//! Detectors work on finished traces only, independently of engine
//! internals:
//!
//! * **broken promises** — promises still unresolved when the run ends;
//! * **cross-event interference** — a promise started during one event
//!   resolving during another;
//! * **stale-state writes** — a store write whose value mixes provenance
//!   from an event other than the one it resolved under;
//! * **response races** — effectful operations with no causal path to the
//!   event's termination marker that had not resolved when the marker fired.
//!
//! Under the decoupled model the termination marker is the `end()` call;
//! responding before a write resolves is then the intended behaviour and is
//! reported as an informational note, not a violation.

mod graph;

pub use graph::{build_graph, export_dot, GraphEdge, GraphNode, PromiseGraph, UnknownNode};

use crate::engine::ExecutionTrace;
use crate::semantics::SemanticsVariant;
use crate::value::Value;
use serde::Serialize;
use std::collections::BTreeMap;

pub const VERDICT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct BrokenPromise {
    pub site: String,
    pub desc: String,
    /// Event during which the promise started.
    pub origin: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Interference {
    pub site: String,
    pub origin: u64,
    pub observed_during: u64,
    pub step: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StaleWrite {
    pub key: String,
    pub value: Value,
    pub provenance: Vec<u64>,
    pub context: u64,
    pub step: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RaceReport {
    /// The effectful promise (a write, or a connect feeding one).
    pub effectful: String,
    /// The termination marker it races: the response or the end call.
    pub marker: String,
    pub event: u64,
    pub note: String,
}

/// The analysis outcome for one trace. `is_empty` ignores `diagnostics`:
/// informational notes are not violations.
#[derive(Debug, Clone, Serialize, Default)]
pub struct Verdict {
    pub schema_version: u32,
    pub broken_promises: Vec<BrokenPromise>,
    pub residual: Vec<String>,
    pub interference: Vec<Interference>,
    pub stale_writes: Vec<StaleWrite>,
    pub races: Vec<RaceReport>,
    pub diagnostics: Vec<String>,
}

impl Verdict {
    pub fn is_empty(&self) -> bool {
        self.broken_promises.is_empty()
            && self.interference.is_empty()
            && self.stale_writes.is_empty()
            && self.races.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.is_empty() {
            return "clean".to_string();
        }
        let mut parts = Vec::new();
        if !self.broken_promises.is_empty() {
            let sites: Vec<&str> =
                self.broken_promises.iter().map(|b| b.site.as_str()).collect();
            parts.push(format!("broken promises: {}", sites.join(", ")));
        }
        if !self.interference.is_empty() {
            let sites: Vec<&str> = self.interference.iter().map(|i| i.site.as_str()).collect();
            parts.push(format!("cross-event interference: {}", sites.join(", ")));
        }
        if !self.stale_writes.is_empty() {
            let keys: Vec<String> = self
                .stale_writes
                .iter()
                .map(|s| format!("{} = {}", s.key, s.value))
                .collect();
            parts.push(format!("stale writes: {}", keys.join(", ")));
        }
        if !self.races.is_empty() {
            let pairs: Vec<String> = self
                .races
                .iter()
                .map(|r| format!("{} vs {}", r.effectful, r.marker))
                .collect();
            parts.push(format!("lost races: {}", pairs.join(", ")));
        }
        parts.join("; ")
    }
}

/// Runs every detector over `trace`.
pub fn detect(trace: &ExecutionTrace, variant: SemanticsVariant) -> Verdict {
    let graph = build_graph(trace);
    let mut verdict = Verdict {
        schema_version: VERDICT_SCHEMA_VERSION,
        residual: trace.residual.clone(),
        diagnostics: trace.diagnostics.clone(),
        ..Verdict::default()
    };

    // Broken promises: started but never settled by the end of the run.
    for n in &trace.promise_nodes {
        if n.started_step.is_some() && n.settled.is_none() {
            verdict.broken_promises.push(BrokenPromise {
                site: n.label.clone(),
                desc: n.desc.clone(),
                origin: n.started_event.unwrap_or(n.event),
            });
        }
    }

    // Cross-event interference: resolution during an event the promise was
    // not started under.
    for n in &trace.promise_nodes {
        let (Some(origin), Some(settled)) = (n.started_event, &n.settled) else {
            continue;
        };
        if let Some(during) = settled.during {
            if during != origin {
                verdict.interference.push(Interference {
                    site: n.label.clone(),
                    origin,
                    observed_during: during,
                    step: settled.step,
                });
            }
        }
    }

    // Stale writes: value provenance mixes another event into this write.
    for w in &trace.db_writes {
        let foreign: Vec<u64> = w
            .value
            .provenance
            .iter()
            .map(|e| e.0)
            .filter(|e| *e != w.context)
            .collect();
        if !foreign.is_empty() {
            verdict.stale_writes.push(StaleWrite {
                key: w.key.clone(),
                value: w.value.clone(),
                provenance: w.value.provenance.iter().map(|e| e.0).collect(),
                context: w.context,
                step: w.step,
            });
        }
    }

    // Races against the termination marker.
    detect_races(trace, variant, &graph, &mut verdict);

    verdict
}

fn detect_races(
    trace: &ExecutionTrace,
    variant: SemanticsVariant,
    graph: &PromiseGraph,
    verdict: &mut Verdict,
) {
    let responses: BTreeMap<u64, usize> =
        trace.responses.iter().map(|r| (r.event, r.step)).collect();
    let ends: BTreeMap<u64, usize> = trace.ended_events.iter().cloned().collect();

    // Key and step of a node's settlement, by graph key.
    let settle_steps: BTreeMap<&str, Option<usize>> = graph
        .nodes
        .iter()
        .zip(&trace.promise_nodes)
        .map(|(g, n)| (g.key.as_str(), n.settled.as_ref().map(|s| s.step).unwrap_or(None)))
        .collect();
    let settled_at_all: BTreeMap<&str, bool> = graph
        .nodes
        .iter()
        .zip(&trace.promise_nodes)
        .map(|(g, n)| (g.key.as_str(), n.settled.is_some()))
        .collect();

    for (event, _) in &trace.events_started {
        let respond_marker = marker_key(trace, graph, *event, MarkerKind::Respond);
        let end_marker = marker_key(trace, graph, *event, MarkerKind::End);
        let (marker_key_str, marker_step) = match variant {
            SemanticsVariant::DecoupledEnd => (end_marker.clone(), ends.get(event).copied()),
            _ => (respond_marker.clone(), responses.get(event).copied()),
        };
        let Some(marker_step) = marker_step else {
            // The event never terminated; there is no termination to race.
            continue;
        };

        for effectful in graph.effectful_nodes(*event) {
            let path = marker_key_str
                .as_ref()
                .map(|m| graph.has_path(&effectful, m).unwrap_or(false))
                .unwrap_or(false);
            if path {
                continue;
            }
            let lost = match settle_steps.get(effectful.as_str()) {
                Some(Some(step)) => *step > marker_step,
                // Settled without a row (pass-through) counts as resolved.
                Some(None) => !settled_at_all.get(effectful.as_str()).copied().unwrap_or(false),
                None => true,
            };
            if lost {
                verdict.races.push(RaceReport {
                    effectful: effectful.clone(),
                    marker: marker_key_str.clone().unwrap_or_else(|| "(response)".into()),
                    event: *event,
                    note: "no causal path to the termination marker; \
                           unresolved when termination fired"
                        .to_string(),
                });
            }
        }

        // Under the decoupled model the response still races effectful work,
        // but that is the intended behaviour; report it as a note.
        if variant == SemanticsVariant::DecoupledEnd {
            if let (Some(respond_node), Some(respond_step)) =
                (respond_marker.as_ref(), responses.get(event))
            {
                for effectful in graph.effectful_nodes(*event) {
                    let path = graph.has_path(&effectful, respond_node).unwrap_or(false);
                    if path {
                        continue;
                    }
                    let after = match settle_steps.get(effectful.as_str()) {
                        Some(Some(step)) => *step > *respond_step,
                        _ => false,
                    };
                    if after {
                        verdict.diagnostics.push(format!(
                            "response for e{event} was emitted before {effectful} resolved \
                             (intended: termination is decoupled from the response)"
                        ));
                    }
                }
            }
        }
    }
}

enum MarkerKind {
    Respond,
    End,
}

fn marker_key(
    trace: &ExecutionTrace,
    graph: &PromiseGraph,
    event: u64,
    kind: MarkerKind,
) -> Option<String> {
    let idx = trace.promise_nodes.iter().position(|n| {
        n.event == event
            && match kind {
                MarkerKind::Respond => n.respond_bound,
                MarkerKind::End => n.desc == "end()",
            }
    })?;
    Some(graph.nodes[idx].key.clone())
}
