//! Promise graphs: the causal structure of one execution.
//!
//! Nodes are the promises a run created (plus a distinguished `p_init` per
//! event); edges are causal relations — handler chaining, combinator
//! membership, and the fork from the start of an event to each independent
//! chain. The graph is built from a trace's promise registry, so two
//! schedules of the same program produce the same graph whenever their
//! registrations agree.

use crate::engine::{EdgeKind, ExecutionTrace};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Serialize)]
pub struct GraphNode {
    /// Stable key: `p12` for event 1, `e2/p12` for later events.
    pub key: String,
    /// Display label: the site, e.g. `p12`.
    pub label: String,
    pub desc: String,
    pub event: u64,
    /// True for mid-chain value transformers that elision may splice out.
    pub intermediate: bool,
    /// True if the promise settled during the run this graph came from.
    pub settled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct PromiseGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown node `{0}`")]
pub struct UnknownNode(pub String);

fn node_key(event_ordinal: usize, event: u64, label: &str) -> String {
    if event_ordinal == 0 {
        label.to_string()
    } else {
        format!("e{event}/{label}")
    }
}

/// Builds the promise graph of a trace.
pub fn build_graph(trace: &ExecutionTrace) -> PromiseGraph {
    let mut event_order: Vec<u64> = Vec::new();
    for n in &trace.promise_nodes {
        if !event_order.contains(&n.event) {
            event_order.push(n.event);
        }
    }
    let ordinal = |event: u64| event_order.iter().position(|e| *e == event).unwrap_or(0);

    let mut keys: Vec<String> = Vec::with_capacity(trace.promise_nodes.len());
    for n in &trace.promise_nodes {
        keys.push(node_key(ordinal(n.event), n.event, &n.label));
    }

    let mut graph = PromiseGraph::default();
    for (i, n) in trace.promise_nodes.iter().enumerate() {
        graph.nodes.push(GraphNode {
            key: keys[i].clone(),
            label: n.label.clone(),
            desc: n.desc.clone(),
            event: n.event,
            intermediate: n.intermediate,
            settled: n.settled.is_some(),
        });
        for (parent, kind) in &n.parents {
            graph.edges.push(GraphEdge {
                from: keys[*parent].clone(),
                to: keys[i].clone(),
                kind: *kind,
            });
        }
    }
    graph
}

impl PromiseGraph {
    fn index(&self) -> BTreeMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.key.as_str(), i)).collect()
    }

    fn resolve(&self, name: &str) -> Result<usize, UnknownNode> {
        let idx = self.index();
        idx.get(name)
            .copied()
            .ok_or_else(|| UnknownNode(name.to_string()))
    }

    fn adjacency(&self) -> BTreeMap<usize, Vec<usize>> {
        let idx = self.index();
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &self.edges {
            let (Some(a), Some(b)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) else {
                continue;
            };
            adj.entry(*a).or_default().push(*b);
        }
        adj
    }

    /// Reflexive-transitive reachability along causal edges.
    pub fn has_path(&self, from: &str, to: &str) -> Result<bool, UnknownNode> {
        let start = self.resolve(from)?;
        let goal = self.resolve(to)?;
        let adj = self.adjacency();
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if n == goal {
                return Ok(true);
            }
            if !seen.insert(n) {
                continue;
            }
            if let Some(next) = adj.get(&n) {
                stack.extend(next.iter().copied());
            }
        }
        Ok(false)
    }

    pub fn is_acyclic(&self) -> bool {
        let adj = self.adjacency();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark = vec![0u8; self.nodes.len()];
        fn visit(n: usize, adj: &BTreeMap<usize, Vec<usize>>, mark: &mut [u8]) -> bool {
            match mark[n] {
                1 => return false,
                2 => return true,
                _ => {}
            }
            mark[n] = 1;
            if let Some(next) = adj.get(&n) {
                for m in next {
                    if !visit(*m, adj, mark) {
                        return false;
                    }
                }
            }
            mark[n] = 2;
            true
        }
        (0..self.nodes.len()).all(|n| visit(n, &adj, &mut mark))
    }

    /// Node keys of every database write, and of every connect that feeds
    /// one, per event. These are the effectful promises a race against
    /// termination can lose.
    pub fn effectful_nodes(&self, event: u64) -> Vec<String> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.event != event {
                continue;
            }
            let effectful = match n.desc.as_str() {
                "con.write" => true,
                "db.connect" => {
                    // Feeds a write somewhere downstream?
                    let mut seen = BTreeSet::new();
                    let mut stack = vec![i];
                    let mut found = false;
                    while let Some(k) = stack.pop() {
                        if !seen.insert(k) {
                            continue;
                        }
                        if k != i && self.nodes[k].desc == "con.write" {
                            found = true;
                            break;
                        }
                        if let Some(next) = adj.get(&k) {
                            stack.extend(next.iter().copied());
                        }
                    }
                    found
                }
                _ => false,
            };
            if effectful {
                out.push(n.key.clone());
            }
        }
        out
    }
}

/// Renders the graph as deterministic DOT text. With `elide_intermediates`,
/// mid-chain value transformers are spliced out and their incoming edges
/// reconnected to their successors.
pub fn export_dot(graph: &PromiseGraph, elide_intermediates: bool) -> String {
    let elided: BTreeSet<&str> = if elide_intermediates {
        graph
            .nodes
            .iter()
            .filter(|n| n.intermediate)
            .map(|n| n.key.as_str())
            .collect()
    } else {
        BTreeSet::new()
    };

    // Splice edges across elided nodes.
    let mut edges: Vec<(String, String, EdgeKind)> = Vec::new();
    for e in &graph.edges {
        if elided.contains(e.to.as_str()) {
            continue;
        }
        let mut from = e.from.clone();
        let mut kind = e.kind;
        while elided.contains(from.as_str()) {
            match graph.edges.iter().find(|p| p.to == from) {
                Some(p) => {
                    kind = p.kind;
                    from = p.from.clone();
                }
                None => break,
            }
        }
        edges.push((from, e.to.clone(), kind));
    }
    edges.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    edges.dedup();

    let mut nodes: Vec<&GraphNode> =
        graph.nodes.iter().filter(|n| !elided.contains(n.key.as_str())).collect();
    nodes.sort_by(|a, b| a.key.cmp(&b.key));

    let mut out = String::from("digraph promises {\n  rankdir=LR;\n");
    for n in &nodes {
        let label = if n.desc == "p_init" {
            n.label.clone()
        } else {
            format!("{}: {}", n.label, n.desc)
        };
        out.push_str(&format!("  \"{}\" [label=\"{}\"];\n", n.key, label));
    }
    for (from, to, kind) in &edges {
        out.push_str(&format!("  \"{from}\" -> \"{to}\" [label=\"{}\"];\n", kind.label()));
    }
    out.push_str("}\n");
    out
}
