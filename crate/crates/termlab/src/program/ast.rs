//! Abstract syntax of the async-program DSL.

use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Source location label: the 1-based line number a command was parsed from.
/// Displays as `l<line>`; the promise site for the same line displays as
/// `p<line>`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Loc(pub u32);

impl Loc {
    /// Promise-site label for this line, e.g. `p12`.
    pub fn site(&self) -> String {
        format!("p{}", self.0)
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// Pure expression. Evaluation never touches promises or the store.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Field(Box<Expr>, String),
    /// Record constructor; field order is source order.
    RecordOf(Vec<(String, Expr)>),
    Apply(Builtin, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Pure symbolic hash: `computeHash(v)` yields `H(v)`.
    ComputeHash,
}

/// Latency window, in virtual ticks, for an asynchronous operation.
/// Seeded runs sample a duration from the window; exploration treats
/// completion order as pure scheduler nondeterminism and ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySpec {
    pub min: u64,
    pub max: u64,
}

impl LatencySpec {
    pub fn fixed(ticks: u64) -> Self {
        LatencySpec { min: ticks, max: ticks }
    }
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec { min: 1, max: 8 }
    }
}

/// An asynchronous operation against the external world.
#[derive(Debug, Clone, PartialEq)]
pub enum AsyncOp {
    DbConnect { service: String },
    DbRead { conn: String, key: String },
    DbWrite { conn: String, value: Expr, key: String },
    Sleep { ticks: u64 },
    FailWith { message: String },
}

impl AsyncOp {
    /// Short operation label used in trace tables and promise-graph nodes.
    pub fn label(&self) -> &'static str {
        match self {
            AsyncOp::DbConnect { .. } => "db.connect",
            AsyncOp::DbRead { .. } => "con.read",
            AsyncOp::DbWrite { .. } => "con.write",
            AsyncOp::Sleep { .. } => "sleep",
            AsyncOp::FailWith { .. } => "fail",
        }
    }
}

/// An asynchronous operation plus its scheduling attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct OpSpec {
    pub op: AsyncOp,
    /// Overrides the store's default latency window when present.
    pub latency: Option<LatencySpec>,
    /// Protocol deadline in ticks; a suspension longer than the deadline
    /// poisons the pending operation. Off (None) by default.
    pub deadline: Option<u64>,
}

impl OpSpec {
    pub fn new(op: AsyncOp) -> Self {
        OpSpec { op, latency: None, deadline: None }
    }
}

/// Which settlements activate a chained handler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReactionKind {
    Then,
    Catch,
    Finally,
}

impl fmt::Display for ReactionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReactionKind::Then => write!(f, "then"),
            ReactionKind::Catch => write!(f, "catch"),
            ReactionKind::Finally => write!(f, "finally"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CombineKind {
    All,
    AllSettled,
    Any,
    Race,
}

impl fmt::Display for CombineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombineKind::All => write!(f, "all"),
            CombineKind::AllSettled => write!(f, "all_settled"),
            CombineKind::Any => write!(f, "any"),
            CombineKind::Race => write!(f, "race"),
        }
    }
}

/// What a handler produces once its body has run.
#[derive(Debug, Clone, PartialEq)]
pub enum HandlerResult {
    /// Chained promise fulfills with the value of this expression.
    Value(Expr),
    /// Handler starts an asynchronous operation and the chained promise
    /// adopts its outcome.
    Op(OpSpec),
}

/// A chained event handler. The body runs to completion within one turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Handler {
    /// Name bound to the settled value, if any.
    pub param: Option<String>,
    pub body: Vec<Command>,
    /// Absent for handlers that only run commands; `finally` handlers pass
    /// the source settlement through regardless.
    pub result: Option<HandlerResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    Local,
}

/// The argument of a `respond` command.
#[derive(Debug, Clone, PartialEq)]
pub enum RespondArg {
    /// Respond with the settlement of a named promise.
    Promise(String),
    /// Respond immediately with the value of an expression.
    Value(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    DeclareGlobal {
        loc: Loc,
        name: String,
    },
    Assign {
        loc: Loc,
        scope: Scope,
        name: String,
        expr: Expr,
    },
    /// `name <- async op`: starts `op` and binds `name` to its promise.
    StartAsync {
        loc: Loc,
        target: String,
        op: OpSpec,
    },
    /// `then` / `catch` / `finally` chaining.
    Chain {
        loc: Loc,
        kind: ReactionKind,
        source: String,
        target: String,
        handler: Handler,
    },
    Combine {
        loc: Loc,
        kind: CombineKind,
        sources: Vec<String>,
        target: String,
    },
    Respond {
        loc: Loc,
        arg: RespondArg,
    },
    End {
        loc: Loc,
    },
    Comment {
        loc: Loc,
        text: String,
    },
}

impl Command {
    pub fn loc(&self) -> Loc {
        match self {
            Command::DeclareGlobal { loc, .. }
            | Command::Assign { loc, .. }
            | Command::StartAsync { loc, .. }
            | Command::Chain { loc, .. }
            | Command::Combine { loc, .. }
            | Command::Respond { loc, .. }
            | Command::End { loc }
            | Command::Comment { loc, .. } => *loc,
        }
    }

    /// Commands that occupy a row in execution traces. Registrations,
    /// comments, and declarations execute silently.
    pub fn produces_row(&self) -> bool {
        match self {
            Command::Assign { .. }
            | Command::StartAsync { .. }
            | Command::Combine { .. }
            | Command::End { .. } => true,
            Command::Respond { arg, .. } => matches!(arg, RespondArg::Value(_)),
            _ => false,
        }
    }
}

/// A parsed program: global declarations plus the main handler body.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub source: String,
    pub globals: Vec<String>,
    pub globals_loc: Loc,
    /// Name the event payload is bound to at the start of each run.
    pub param: String,
    /// Location of the `main(...)` header; the event-start trace row uses it.
    pub main_loc: Loc,
    pub body: Vec<Command>,
}

impl Program {
    pub fn is_global(&self, name: &str) -> bool {
        self.globals.iter().any(|g| g == name)
    }
}
