//! The value model shared by the whole crate.
//!
//! Values are immutable and carry a provenance set: the ids of every event
//! whose processing contributed to the value. Provenance is what makes
//! stale-state corruption mechanically detectable — a database write whose
//! value mixes data from two different events is flagged by the analysis
//! module without any knowledge of the program.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Unique id of a single event processed by a function instance.
///
/// Ids are issued from a monotonic counter and never reused, so a value's
/// provenance set is unambiguous even across reused environments.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Set of event ids that contributed to a value.
pub type Provenance = BTreeSet<EventId>;

/// A runtime value together with its provenance.
///
/// Equality ignores provenance: `42` produced during event `e1` equals `42`
/// produced during `e2`. Canonical serialization keeps the provenance so
/// traces and state hashes distinguish tainted values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Value {
    pub kind: ValueKind,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueKind {
    Undefined,
    Bool(bool),
    Int(i64),
    Str(String),
    Record(BTreeMap<String, Value>),
    List(Vec<Value>),
    /// A runtime error, e.g. a rejection reason or a bad field access.
    Error(String),
    /// Symbolic hash constructor: `Hash(v)` equals `Hash(w)` iff `v == w`.
    Hash(Box<Value>),
    /// Symbolic placeholder for the database content at `key` when the key
    /// has never been written in the simulated store.
    Stored(String),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Value {}

impl Value {
    pub fn new(kind: ValueKind, provenance: Provenance) -> Self {
        Value { kind, provenance }
    }

    /// A value with empty provenance, as written in program text or arriving
    /// from outside the system.
    pub fn pristine(kind: ValueKind) -> Self {
        Value {
            kind,
            provenance: Provenance::new(),
        }
    }

    pub fn undefined(event: EventId) -> Self {
        Value::pristine(ValueKind::Undefined).tainted(event)
    }

    pub fn int(n: i64) -> Self {
        Value::pristine(ValueKind::Int(n))
    }

    pub fn str(s: impl Into<String>) -> Self {
        Value::pristine(ValueKind::Str(s.into()))
    }

    pub fn bool(b: bool) -> Self {
        Value::pristine(ValueKind::Bool(b))
    }

    pub fn error(msg: impl Into<String>, event: EventId) -> Self {
        Value::pristine(ValueKind::Error(msg.into())).tainted(event)
    }

    pub fn record(fields: Vec<(String, Value)>) -> Self {
        Value::pristine(ValueKind::Record(fields.into_iter().collect()))
    }

    pub fn list(items: Vec<Value>) -> Self {
        Value::pristine(ValueKind::List(items))
    }

    /// Returns the same value with `event` added to its provenance.
    pub fn tainted(mut self, event: EventId) -> Self {
        self.provenance.insert(event);
        self
    }

    /// Returns the same value with every id in `prov` added to its provenance.
    pub fn with_provenance(mut self, prov: &Provenance) -> Self {
        self.provenance.extend(prov.iter().copied());
        self
    }

    pub fn is_undefined(&self) -> bool {
        matches!(self.kind, ValueKind::Undefined)
    }

    pub fn is_error(&self) -> bool {
        matches!(self.kind, ValueKind::Error(_))
    }

    pub fn as_record(&self) -> Option<&BTreeMap<String, Value>> {
        match &self.kind {
            ValueKind::Record(fields) => Some(fields),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ValueKind::Undefined => write!(f, "undefined"),
            ValueKind::Bool(b) => write!(f, "{b}"),
            ValueKind::Int(n) => write!(f, "{n}"),
            ValueKind::Str(s) => write!(f, "\"{s}\""),
            ValueKind::Record(fields) => {
                write!(f, "{{")?;
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
            ValueKind::List(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            ValueKind::Error(msg) => write!(f, "Error({msg})"),
            ValueKind::Hash(inner) => write!(f, "H({inner})"),
            ValueKind::Stored(key) => write!(f, "S({key})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_symbolic_and_injective() {
        let h42 = Value::pristine(ValueKind::Hash(Box::new(Value::int(42))));
        let h42_again = Value::pristine(ValueKind::Hash(Box::new(Value::int(42))));
        let h112 = Value::pristine(ValueKind::Hash(Box::new(Value::int(112))));
        assert_eq!(h42, h42_again);
        assert_ne!(h42, h112);
        assert_eq!(h42.to_string(), "H(42)");
    }

    #[test]
    fn equality_ignores_provenance() {
        let a = Value::int(7).tainted(EventId(1));
        let b = Value::int(7).tainted(EventId(2));
        assert_eq!(a, b);
        assert_ne!(a.provenance, b.provenance);
    }

    #[test]
    fn provenance_unions_propagate() {
        let a = Value::int(1).tainted(EventId(1));
        let b = Value::int(2).tainted(EventId(2));
        let rec = Value::record(vec![("a".into(), a.clone()), ("b".into(), b.clone())])
            .with_provenance(&a.provenance)
            .with_provenance(&b.provenance);
        let expected: Provenance = [EventId(1), EventId(2)].into_iter().collect();
        assert_eq!(rec.provenance, expected);
    }

    #[test]
    fn display_forms() {
        assert_eq!(Value::pristine(ValueKind::Stored("k".into())).to_string(), "S(k)");
        assert_eq!(Value::str("hi").to_string(), "\"hi\"");
        let rec = Value::record(vec![
            ("val".into(), Value::int(42)),
            ("hash".into(), Value::pristine(ValueKind::Hash(Box::new(Value::int(42))))),
        ]);
        // Record fields render in sorted key order.
        assert_eq!(rec.to_string(), "{hash: H(42), val: 42}");
    }
}
