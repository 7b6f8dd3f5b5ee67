//! The simulated external database service.
//!
//! The store is sequentially consistent from the function's point of view: a
//! write becomes visible when its promise resolves, and a read captures the
//! store content at the moment the read is issued.

use crate::program::{AsyncOp, LatencySpec};
use crate::value::{Value, ValueKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default latency windows per operation kind, in virtual ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub connect: LatencySpec,
    pub read: LatencySpec,
    pub write: LatencySpec,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            connect: LatencySpec::default(),
            read: LatencySpec::default(),
            write: LatencySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExternalStore {
    pub data: BTreeMap<String, Value>,
    pub latency: LatencyConfig,
}

impl ExternalStore {
    pub fn new() -> Self {
        ExternalStore::default()
    }

    /// Reads `key`. A key that has never been written reads as the symbolic
    /// placeholder `S(key)`.
    pub fn read(&self, key: &str) -> Value {
        match self.data.get(key) {
            Some(v) => v.clone(),
            None => Value::pristine(ValueKind::Stored(key.to_string())),
        }
    }

    pub fn write(&mut self, key: &str, value: Value) {
        self.data.insert(key.to_string(), value);
    }

    /// The latency window for `op`, unless the op spec overrides it.
    pub fn default_latency(&self, op: &AsyncOp) -> LatencySpec {
        match op {
            AsyncOp::DbConnect { .. } => self.latency.connect,
            AsyncOp::DbRead { .. } => self.latency.read,
            AsyncOp::DbWrite { .. } => self.latency.write,
            AsyncOp::Sleep { ticks } => LatencySpec::fixed(*ticks),
            AsyncOp::FailWith { .. } => self.latency.connect,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_keys_read_symbolically() {
        let store = ExternalStore::new();
        assert_eq!(store.read("stored").to_string(), "S(stored)");
    }

    #[test]
    fn writes_become_visible() {
        let mut store = ExternalStore::new();
        store.write("vals", Value::int(42));
        assert_eq!(store.read("vals"), Value::int(42));
    }
}
