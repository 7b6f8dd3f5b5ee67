//! Pure expression evaluation.
//!
//! Every result is tainted with the event it was computed during, on top of
//! the union of its inputs' provenance. Unbound reads yield `undefined`
//! rather than erroring; a field access on a non-record yields an error
//! value. Evaluation never mutates anything.

use super::ast::{Builtin, Expr};
use crate::value::{EventId, Value, ValueKind};
use std::collections::BTreeMap;

/// Name-resolution environment for one evaluation: handler locals shadow
/// mainline locals, which shadow function memory.
#[derive(Debug, Clone, Copy)]
pub struct EvalScope<'a> {
    pub memory: &'a BTreeMap<String, Value>,
    pub locals: &'a BTreeMap<String, Value>,
    pub handler_locals: Option<&'a BTreeMap<String, Value>>,
}

impl<'a> EvalScope<'a> {
    fn lookup(&self, name: &str) -> Option<&Value> {
        if let Some(h) = self.handler_locals {
            if let Some(v) = h.get(name) {
                return Some(v);
            }
        }
        self.locals.get(name).or_else(|| self.memory.get(name))
    }
}

/// Evaluates `expr` under `scope` during `current_event`.
pub fn eval_expr(expr: &Expr, scope: EvalScope<'_>, current_event: EventId) -> Value {
    match expr {
        Expr::Lit(v) => v.clone().tainted(current_event),
        Expr::Var(name) => match scope.lookup(name) {
            Some(v) => v.clone().tainted(current_event),
            None => Value::undefined(current_event),
        },
        Expr::Field(base, field) => {
            let base = eval_expr(base, scope, current_event);
            let prov = base.provenance.clone();
            match &base.kind {
                ValueKind::Record(fields) => match fields.get(field) {
                    Some(v) => v.clone().with_provenance(&prov).tainted(current_event),
                    None => Value::undefined(current_event).with_provenance(&prov),
                },
                ValueKind::Undefined => Value::error(
                    format!("cannot read field `{field}` of undefined"),
                    current_event,
                )
                .with_provenance(&prov),
                other => Value::error(
                    format!(
                        "cannot read field `{field}` of non-record {}",
                        Value::pristine(other.clone())
                    ),
                    current_event,
                )
                .with_provenance(&prov),
            }
        }
        Expr::RecordOf(fields) => {
            let mut out = BTreeMap::new();
            let mut value = Value::pristine(ValueKind::Undefined).tainted(current_event);
            for (name, field_expr) in fields {
                let v = eval_expr(field_expr, scope, current_event);
                value = value.with_provenance(&v.provenance);
                out.insert(name.clone(), v);
            }
            value.kind = ValueKind::Record(out);
            value
        }
        Expr::Apply(Builtin::ComputeHash, args) => {
            let arg = eval_expr(&args[0], scope, current_event);
            let prov = arg.provenance.clone();
            Value::pristine(ValueKind::Hash(Box::new(arg)))
                .with_provenance(&prov)
                .tainted(current_event)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Provenance;

    fn empty_scope<'a>(
        memory: &'a BTreeMap<String, Value>,
        locals: &'a BTreeMap<String, Value>,
    ) -> EvalScope<'a> {
        EvalScope { memory, locals, handler_locals: None }
    }

    #[test]
    fn compute_hash_yields_symbolic_hash() {
        let memory = BTreeMap::new();
        let locals = BTreeMap::new();
        let e = Expr::Apply(
            Builtin::ComputeHash,
            vec![Expr::Lit(Value::int(42))],
        );
        let v = eval_expr(&e, empty_scope(&memory, &locals), EventId(1));
        assert_eq!(v.kind, ValueKind::Hash(Box::new(Value::int(42))));
        assert_eq!(v.to_string(), "H(42)");
    }

    #[test]
    fn unbound_var_reads_undefined() {
        let memory = BTreeMap::new();
        let locals = BTreeMap::new();
        let v = eval_expr(&Expr::Var("val".into()), empty_scope(&memory, &locals), EventId(1));
        assert!(v.is_undefined());
        assert!(v.provenance.contains(&EventId(1)));
    }

    #[test]
    fn record_unions_provenance_of_fields() {
        let mut memory = BTreeMap::new();
        memory.insert("val".to_string(), Value::int(112).tainted(EventId(2)));
        memory.insert(
            "hash".to_string(),
            Value::pristine(ValueKind::Hash(Box::new(Value::int(42)))).tainted(EventId(1)),
        );
        let locals = BTreeMap::new();
        let e = Expr::RecordOf(vec![
            ("val".into(), Expr::Var("val".into())),
            ("hash".into(), Expr::Var("hash".into())),
        ]);
        let v = eval_expr(&e, empty_scope(&memory, &locals), EventId(2));
        let expected: Provenance = [EventId(1), EventId(2)].into_iter().collect();
        assert_eq!(v.provenance, expected);
    }

    #[test]
    fn field_access_on_non_record_is_error_value() {
        let memory = BTreeMap::new();
        let locals = BTreeMap::new();
        let e = Expr::Field(Box::new(Expr::Lit(Value::int(3))), "x".into());
        let v = eval_expr(&e, empty_scope(&memory, &locals), EventId(1));
        assert!(v.is_error());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let mut memory = BTreeMap::new();
        memory.insert("a".to_string(), Value::int(1).tainted(EventId(3)));
        let locals = BTreeMap::new();
        let e = Expr::RecordOf(vec![("a".into(), Expr::Var("a".into()))]);
        let v1 = eval_expr(&e, empty_scope(&memory, &locals), EventId(4));
        let v2 = eval_expr(&e, empty_scope(&memory, &locals), EventId(4));
        assert_eq!(v1, v2);
        assert_eq!(v1.provenance, v2.provenance);
    }
}
