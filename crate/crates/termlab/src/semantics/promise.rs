//! Promise records, settlement, and combinator semantics.
//!
//! A promise settles exactly once: `Pending → Fulfilled` or
//! `Pending → Rejected`. Handlers chained with `then`/`catch`/`finally`
//! activate according to the settlement outcome; a handler chained onto an
//! already-settled promise becomes runnable immediately.

use crate::program::{Handler, ReactionKind};
use crate::value::{Value, ValueKind};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use crate::program::CombineKind;

/// Runtime identity of a live promise. Site labels (`p12`) name where a
/// promise was created; ids distinguish instances of the same site across
/// events.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct PromiseId(pub u64);

impl fmt::Display for PromiseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Settlement {
    Fulfilled(Value),
    Rejected(Value),
}

impl Settlement {
    pub fn value(&self) -> &Value {
        match self {
            Settlement::Fulfilled(v) | Settlement::Rejected(v) => v,
        }
    }

    pub fn is_fulfilled(&self) -> bool {
        matches!(self, Settlement::Fulfilled(_))
    }

    pub fn outcome(&self) -> &'static str {
        match self {
            Settlement::Fulfilled(_) => "fulfilled",
            Settlement::Rejected(_) => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PromiseState {
    Pending,
    Settled(Settlement),
}

/// A reaction registered on a promise: which settlements it handles, what to
/// run, and the node that receives the produced value.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub kind: ReactionKind,
    pub handler: Handler,
    /// Registry index of the chained node.
    pub target_node: usize,
}

impl Reaction {
    /// Whether this reaction's handler runs for the given settlement.
    /// A non-activated reaction passes the settlement through unchanged.
    pub fn activates(&self, settlement: &Settlement) -> bool {
        match self.kind {
            ReactionKind::Then => settlement.is_fulfilled(),
            ReactionKind::Catch => !settlement.is_fulfilled(),
            ReactionKind::Finally => true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("promise {id} settled twice: already {first}, now {second}")]
pub struct DoubleSettle {
    pub id: PromiseId,
    pub first: String,
    pub second: String,
}

/// A live promise: identity, origin event, creation site, and settlement
/// state. `id` is a member of the function's unresolved set exactly while
/// the state is `Pending`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromiseRecord {
    pub id: PromiseId,
    pub origin: crate::value::EventId,
    /// Source line the promise was created on, e.g. 12 for `p12`.
    pub site: crate::program::Loc,
    /// Short operation description, e.g. `db.connect`.
    pub desc: String,
    pub state: PromiseState,
    /// Registry index of this promise's graph node.
    pub node: usize,
}

impl PromiseRecord {
    /// Settles the record. Re-settling with an identical settlement is a
    /// no-op; settling with a different one is an error.
    pub fn settle(&mut self, settlement: Settlement) -> Result<(), DoubleSettle> {
        match &self.state {
            PromiseState::Pending => {
                self.state = PromiseState::Settled(settlement);
                Ok(())
            }
            PromiseState::Settled(existing) if *existing == settlement => Ok(()),
            PromiseState::Settled(existing) => Err(DoubleSettle {
                id: self.id,
                first: existing.outcome().to_string(),
                second: settlement.outcome().to_string(),
            }),
        }
    }
}

/// Computes a combinator's settlement from its members' states, or `None`
/// while it must keep waiting.
///
/// * `all` fulfills with the list of values once every member fulfills and
///   rejects as soon as any member rejects.
/// * `all_settled` fulfills once every member settles, with a list of
///   `{status, value}` records.
/// * `any` fulfills with the first fulfillment and rejects once every member
///   has rejected.
/// * `race` adopts the first settlement.
pub fn combine_settlement(
    kind: CombineKind,
    members: &[Option<Settlement>],
) -> Option<Settlement> {
    match kind {
        CombineKind::All => {
            for m in members {
                if let Some(Settlement::Rejected(v)) = m {
                    return Some(Settlement::Rejected(v.clone()));
                }
            }
            if members.iter().all(|m| m.is_some()) {
                let mut out = Value::list(
                    members
                        .iter()
                        .map(|m| m.as_ref().unwrap().value().clone())
                        .collect(),
                );
                for m in members.iter().flatten() {
                    out = out.with_provenance(&m.value().provenance);
                }
                Some(Settlement::Fulfilled(out))
            } else {
                None
            }
        }
        CombineKind::AllSettled => {
            if members.iter().all(|m| m.is_some()) {
                let mut prov_carrier = Value::pristine(ValueKind::Undefined);
                let items: Vec<Value> = members
                    .iter()
                    .map(|m| {
                        let s = m.as_ref().unwrap();
                        prov_carrier = prov_carrier
                            .clone()
                            .with_provenance(&s.value().provenance);
                        Value::record(vec![
                            ("status".to_string(), Value::str(s.outcome())),
                            ("value".to_string(), s.value().clone()),
                        ])
                    })
                    .collect();
                let out = Value::list(items).with_provenance(&prov_carrier.provenance);
                Some(Settlement::Fulfilled(out))
            } else {
                None
            }
        }
        CombineKind::Any => {
            for m in members {
                if let Some(Settlement::Fulfilled(v)) = m {
                    return Some(Settlement::Fulfilled(v.clone()));
                }
            }
            if members.iter().all(|m| matches!(m, Some(Settlement::Rejected(_)))) {
                let reasons = Value::list(
                    members
                        .iter()
                        .map(|m| m.as_ref().unwrap().value().clone())
                        .collect(),
                );
                Some(Settlement::Rejected(
                    Value::pristine(ValueKind::Error("all promises rejected".into()))
                        .with_provenance(&reasons.provenance),
                ))
            } else {
                None
            }
        }
        CombineKind::Race => members.iter().flatten().next().cloned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Loc;
    use crate::value::EventId;

    fn record(id: u64) -> PromiseRecord {
        PromiseRecord {
            id: PromiseId(id),
            origin: EventId(1),
            site: Loc(12),
            desc: "db.connect".into(),
            state: PromiseState::Pending,
            node: 0,
        }
    }

    #[test]
    fn settle_transitions_once() {
        let mut p = record(1);
        p.settle(Settlement::Fulfilled(Value::int(1))).unwrap();
        assert!(matches!(p.state, PromiseState::Settled(_)));
        // Identical re-settlement is tolerated.
        p.settle(Settlement::Fulfilled(Value::int(1))).unwrap();
        let err = p.settle(Settlement::Rejected(Value::int(2))).unwrap_err();
        assert_eq!(err.first, "fulfilled");
        assert_eq!(err.second, "rejected");
    }

    #[test]
    fn all_settled_fulfills_over_mixed_outcomes() {
        let members = vec![
            Some(Settlement::Rejected(Value::str("boom"))),
            Some(Settlement::Fulfilled(Value::int(3))),
        ];
        let settled = combine_settlement(CombineKind::AllSettled, &members).unwrap();
        assert!(settled.is_fulfilled());
        match &settled.value().kind {
            ValueKind::List(items) => {
                assert_eq!(items.len(), 2);
                let status0 = items[0].as_record().unwrap().get("status").unwrap();
                assert_eq!(status0, &Value::str("rejected"));
            }
            other => panic!("expected a settlement list, got {other:?}"),
        }
    }

    #[test]
    fn all_waits_for_every_member() {
        let members = vec![Some(Settlement::Fulfilled(Value::int(1))), None];
        assert_eq!(combine_settlement(CombineKind::All, &members), None);
        let members = vec![
            Some(Settlement::Fulfilled(Value::int(1))),
            Some(Settlement::Fulfilled(Value::int(2))),
        ];
        let settled = combine_settlement(CombineKind::All, &members).unwrap();
        assert_eq!(
            settled.value(),
            &Value::list(vec![Value::int(1), Value::int(2)])
        );
    }

    #[test]
    fn all_rejects_on_first_rejection() {
        let members = vec![Some(Settlement::Rejected(Value::str("no"))), None];
        let settled = combine_settlement(CombineKind::All, &members).unwrap();
        assert!(!settled.is_fulfilled());
    }

    #[test]
    fn any_fulfills_first_and_rejects_last() {
        let members = vec![None, Some(Settlement::Fulfilled(Value::int(9)))];
        let settled = combine_settlement(CombineKind::Any, &members).unwrap();
        assert_eq!(settled.value(), &Value::int(9));

        let members = vec![Some(Settlement::Rejected(Value::str("a"))), None];
        assert_eq!(combine_settlement(CombineKind::Any, &members), None);
        let members = vec![
            Some(Settlement::Rejected(Value::str("a"))),
            Some(Settlement::Rejected(Value::str("b"))),
        ];
        assert!(!combine_settlement(CombineKind::Any, &members).unwrap().is_fulfilled());
    }

    #[test]
    fn race_adopts_first_settlement() {
        let members = vec![None, Some(Settlement::Rejected(Value::str("lost")))];
        let settled = combine_settlement(CombineKind::Race, &members).unwrap();
        assert!(!settled.is_fulfilled());
        let members: Vec<Option<Settlement>> = vec![None, None];
        assert_eq!(combine_settlement(CombineKind::Race, &members), None);
    }

    #[test]
    fn reactions_activate_by_kind() {
        let handler = Handler { param: None, body: vec![], result: None };
        let fulfilled = Settlement::Fulfilled(Value::int(1));
        let rejected = Settlement::Rejected(Value::int(1));
        for (kind, on_f, on_r) in [
            (ReactionKind::Then, true, false),
            (ReactionKind::Catch, false, true),
            (ReactionKind::Finally, true, true),
        ] {
            let r = Reaction { kind, handler: handler.clone(), target_node: 0 };
            assert_eq!(r.activates(&fulfilled), on_f);
            assert_eq!(r.activates(&rejected), on_r);
        }
    }
}
