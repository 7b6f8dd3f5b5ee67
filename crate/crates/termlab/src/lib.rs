//! termlab: a deterministic laboratory for serverless function termination.
//!
//! Serverless platforms decide when event processing is finished, and that
//! decision interacts badly with asynchronous I/O: respond too early and
//! pending work is silently dropped or leaks into the next event. This crate
//! makes the phenomenon reproducible on a virtual clock:
//!
//! * a tiny async-program DSL with promises, chaining, and combinators
//!   ([`program`]);
//! * four execution models of function termination as guarded small-step
//!   rules ([`semantics`]);
//! * a driver that runs programs under seeded, scripted, or exhaustive
//!   schedules and records replayable traces ([`engine`]);
//! * promise graphs and violation detectors — broken promises, cross-event
//!   interference, stale-state writes, response races ([`analysis`]);
//! * a platform-side simulator of the init/run/await container lifecycle
//!   with billing and timeouts ([`invoker`]).
//!
//! Start with the runnable examples (`cargo run --example single_execution`)
//! or the `termlab` binary (`termlab demo`).

pub mod analysis;
pub mod canonical;
pub mod cli;
pub mod engine;
pub mod invoker;
pub mod program;
pub mod programs;
pub mod semantics;
pub mod value;
