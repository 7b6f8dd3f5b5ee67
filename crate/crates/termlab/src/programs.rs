//! The programs and schedule scripts shipped in the repository's
//! `programs/` directory, embedded for use by tests and examples.

/// Stores `{val, hash}` in the database while concurrently reading a second
/// value and responding with it; the write races the response.
pub const RUNNING_EXAMPLE: &str = include_str!("../../../programs/running_example.tl");

/// The same program restructured for the decoupled respond/end model: both
/// chains feed an `all_settled` combinator whose `finally` handler calls
/// `end()`.
pub const RUNNING_EXAMPLE_END: &str = include_str!("../../../programs/running_example_end.tl");

/// Schedule that leaves the write chain hanging: the function responds while
/// the first `db.connect` is still pending.
pub const TABLE1_SCHEDULE: &[usize] = &[0, 1, 1, 1];

/// Schedule in which the write chain completes before the read chain starts
/// resolving; no residual work remains.
pub const TABLE2_SCHEDULE: &[usize] = &[1, 1];

/// Two-event reuse schedule: the first event runs like [`TABLE1_SCHEDULE`],
/// then the carried-over connect resolves mid-way through the second event's
/// mainline, between the `val` and `hash` updates.
pub const TABLE3_SCHEDULE: &[usize] = &[0, 1, 1, 1, 1, 1, 0, 1, 1, 1];

use crate::program::{parse_program, Program};

/// Parses [`RUNNING_EXAMPLE`].
pub fn running_example() -> Program {
    parse_program(RUNNING_EXAMPLE, "running_example").expect("shipped program parses")
}

/// Parses [`RUNNING_EXAMPLE_END`].
pub fn running_example_end() -> Program {
    parse_program(RUNNING_EXAMPLE_END, "running_example_end").expect("shipped program parses")
}
