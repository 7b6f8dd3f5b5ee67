//! The async-program DSL: abstract syntax, parser, printer, expression
//! evaluation, and static validation.
//!
//! Programs are written one command per line (`;` separates commands that
//! share a line). Every command carries a source location label derived from
//! its line number; promise-producing commands name promise sites after the
//! same line (`p12` for a promise created on line 12). Those labels are what
//! traces, promise graphs, and verdicts report.

mod ast;
mod eval;
mod parser;
mod printer;
mod validate;

pub use ast::*;
pub use eval::{eval_expr, EvalScope};
pub use parser::{parse_program, ParseError};
pub use printer::{command_text, expr_text, handler_text, opspec_text, print_program};
pub use validate::{has_errors, validate, Diagnostic, Severity};
