//! Static checks run before execution. Diagnostics never abort parsing;
//! errors make a program unrunnable, warnings are advisory.

use super::ast::*;
use crate::semantics::SemanticsVariant;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub loc: u32,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: l{}: {}", self.loc, self.message)
    }
}

/// Validates `program` against the execution model it is intended to run
/// under.
pub fn validate(program: &Program, variant: SemanticsVariant) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut bound: BTreeSet<String> = BTreeSet::new();
    let mut respond_blocks = 0usize;
    check_block(program, &program.body, &mut bound, variant, &mut out, &mut respond_blocks);

    if respond_blocks == 0 {
        out.push(Diagnostic {
            severity: Severity::Warning,
            loc: program.main_loc.0,
            message: "program never responds; the caller would only ever see a timeout".into(),
        });
    }
    if respond_blocks > 1 {
        out.push(Diagnostic {
            severity: Severity::Warning,
            loc: program.main_loc.0,
            message: "respond appears in more than one place; at most one may run per event"
                .into(),
        });
    }
    out
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

fn check_block(
    program: &Program,
    block: &[Command],
    bound: &mut BTreeSet<String>,
    variant: SemanticsVariant,
    out: &mut Vec<Diagnostic>,
    respond_blocks: &mut usize,
) {
    let mut responds_here = 0usize;
    for cmd in block {
        match cmd {
            Command::StartAsync { target, .. } => {
                bound.insert(target.clone());
            }
            Command::Chain { loc, source, target, handler, .. } => {
                if !bound.contains(source) {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        loc: loc.0,
                        message: format!("promise name `{source}` used before bound"),
                    });
                }
                let mut inner = bound.clone();
                check_block(program, &handler.body, &mut inner, variant, out, respond_blocks);
                bound.insert(target.clone());
            }
            Command::Combine { loc, sources, target, .. } => {
                for source in sources {
                    if !bound.contains(source) {
                        out.push(Diagnostic {
                            severity: Severity::Error,
                            loc: loc.0,
                            message: format!("promise name `{source}` used before bound"),
                        });
                    }
                }
                bound.insert(target.clone());
            }
            Command::Respond { loc, arg } => {
                responds_here += 1;
                if responds_here > 1 {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        loc: loc.0,
                        message: "second respond on the same straight-line path".into(),
                    });
                }
                if let RespondArg::Promise(name) = arg {
                    if !bound.contains(name) {
                        out.push(Diagnostic {
                            severity: Severity::Error,
                            loc: loc.0,
                            message: format!("promise name `{name}` used before bound"),
                        });
                    }
                }
            }
            Command::End { loc } => {
                if variant != SemanticsVariant::DecoupledEnd {
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        loc: loc.0,
                        message: format!(
                            "end() has no effect under the {variant} model; it is only \
                             meaningful when response and termination are decoupled"
                        ),
                    });
                }
            }
            Command::DeclareGlobal { .. } | Command::Assign { .. } | Command::Comment { .. } => {}
        }
    }
    if responds_here > 0 {
        *respond_blocks += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;
    use crate::programs;

    #[test]
    fn running_example_is_clean() {
        let p = parse_program(programs::RUNNING_EXAMPLE, "running_example").unwrap();
        let diags = validate(&p, SemanticsVariant::SingleExecution);
        assert!(diags.is_empty(), "unexpected diagnostics: {diags:?}");
    }

    #[test]
    fn then_on_unbound_name_is_an_error() {
        let p = parse_program("main(event):\nx = then(nope, v => v)", "t").unwrap();
        let diags = validate(&p, SemanticsVariant::SingleExecution);
        let errors: Vec<_> = diags.iter().filter(|d| d.severity == Severity::Error).collect();
        assert_eq!(errors.len(), 1);
        assert!(errors[0].message.contains("nope"));
    }

    #[test]
    fn end_under_single_execution_warns() {
        let p = parse_program(programs::RUNNING_EXAMPLE_END, "running_example_end").unwrap();
        let diags = validate(&p, SemanticsVariant::SingleExecution);
        let warnings: Vec<_> =
            diags.iter().filter(|d| d.severity == Severity::Warning).collect();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].message.contains("end()"));
        assert!(!has_errors(&diags));

        let clean = validate(&p, SemanticsVariant::DecoupledEnd);
        assert!(clean.is_empty(), "unexpected diagnostics: {clean:?}");
    }

    #[test]
    fn double_respond_on_one_path_is_an_error() {
        let p = parse_program("main(event):\nrespond(event); respond(event)", "t").unwrap();
        let diags = validate(&p, SemanticsVariant::FunctionReuse);
        assert!(has_errors(&diags));
    }
}
