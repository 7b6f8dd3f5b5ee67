//! Canonical pretty-printer. `parse_program(print_program(p)) == p` holds
//! structurally: commands land back on their original source lines (padding
//! with blank lines as needed) so location labels survive the round trip.

use super::ast::*;

/// Renders a program back to DSL source text.
pub fn print_program(p: &Program) -> String {
    let mut lines: Vec<(u32, String)> = Vec::new();
    if !p.globals.is_empty() {
        lines.push((p.globals_loc.0.max(1), format!("globals {}", p.globals.join(", "))));
    }
    lines.push((p.main_loc.0, format!("main({}):", p.param)));

    let mut current: Option<(u32, Vec<String>)> = None;
    for cmd in &p.body {
        let text = command_text(cmd);
        let line = cmd.loc().0;
        match &mut current {
            Some((l, parts)) if *l == line => parts.push(text),
            _ => {
                if let Some((l, parts)) = current.take() {
                    lines.push((l, parts.join("; ")));
                }
                current = Some((line, vec![text]));
            }
        }
    }
    if let Some((l, parts)) = current.take() {
        lines.push((l, parts.join("; ")));
    }

    let mut out = String::new();
    let mut at = 1;
    for (line, text) in lines {
        while at < line {
            out.push('\n');
            at += 1;
        }
        out.push_str(&text);
        out.push('\n');
        at += 1;
    }
    out
}

/// Renders a single command the way the printer and trace tables show it.
pub fn command_text(cmd: &Command) -> String {
    match cmd {
        Command::DeclareGlobal { name, .. } => format!("global {name}"),
        Command::Assign { name, expr, .. } => format!("{name} = {}", expr_text(expr)),
        Command::StartAsync { target, op, .. } => {
            format!("{target} <- async {}", opspec_text(op))
        }
        Command::Chain { kind, source, target, handler, .. } => {
            format!("{target} = {kind}({source}, {})", handler_text(handler))
        }
        Command::Combine { kind, sources, target, .. } => {
            format!("{target} = {kind}({})", sources.join(", "))
        }
        Command::Respond { arg, .. } => match arg {
            RespondArg::Promise(name) => format!("respond({name})"),
            RespondArg::Value(expr) => format!("respond({})", expr_text(expr)),
        },
        Command::End { .. } => "end()".to_string(),
        Command::Comment { text, .. } => format!("# {text}"),
    }
}

pub fn handler_text(h: &Handler) -> String {
    let param = match &h.param {
        Some(p) => p.clone(),
        None => "()".to_string(),
    };
    let mut parts: Vec<String> = h.body.iter().map(command_text).collect();
    if let Some(result) = &h.result {
        parts.push(match result {
            HandlerResult::Value(e) => expr_text(e),
            HandlerResult::Op(op) => opspec_text(op),
        });
    }
    let tail = parts.join("; ");
    if h.body.is_empty() {
        format!("{param} => {tail}")
    } else {
        format!("{param} => ({tail})")
    }
}

pub fn opspec_text(spec: &OpSpec) -> String {
    let mut out = match &spec.op {
        AsyncOp::DbConnect { service } => format!("db.connect({service})"),
        AsyncOp::DbRead { conn, key } => format!("db.read({conn}, {key})"),
        AsyncOp::DbWrite { conn, value, key } => {
            format!("db.write({conn}, {}, {key})", expr_text(value))
        }
        AsyncOp::Sleep { ticks } => format!("sleep({ticks})"),
        AsyncOp::FailWith { message } => format!("fail(\"{}\")", escape(message)),
    };
    if let Some(lat) = spec.latency {
        // Sleep latency is implied by its argument.
        if !matches!(spec.op, AsyncOp::Sleep { ticks } if lat == LatencySpec::fixed(ticks)) {
            if lat.min == lat.max {
                out.push_str(&format!(" @latency({})", lat.min));
            } else {
                out.push_str(&format!(" @latency({}, {})", lat.min, lat.max));
            }
        }
    }
    if let Some(d) = spec.deadline {
        out.push_str(&format!(" @deadline({d})"));
    }
    out
}

pub fn expr_text(e: &Expr) -> String {
    use crate::value::ValueKind;
    match e {
        Expr::Lit(v) => match &v.kind {
            ValueKind::Str(s) => format!("\"{}\"", escape(s)),
            other => crate::value::Value::pristine(other.clone()).to_string(),
        },
        Expr::Var(name) => name.clone(),
        Expr::Field(base, field) => format!("{}.{field}", expr_text(base)),
        Expr::RecordOf(fields) => {
            let inner: Vec<String> = fields
                .iter()
                .map(|(k, v)| match v {
                    Expr::Var(name) if name == k => k.clone(),
                    _ => format!("{k}: {}", expr_text(v)),
                })
                .collect();
            format!("{{{}}}", inner.join(", "))
        }
        Expr::Apply(Builtin::ComputeHash, args) => {
            format!("computeHash({})", expr_text(&args[0]))
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;
    use crate::programs;

    fn roundtrip(text: &str) {
        let p = parse_program(text, "t").unwrap();
        let printed = print_program(&p);
        let reparsed = parse_program(&printed, "t").unwrap();
        assert_eq!(p.globals, reparsed.globals);
        assert_eq!(p.param, reparsed.param);
        assert_eq!(p.main_loc, reparsed.main_loc);
        assert_eq!(p.body, reparsed.body);
    }

    #[test]
    fn shipped_programs_roundtrip() {
        roundtrip(programs::RUNNING_EXAMPLE);
        roundtrip(programs::RUNNING_EXAMPLE_END);
    }

    #[test]
    fn handler_sequences_roundtrip() {
        roundtrip("main(event):\na <- async sleep(3)\nf = finally(a, () => (respond(event); end()))");
    }
}
