//! Line-oriented recursive-descent parser for the async-program DSL.
//!
//! Grammar (one command per line; `;` separates commands sharing a line):
//!
//! ```text
//! program := line*
//! line    := "# comment" | "globals" name ("," name)* | "main(" name? "):" | stmt (";" stmt)*
//! stmt    := "global" name
//!          | name "=" expr
//!          | name "<- async" asyncop attr*
//!          | name "=" ("then"|"catch"|"finally") "(" name "," handler ")"
//!          | name "=" ("all"|"all_settled"|"any"|"race") "(" name ("," name)* ")"
//!          | "respond(" (name | expr) ")"
//!          | "end()"
//! asyncop := "db.connect(" svc ")" | "db.read(" conn "," key ")"
//!          | "db.write(" conn "," expr "," key ")" | "sleep(" int ")" | "fail(" str ")"
//! attr    := "@latency(" int ("," int)? ")" | "@deadline(" int ")"
//! handler := (name | "(" name? ")") "=>" (asyncop | command | expr | "(" cmds ")")
//! expr    := atom ("." name)*
//! atom    := int | str | "true" | "false" | "undefined" | name
//!          | "computeHash(" expr ")" | "{" field ("," field)* "}"
//! field   := name ":" expr | name          -- shorthand for name: name
//! ```
//!
//! Command labels are the 1-based source line numbers, so a promise started
//! on line 12 is reported as `p12` throughout traces and graphs.

use super::ast::*;
use crate::value::{Value, ValueKind};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at line {line}, col {col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: usize,
    pub message: String,
}

/// Parses DSL source text into a [`Program`]. Parsing checks syntax only;
/// name binding is the validator's job.
pub fn parse_program(text: &str, name: &str) -> Result<Program, ParseError> {
    let mut globals = Vec::new();
    let mut globals_loc = Loc(0);
    let mut param = "event".to_string();
    let mut main_loc = None;
    let mut body = Vec::new();
    let mut promise_names: BTreeSet<String> = BTreeSet::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = (idx + 1) as u32;
        let loc = Loc(line_no);
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            body.push(Command::Comment { loc, text: comment.trim().to_string() });
            continue;
        }
        let mut cur = Cursor::new(trimmed, line_no);
        if cur.try_keyword("globals") {
            globals_loc = loc;
            loop {
                globals.push(cur.ident("global name")?);
                if !cur.try_punct(',') {
                    break;
                }
            }
            cur.expect_eol()?;
            continue;
        }
        if cur.try_keyword("main") {
            cur.expect_punct('(')?;
            if !cur.peek_punct(')') {
                param = cur.ident("event parameter")?;
            }
            cur.expect_punct(')')?;
            cur.expect_punct(':')?;
            cur.expect_eol()?;
            main_loc = Some(loc);
            continue;
        }
        // One or more `;`-separated commands sharing this line.
        loop {
            let cmd = parse_stmt(&mut cur, loc, &mut promise_names)?;
            body.push(cmd);
            if cur.try_punct(';') {
                continue;
            }
            cur.expect_eol()?;
            break;
        }
    }

    let main_loc = main_loc.unwrap_or_else(|| {
        let first = body
            .iter()
            .find(|c| !matches!(c, Command::Comment { .. }))
            .map(|c| c.loc().0)
            .unwrap_or(1);
        Loc(first.saturating_sub(1).max(1))
    });

    Ok(Program {
        name: name.to_string(),
        source: text.to_string(),
        globals,
        globals_loc,
        param,
        main_loc,
        body,
    })
}

fn parse_stmt(
    cur: &mut Cursor<'_>,
    loc: Loc,
    promise_names: &mut BTreeSet<String>,
) -> Result<Command, ParseError> {
    if cur.try_keyword("global") {
        let name = cur.ident("global name")?;
        return Ok(Command::DeclareGlobal { loc, name });
    }
    if cur.try_keyword("respond") {
        cur.expect_punct('(')?;
        let arg = if let Some(name) = cur.peek_lone_ident_before(')') {
            if promise_names.contains(&name) {
                cur.ident("promise name")?;
                RespondArg::Promise(name)
            } else {
                RespondArg::Value(parse_expr(cur)?)
            }
        } else {
            RespondArg::Value(parse_expr(cur)?)
        };
        cur.expect_punct(')')?;
        return Ok(Command::Respond { loc, arg });
    }
    if cur.try_keyword("end") {
        cur.expect_punct('(')?;
        cur.expect_punct(')')?;
        return Ok(Command::End { loc });
    }

    let name = cur.ident("name")?;
    if cur.try_str("<-") {
        cur.expect_keyword("async")?;
        let op = parse_opspec(cur)?;
        promise_names.insert(name.clone());
        return Ok(Command::StartAsync { loc, target: name, op });
    }
    cur.expect_punct('=')?;

    for (kw, kind) in [
        ("then", ReactionKind::Then),
        ("catch", ReactionKind::Catch),
        ("finally", ReactionKind::Finally),
    ] {
        if cur.try_keyword(kw) {
            cur.expect_punct('(')?;
            let source = cur.ident("source promise")?;
            cur.expect_punct(',')?;
            let handler = parse_handler(cur, loc, promise_names)?;
            cur.expect_punct(')')?;
            promise_names.insert(name.clone());
            return Ok(Command::Chain { loc, kind, source, target: name, handler });
        }
    }
    for (kw, kind) in [
        ("all_settled", CombineKind::AllSettled),
        ("all", CombineKind::All),
        ("any", CombineKind::Any),
        ("race", CombineKind::Race),
    ] {
        if cur.try_keyword(kw) {
            cur.expect_punct('(')?;
            let mut sources = vec![cur.ident("promise name")?];
            while cur.try_punct(',') {
                sources.push(cur.ident("promise name")?);
            }
            cur.expect_punct(')')?;
            promise_names.insert(name.clone());
            return Ok(Command::Combine { loc, kind, sources, target: name });
        }
    }

    let expr = parse_expr(cur)?;
    Ok(Command::Assign { loc, scope: Scope::Local, name, expr })
}

fn parse_handler(
    cur: &mut Cursor<'_>,
    loc: Loc,
    outer_promises: &BTreeSet<String>,
) -> Result<Handler, ParseError> {
    let param = if cur.try_punct('(') {
        let p = if cur.peek_punct(')') { None } else { Some(cur.ident("handler parameter")?) };
        cur.expect_punct(')')?;
        p
    } else {
        Some(cur.ident("handler parameter")?)
    };
    cur.expect_str("=>")?;

    // Parenthesized command sequence: `(cmd; cmd; expr?)`.
    if cur.try_punct('(') {
        let mut promises = outer_promises.clone();
        let mut body = Vec::new();
        let mut result = None;
        loop {
            if let Some(tail) = try_parse_tail(cur, loc, &promises)? {
                result = Some(tail);
                break;
            }
            let cmd = parse_stmt(cur, loc, &mut promises)?;
            body.push(cmd);
            if cur.try_punct(';') {
                continue;
            }
            break;
        }
        cur.expect_punct(')')?;
        return Ok(Handler { param, body, result });
    }

    if peek_opspec(cur) {
        let op = parse_opspec(cur)?;
        return Ok(Handler { param, body: Vec::new(), result: Some(HandlerResult::Op(op)) });
    }
    if cur.peek_keyword("respond") || cur.peek_keyword("end") || cur.peek_keyword("global") {
        let mut promises = outer_promises.clone();
        let cmd = parse_stmt(cur, loc, &mut promises)?;
        return Ok(Handler { param, body: vec![cmd], result: None });
    }
    // `name = ...` command versus an expression starting with a name.
    if cur.peek_assignment() {
        let mut promises = outer_promises.clone();
        let cmd = parse_stmt(cur, loc, &mut promises)?;
        return Ok(Handler { param, body: vec![cmd], result: None });
    }
    let expr = parse_expr(cur)?;
    Ok(Handler { param, body: Vec::new(), result: Some(HandlerResult::Value(expr)) })
}

/// Inside a parenthesized handler body, a trailing async op or expression is
/// the handler result rather than a command.
fn try_parse_tail(
    cur: &mut Cursor<'_>,
    _loc: Loc,
    _promises: &BTreeSet<String>,
) -> Result<Option<HandlerResult>, ParseError> {
    if peek_opspec(cur) {
        return Ok(Some(HandlerResult::Op(parse_opspec(cur)?)));
    }
    if cur.peek_keyword("respond") || cur.peek_keyword("end") || cur.peek_keyword("global") {
        return Ok(None);
    }
    if cur.peek_assignment() {
        return Ok(None);
    }
    let expr = parse_expr(cur)?;
    Ok(Some(HandlerResult::Value(expr)))
}

fn peek_opspec(cur: &mut Cursor<'_>) -> bool {
    cur.peek_str("db.connect")
        || cur.peek_str("db.read")
        || cur.peek_str("db.write")
        || cur.peek_keyword("sleep")
        || cur.peek_keyword("fail")
}

fn parse_opspec(cur: &mut Cursor<'_>) -> Result<OpSpec, ParseError> {
    let op = if cur.try_str("db.connect") {
        cur.expect_punct('(')?;
        let service = cur.name_or_string("service")?;
        cur.expect_punct(')')?;
        AsyncOp::DbConnect { service }
    } else if cur.try_str("db.read") {
        cur.expect_punct('(')?;
        let conn = cur.ident("connection variable")?;
        cur.expect_punct(',')?;
        let key = cur.name_or_string("key")?;
        cur.expect_punct(')')?;
        AsyncOp::DbRead { conn, key }
    } else if cur.try_str("db.write") {
        cur.expect_punct('(')?;
        let conn = cur.ident("connection variable")?;
        cur.expect_punct(',')?;
        let value = parse_expr(cur)?;
        cur.expect_punct(',')?;
        let key = cur.name_or_string("key")?;
        cur.expect_punct(')')?;
        AsyncOp::DbWrite { conn, value, key }
    } else if cur.try_keyword("sleep") {
        cur.expect_punct('(')?;
        let ticks = cur.integer()? as u64;
        cur.expect_punct(')')?;
        AsyncOp::Sleep { ticks }
    } else if cur.try_keyword("fail") {
        cur.expect_punct('(')?;
        let message = cur.string_lit()?;
        cur.expect_punct(')')?;
        AsyncOp::FailWith { message }
    } else {
        return Err(cur.error("expected an async operation"));
    };

    let mut spec = OpSpec::new(op);
    while cur.try_punct('@') {
        if cur.try_keyword("latency") {
            cur.expect_punct('(')?;
            let min = cur.integer()? as u64;
            let max = if cur.try_punct(',') { cur.integer()? as u64 } else { min };
            cur.expect_punct(')')?;
            spec.latency = Some(LatencySpec { min, max });
        } else if cur.try_keyword("deadline") {
            cur.expect_punct('(')?;
            spec.deadline = Some(cur.integer()? as u64);
            cur.expect_punct(')')?;
        } else {
            return Err(cur.error("unknown attribute (expected latency or deadline)"));
        }
    }
    if let AsyncOp::Sleep { ticks } = spec.op {
        spec.latency.get_or_insert(LatencySpec::fixed(ticks));
    }
    Ok(spec)
}

fn parse_expr(cur: &mut Cursor<'_>) -> Result<Expr, ParseError> {
    let mut expr = parse_atom(cur)?;
    while cur.try_punct('.') {
        let field = cur.ident("field name")?;
        expr = Expr::Field(Box::new(expr), field);
    }
    Ok(expr)
}

fn parse_atom(cur: &mut Cursor<'_>) -> Result<Expr, ParseError> {
    if cur.peek_int() {
        let n = cur.integer()?;
        return Ok(Expr::Lit(Value::pristine(ValueKind::Int(n))));
    }
    if cur.peek_punct('"') {
        let s = cur.string_lit()?;
        return Ok(Expr::Lit(Value::pristine(ValueKind::Str(s))));
    }
    if cur.try_punct('{') {
        let mut fields = Vec::new();
        if !cur.peek_punct('}') {
            loop {
                let name = cur.ident("field name")?;
                let value = if cur.try_punct(':') {
                    parse_expr(cur)?
                } else {
                    Expr::Var(name.clone())
                };
                fields.push((name, value));
                if !cur.try_punct(',') {
                    break;
                }
            }
        }
        cur.expect_punct('}')?;
        return Ok(Expr::RecordOf(fields));
    }
    if cur.try_keyword("true") {
        return Ok(Expr::Lit(Value::pristine(ValueKind::Bool(true))));
    }
    if cur.try_keyword("false") {
        return Ok(Expr::Lit(Value::pristine(ValueKind::Bool(false))));
    }
    if cur.try_keyword("undefined") {
        return Ok(Expr::Lit(Value::pristine(ValueKind::Undefined)));
    }
    if cur.try_keyword("computeHash") {
        cur.expect_punct('(')?;
        let arg = parse_expr(cur)?;
        cur.expect_punct(')')?;
        return Ok(Expr::Apply(Builtin::ComputeHash, vec![arg]));
    }
    let name = cur.ident("expression")?;
    Ok(Expr::Var(name))
}

/// Character cursor over one source line.
struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: u32) -> Self {
        Cursor { text, pos: 0, line }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.pos + 1, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c == ' ' || c == '\t') {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek_char(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn peek_punct(&mut self, c: char) -> bool {
        self.peek_char() == Some(c)
    }

    fn try_punct(&mut self, c: char) -> bool {
        if self.peek_punct(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.try_punct(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn peek_str(&mut self, s: &str) -> bool {
        self.skip_ws();
        self.rest().starts_with(s)
    }

    fn try_str(&mut self, s: &str) -> bool {
        if self.peek_str(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect_str(&mut self, s: &str) -> Result<(), ParseError> {
        if self.try_str(s) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}`")))
        }
    }

    fn peek_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        rest.starts_with(kw)
            && !rest[kw.len()..].starts_with(|c: char| c.is_alphanumeric() || c == '_')
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.try_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let mut len = 0;
        for c in rest.chars() {
            if (len == 0 && (c.is_alphabetic() || c == '_'))
                || (len > 0 && (c.is_alphanumeric() || c == '_'))
            {
                len += c.len_utf8();
            } else {
                break;
            }
        }
        if len == 0 {
            return Err(self.error(format!("expected {what}")));
        }
        let out = rest[..len].to_string();
        self.pos += len;
        Ok(out)
    }

    fn name_or_string(&mut self, what: &str) -> Result<String, ParseError> {
        if self.peek_punct('"') {
            self.string_lit()
        } else {
            self.ident(what)
        }
    }

    fn peek_int(&mut self) -> bool {
        self.skip_ws();
        let rest = self.rest();
        rest.starts_with(|c: char| c.is_ascii_digit())
            || (rest.starts_with('-')
                && rest[1..].starts_with(|c: char| c.is_ascii_digit()))
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let mut len = 0;
        if rest.starts_with('-') {
            len = 1;
        }
        while rest[len..].starts_with(|c: char| c.is_ascii_digit()) {
            len += 1;
        }
        if len == 0 || rest[..len].ends_with('-') {
            return Err(self.error("expected an integer"));
        }
        let n: i64 = rest[..len]
            .parse()
            .map_err(|_| self.error("integer out of range"))?;
        self.pos += len;
        Ok(n)
    }

    fn string_lit(&mut self) -> Result<String, ParseError> {
        self.expect_punct('"')?;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        loop {
            match chars.next() {
                Some((i, '"')) => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                Some((_, '\\')) => match chars.next() {
                    Some((_, c @ ('"' | '\\'))) => out.push(c),
                    _ => return Err(self.error("bad escape in string literal")),
                },
                Some((_, c)) => out.push(c),
                None => return Err(self.error("unterminated string literal")),
            }
        }
    }

    /// If the input ahead is a bare identifier immediately followed by
    /// `close`, returns it without consuming anything.
    fn peek_lone_ident_before(&mut self, close: char) -> Option<String> {
        self.skip_ws();
        let saved = self.pos;
        let name = self.ident("").ok()?;
        let matches = self.peek_punct(close);
        self.pos = saved;
        if matches {
            Some(name)
        } else {
            None
        }
    }

    /// True when the input ahead looks like `name = ...` but not `name => ...`.
    fn peek_assignment(&mut self) -> bool {
        self.skip_ws();
        let saved = self.pos;
        let looks = self.ident("").is_ok() && {
            self.skip_ws();
            self.rest().starts_with('=') && !self.rest().starts_with("=>")
        };
        self.pos = saved;
        looks
    }

    fn expect_eol(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.rest().is_empty() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected trailing input: `{}`", self.rest())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs;

    #[test]
    fn running_example_labels_match_source_lines() {
        let p = parse_program(programs::RUNNING_EXAMPLE, "running_example").unwrap();
        assert_eq!(p.globals, vec!["val", "hash"]);
        assert_eq!(p.param, "event");
        assert_eq!(p.main_loc, Loc(8));
        let locs: Vec<u32> = p
            .body
            .iter()
            .filter(|c| !matches!(c, Command::Comment { .. }))
            .map(|c| c.loc().0)
            .collect();
        assert_eq!(locs, vec![9, 10, 12, 13, 14, 16, 17, 18, 18]);
        let sites: Vec<String> = p
            .body
            .iter()
            .filter_map(|c| match c {
                Command::StartAsync { loc, .. } | Command::Chain { loc, .. } => Some(loc.site()),
                _ => None,
            })
            .collect();
        assert_eq!(sites, vec!["p12", "p13", "p14", "p16", "p17", "p18"]);
    }

    #[test]
    fn empty_main_body_parses() {
        let p = parse_program("globals g\nmain(event):\n", "empty").unwrap();
        assert!(p.body.is_empty());
    }

    #[test]
    fn end_variant_program_has_combine_and_end() {
        let p = parse_program(programs::RUNNING_EXAMPLE_END, "running_example_end").unwrap();
        let combine = p.body.iter().find_map(|c| match c {
            Command::Combine { kind, sources, loc, .. } => Some((*kind, sources.clone(), *loc)),
            _ => None,
        });
        let (kind, sources, loc) = combine.expect("program should contain a combinator");
        assert_eq!(kind, CombineKind::AllSettled);
        assert_eq!(sources, vec!["pr_write", "pr_read"]);
        assert_eq!(loc, Loc(20));
        let has_end = p.body.iter().any(|c| match c {
            Command::Chain { handler, .. } => {
                handler.body.iter().any(|b| matches!(b, Command::End { .. }))
            }
            Command::End { .. } => true,
            _ => false,
        });
        assert!(has_end, "program should call end()");
    }

    #[test]
    fn respond_disambiguates_promise_names_from_values() {
        let p = parse_program("main(event):\npr <- async sleep(1)\nrespond(pr)", "t").unwrap();
        assert!(matches!(
            &p.body[1],
            Command::Respond { arg: RespondArg::Promise(n), .. } if n == "pr"
        ));
        let p = parse_program("main(event):\nrespond(event)", "t").unwrap();
        assert!(matches!(
            &p.body[0],
            Command::Respond { arg: RespondArg::Value(Expr::Var(n)), .. } if n == "event"
        ));
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = parse_program("globals a\nx = then(\n", "t").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.col > 0);
    }

    #[test]
    fn latency_and_deadline_attributes() {
        let p = parse_program(
            "main(event):\nc <- async db.connect(db) @latency(2, 5) @deadline(10)",
            "t",
        )
        .unwrap();
        match &p.body[0] {
            Command::StartAsync { op, .. } => {
                assert_eq!(op.latency, Some(LatencySpec { min: 2, max: 5 }));
                assert_eq!(op.deadline, Some(10));
            }
            other => panic!("unexpected command {other:?}"),
        }
    }

    #[test]
    fn handler_command_sequences_parse() {
        let p = parse_program(
            "main(event):\na <- async sleep(1)\nf = finally(a, () => (respond(event); end()))",
            "t",
        )
        .unwrap();
        match &p.body[1] {
            Command::Chain { handler, .. } => {
                assert_eq!(handler.body.len(), 2);
                assert!(handler.result.is_none());
                assert!(handler.param.is_none());
            }
            other => panic!("unexpected command {other:?}"),
        }
    }
}
