//! Command-line front end. The `termlab` binary is a thin wrapper around
//! [`main_with_args`]; everything here is ordinary library code so tests and
//! examples can drive it too.
//!
//! Exit codes: 0 clean, 1 usage/parse failure, 2 violations found,
//! 3 exploration incomplete.

use crate::analysis::{build_graph, detect, export_dot, Verdict};
use crate::engine::{explore, run, ExploreBounds, ExecutionTrace, ScheduleSource};

use crate::program::{parse_program, validate, Program, Severity};
use crate::programs;
use crate::semantics::SemanticsVariant;
use crate::value::{Value, ValueKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "termlab",
    about = "Deterministic laboratory for serverless function termination semantics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run a program under one execution model and print its trace.
    Run(RunArgs),
    /// Enumerate every schedule and classify the distinct outcomes.
    Explore(ExploreArgs),
    /// Build the promise graph of a run and print it as DOT.
    Graph(GraphArgs),
    /// Run the shipped programs under all four models side by side.
    Demo(DemoArgs),
    /// Run a program and print the verdict as JSON.
    Report(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Program file (.tl).
    pub program: PathBuf,
    /// Execution model: single, reuse, waitall, or decoupled.
    #[arg(long)]
    pub variant: SemanticsVariant,
    /// Event payloads as a JSON list, e.g. '[42, 112]'.
    #[arg(long, default_value = "[42]")]
    pub events: String,
    /// Seed for the pseudo-random scheduler.
    #[arg(long, conflicts_with = "script")]
    pub seed: Option<u64>,
    /// Schedule script: a JSON list of choice indices.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
    /// Verbosity: repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    /// Program file (.tl).
    pub program: PathBuf,
    /// Execution model: single, reuse, waitall, or decoupled.
    #[arg(long)]
    pub variant: SemanticsVariant,
    /// Event payloads as a JSON list.
    #[arg(long, default_value = "[42]")]
    pub events: String,
    #[arg(long, default_value_t = 100_000)]
    pub max_states: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_depth: usize,
    /// Directory to write one witness schedule per outcome class.
    #[arg(long)]
    pub witness_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Program file (.tl).
    pub program: PathBuf,
    /// Execution model: single, reuse, waitall, or decoupled.
    #[arg(long, default_value = "single")]
    pub variant: SemanticsVariant,
    #[arg(long, default_value = "[42]")]
    pub events: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Keep mid-chain value transformers instead of splicing them out.
    #[arg(long)]
    pub no_elide: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

/// Parses `args` (excluding the binary name is fine — clap handles both) and
/// runs the selected command, writing to `out`. Returns the exit code.
pub fn main_with_args<W: std::io::Write>(args: &[String], out: &mut W) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(out, "{e}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        CliCommand::Run(args) => cmd_run(&args, out),
        CliCommand::Explore(args) => cmd_explore(&args, out),
        CliCommand::Graph(args) => cmd_graph(&args, out),
        CliCommand::Demo(args) => cmd_demo(&args, out),
        CliCommand::Report(args) => cmd_report(&args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            EXIT_USAGE
        }
    }
}

type CmdResult = Result<i32, Box<dyn std::error::Error>>;

fn load_program(path: &Path) -> Result<Program, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "program".to_string());
    Ok(parse_program(&text, &name)?)
}

fn parse_events(text: &str) -> Result<Vec<Value>, Box<dyn std::error::Error>> {
    let json: serde_json::Value = serde_json::from_str(text)?;
    let items = json
        .as_array()
        .ok_or("events must be a JSON list, e.g. [42, 112]")?;
    items.iter().map(json_to_value).collect()
}

fn json_to_value(j: &serde_json::Value) -> Result<Value, Box<dyn std::error::Error>> {
    Ok(match j {
        serde_json::Value::Null => Value::pristine(ValueKind::Undefined),
        serde_json::Value::Bool(b) => Value::bool(*b),
        serde_json::Value::Number(n) => {
            Value::int(n.as_i64().ok_or("event numbers must be integers")?)
        }
        serde_json::Value::String(s) => Value::str(s.clone()),
        serde_json::Value::Array(items) => {
            Value::list(items.iter().map(json_to_value).collect::<Result<_, _>>()?)
        }
        serde_json::Value::Object(fields) => Value::record(
            fields
                .iter()
                .map(|(k, v)| Ok((k.clone(), json_to_value(v)?)))
                .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?,
        ),
    })
}

fn schedule_from(
    seed: Option<u64>,
    script: Option<&PathBuf>,
) -> Result<ScheduleSource, Box<dyn std::error::Error>> {
    match script {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let choices: Vec<usize> = serde_json::from_str(&text)?;
            Ok(ScheduleSource::scripted(choices))
        }
        None => Ok(ScheduleSource::seeded(seed.unwrap_or(0))),
    }
}

fn exit_code_for(verdict: &Verdict) -> i32 {
    if verdict.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

fn run_once(
    args: &RunArgs,
) -> Result<(ExecutionTrace, Verdict), Box<dyn std::error::Error>> {
    let program = load_program(&args.program)?;
    let events = parse_events(&args.events)?;
    let diags = validate(&program, args.variant);
    if diags.iter().any(|d| d.severity == Severity::Error) {
        let text: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(text.join("\n").into());
    }
    let source = schedule_from(args.seed, args.script.as_ref())?;
    let trace = run(&program, &events, args.variant, &source)?;
    let verdict = detect(&trace, args.variant);
    Ok((trace, verdict))
}

fn cmd_run<W: std::io::Write>(args: &RunArgs, out: &mut W) -> CmdResult {
    let (trace, verdict) = run_once(args)?;
    match args.format {
        OutputFormat::Table => {
            write!(out, "{}", render_table(&trace))?;
            writeln!(out)?;
            writeln!(out, "verdict: {}", verdict.summary())?;
            if args.verbose > 0 {
                for d in &verdict.diagnostics {
                    writeln!(out, "note: {d}")?;
                }
            }
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Output<'a> {
                trace: &'a ExecutionTrace,
                verdict: &'a Verdict,
            }
            writeln!(
                out,
                "{}",
                crate::canonical::to_canonical_json(&Output { trace: &trace, verdict: &verdict })
            )?;
        }
    }
    Ok(exit_code_for(&verdict))
}

fn cmd_report<W: std::io::Write>(args: &RunArgs, out: &mut W) -> CmdResult {
    let (_, verdict) = run_once(args)?;
    writeln!(out, "{}", crate::canonical::to_canonical_json(&verdict))?;
    Ok(exit_code_for(&verdict))
}

fn cmd_explore<W: std::io::Write>(args: &ExploreArgs, out: &mut W) -> CmdResult {
    let program = load_program(&args.program)?;
    let events = parse_events(&args.events)?;
    let bounds = ExploreBounds { max_depth: args.max_depth, max_states: args.max_states };
    let report = explore(&program, &events, args.variant, bounds)?;

    let mut any_violation = false;
    let mut classes = Vec::new();
    for (i, class) in report.outcome_classes().enumerate() {
        let trace = run(
            &program,
            &events,
            args.variant,
            &ScheduleSource::scripted(class.witness_schedule.clone()),
        )?;
        let verdict = detect(&trace, args.variant);
        any_violation |= !verdict.is_empty();
        if let Some(dir) = &args.witness_dir {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("outcome_{i}.sched"));
            fs::write(&path, serde_json::to_string(&class.witness_schedule)?)?;
        }
        classes.push((class, verdict));
    }

    match args.format {
        OutputFormat::Table => {
            writeln!(
                out,
                "{} outcome class(es) over {} state(s){}",
                classes.len(),
                report.states_explored,
                if report.complete { "" } else { " (incomplete)" }
            )?;
            for (i, (class, verdict)) in classes.iter().enumerate() {
                writeln!(out, "outcome {i}: {} terminal state(s)", class.terminal_states)?;
                let db = if class.outcome.db.is_empty() {
                    "(empty)".to_string()
                } else {
                    class
                        .outcome
                        .db
                        .iter()
                        .map(|(k, v)| format!("{k} = {v}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                writeln!(out, "  db: {db}")?;
                let residual = if class.outcome.residual.is_empty() {
                    "(none)".to_string()
                } else {
                    class.outcome.residual.join(", ")
                };
                writeln!(out, "  residual: {residual}")?;
                for (event, value) in &class.outcome.responses {
                    writeln!(out, "  response e{event}: {value}")?;
                }
                writeln!(out, "  verdict: {}", verdict.summary())?;
                writeln!(out, "  witness: {:?}", class.witness_schedule)?;
            }
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct ClassOut<'a> {
                outcome: &'a crate::engine::OutcomeData,
                terminal_states: usize,
                witness_schedule: &'a [usize],
                verdict: &'a Verdict,
            }
            #[derive(Serialize)]
            struct Output<'a> {
                states_explored: usize,
                complete: bool,
                classes: Vec<ClassOut<'a>>,
            }
            let payload = Output {
                states_explored: report.states_explored,
                complete: report.complete,
                classes: classes
                    .iter()
                    .map(|(c, v)| ClassOut {
                        outcome: &c.outcome,
                        terminal_states: c.terminal_states,
                        witness_schedule: &c.witness_schedule,
                        verdict: v,
                    })
                    .collect(),
            };
            writeln!(out, "{}", crate::canonical::to_canonical_json(&payload))?;
        }
    }

    if !report.complete {
        return Ok(EXIT_INCOMPLETE);
    }
    Ok(if any_violation { EXIT_VIOLATIONS } else { EXIT_OK })
}

fn cmd_graph<W: std::io::Write>(args: &GraphArgs, out: &mut W) -> CmdResult {
    let program = load_program(&args.program)?;
    let events = parse_events(&args.events)?;
    let source = schedule_from(args.seed, args.script.as_ref())?;
    let trace = run(&program, &events, args.variant, &source)?;
    let graph = build_graph(&trace);
    write!(out, "{}", export_dot(&graph, !args.no_elide))?;
    Ok(EXIT_OK)
}

/// Renders a trace in the six-column table layout.
pub fn render_table(trace: &ExecutionTrace) -> String {
    let mut rows: Vec<[String; 6]> = vec![[
        "#".into(),
        "loc".into(),
        "command".into(),
        "state".into(),
        "unresolved promises".into(),
        "comment".into(),
    ]];
    for s in &trace.steps {
        let state = s
            .state
            .iter()
            .map(|(k, v)| format!("{k} -> {v}"))
            .collect::<Vec<_>>()
            .join("; ");
        let unresolved = if s.unresolved.is_empty() {
            String::new()
        } else {
            format!("{{{}}}", s.unresolved.join(", "))
        };
        rows.push([
            s.index.to_string(),
            s.loc.clone(),
            s.command.clone(),
            state,
            unresolved,
            s.comment.clone(),
        ]);
    }
    let mut widths = [0usize; 6];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (ri, row) in rows.iter().enumerate() {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            let pad = widths[i].saturating_sub(cell.chars().count());
            write!(line, "{}{} ", cell, " ".repeat(pad)).unwrap();
            if i < 5 {
                line.push_str("| ");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if ri == 0 {
            let total: usize = widths.iter().sum::<usize>() + 3 * 6 + 1;
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

// ---- demo -------------------------------------------------------------------

#[derive(Serialize)]
struct DemoRow {
    variant: String,
    program: String,
    broken_promises: Vec<String>,
    stale_writes: Vec<String>,
    interference: Vec<String>,
    db: Vec<String>,
    note: String,
}

fn cmd_demo<W: std::io::Write>(args: &DemoArgs, out: &mut W) -> CmdResult {
    let running = programs::running_example();
    let end_version = programs::running_example_end();
    let one = [Value::int(42)];
    let two = [Value::int(42), Value::int(112)];

    let mut matrix = Vec::new();

    // Single execution, racy schedule: the write chain is left behind.
    let t1 = run(
        &running,
        &one,
        SemanticsVariant::SingleExecution,
        &ScheduleSource::scripted(programs::TABLE1_SCHEDULE.to_vec()),
    )?;
    let v1 = detect(&t1, SemanticsVariant::SingleExecution);
    matrix.push(build_row(
        SemanticsVariant::SingleExecution,
        &running.name,
        &t1,
        &v1,
        "responding terminates the function; the db write never runs".into(),
    ));

    // Function reuse across two events: the leftover chain writes stale data.
    let t3 = run(
        &running,
        &two,
        SemanticsVariant::FunctionReuse,
        &ScheduleSource::scripted(programs::TABLE3_SCHEDULE.to_vec()),
    )?;
    let v3 = detect(&t3, SemanticsVariant::FunctionReuse);
    matrix.push(build_row(
        SemanticsVariant::FunctionReuse,
        &running.name,
        &t3,
        &v3,
        "the carried-over chain runs during the next event and mixes state".into(),
    ));

    // Waiting for all promises before responding: correct but slower.
    let tw = run(
        &running,
        &one,
        SemanticsVariant::WaitAllOnRespond,
        &ScheduleSource::scripted(programs::TABLE1_SCHEDULE.to_vec()),
    )?;
    let vw = detect(&tw, SemanticsVariant::WaitAllOnRespond);
    let ready = tw
        .steps
        .iter()
        .position(|s| s.comment == "response ready")
        .unwrap_or(0);
    let produced = tw.response_step(tw.events_started[0].0).unwrap_or(ready);
    matrix.push(build_row(
        SemanticsVariant::WaitAllOnRespond,
        &running.name,
        &tw,
        &vw,
        format!(
            "correct, but the response waited for every promise \
             (ready at row {ready}, sent at row {produced})"
        ),
    ));

    // Decoupled respond/end on the restructured program: correct and prompt.
    let td = run(
        &end_version,
        &one,
        SemanticsVariant::DecoupledEnd,
        &ScheduleSource::seeded(0),
    )?;
    let vd = detect(&td, SemanticsVariant::DecoupledEnd);
    matrix.push(build_row(
        SemanticsVariant::DecoupledEnd,
        &end_version.name,
        &td,
        &vd,
        "the response is sent immediately; end() waits for the async work".into(),
    ));

    match args.format {
        OutputFormat::Json => {
            writeln!(out, "{}", crate::canonical::to_canonical_json(&matrix))?;
        }
        OutputFormat::Table => {
            writeln!(out, "one write racing one response, under four termination models\n")?;
            for row in &matrix {
                let status = if row.broken_promises.is_empty()
                    && row.stale_writes.is_empty()
                    && row.interference.is_empty()
                {
                    "ok"
                } else {
                    "VIOLATION"
                };
                writeln!(out, "[{status}] {} on {}", row.variant, row.program)?;
                if !row.broken_promises.is_empty() {
                    writeln!(out, "    broken promises: {}", row.broken_promises.join(", "))?;
                }
                if !row.interference.is_empty() {
                    writeln!(out, "    interference: {}", row.interference.join(", "))?;
                }
                if !row.stale_writes.is_empty() {
                    writeln!(out, "    stale writes: {}", row.stale_writes.join(", "))?;
                }
                let db =
                    if row.db.is_empty() { "(empty)".to_string() } else { row.db.join(", ") };
                writeln!(out, "    db at end: {db}")?;
                writeln!(out, "    {}", row.note)?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn build_row(
    variant: SemanticsVariant,
    program: &str,
    trace: &ExecutionTrace,
    verdict: &Verdict,
    note: String,
) -> DemoRow {
    DemoRow {
        variant: variant.to_string(),
        program: program.to_string(),
        broken_promises: verdict.broken_promises.iter().map(|b| b.site.clone()).collect(),
        stale_writes: verdict
            .stale_writes
            .iter()
            .map(|s| format!("{} = {}", s.key, s.value))
            .collect(),
        interference: verdict.interference.iter().map(|i| i.site.clone()).collect(),
        db: trace.db_final.iter().map(|(k, v)| format!("{k} = {v}")).collect(),
        note,
    }
}

