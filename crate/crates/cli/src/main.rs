use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apricot::analyzer::{check, flatten, Checked, HybridModel};
use apricot::diag::{Diagnostic, SourceMap};
use apricot::eval::{Evaluator, ExternalFn, Externals};
use apricot::parser::parse_source;
use apricot::sim::trace::{column_stats, num};
use apricot::sim::{explore, EventKind, Format, Policy, SimConfig, SimError, Simulator, Trace};
use apricot::sos::INTERPRETER_STACK;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_PARSE: u8 = 1;
const EXIT_CONFORMANCE: u8 = 2;
const EXIT_SIM: u8 = 3;
const EXIT_USAGE: u8 = 64;

/// Check, simulate and explore Apricot hybrid-system models.
#[derive(Parser, Debug)]
#[command(name = "apricot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and check models; report diagnostics.
    Check(CheckArgs),
    /// Simulate a system and write its trace.
    Run(RunArgs),
    /// Enumerate runs up to the given budgets.
    Explore(ExploreArgs),
    /// Extract columns or statistics from a trace file.
    Trace(TraceArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model files, concatenated in the given order.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// External function binding such as `Resiliency/3=k*mass*abs(velocity)`.
    #[arg(long = "define", value_name = "NAME/N=EXPR")]
    defines: Vec<String>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report_format: ReportFormat,
    /// More output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// System class to simulate when the inputs declare several.
    #[arg(long)]
    system: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1e-9)]
    event_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    value_tol: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Eager)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write every discrete step with its annotated prefix to this file.
    #[arg(long, value_name = "FILE")]
    step_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Jumps allowed at one instant before the run is stopped.
    #[arg(long, default_value_t = 16)]
    max_jumps: usize,
    /// Trace file; CSV also writes `<stem>.events.csv` next to it.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args, Debug)]
struct ExploreArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Jumps allowed along one branch.
    #[arg(long, default_value_t = 8)]
    max_jumps: usize,
    /// Leaves allowed in the tree.
    #[arg(long, default_value_t = 8)]
    max_branches: usize,
    /// Directory for `tree.jsonl` and the leaf traces.
    #[arg(short, long, default_value = "explore")]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct TraceArgs {
    file: PathBuf,
    /// Comma-separated columns to print, e.g. `time,ball.height`.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    /// Per-column min/max/mean and the event table.
    #[arg(long)]
    stats: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum PolicyArg {
    Eager,
    Lazy,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

/// Exit code plus what to print on stderr.
struct Failure {
    code: u8,
    lines: Vec<String>,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, lines: vec![format!("error: {}", msg.into())] }
    }
}

type CResult<T> = Result<T, Failure>;

struct Reporter {
    map: SourceMap,
    format: ReportFormat,
    color: bool,
}

impl Reporter {
    fn render(&self, d: &Diagnostic) -> String {
        match self.format {
            ReportFormat::Text if d.span.line == 0 => format!("{}: [{}] {}", d.severity, d.rule, d.message),
            ReportFormat::Text => self.map.render(d, self.color),
            ReportFormat::Json => self.map.render_json(d),
        }
    }

    fn fail(&self, code: u8, ds: &[Diagnostic]) -> Failure {
        Failure { code, lines: ds.iter().map(|d| self.render(d)).collect() }
    }
}

struct Loaded {
    checked: Checked,
    eval: Evaluator,
    reporter: Reporter,
}

fn color_enabled() -> bool {
    std::env::var("APRICOT_COLOR").map(|v| v == "1").unwrap_or(false)
}

fn load(args: &ModelArgs) -> CResult<Loaded> {
    let mut externals = Externals::new();
    for d in &args.defines {
        externals.insert(ExternalFn::parse(d).map_err(|e| Failure::usage(format!("--define {d}: {e}")))?);
    }
    let mut map = SourceMap::default();
    let mut unit = String::new();
    for f in &args.files {
        let text = fs::read_to_string(f).map_err(|e| Failure::usage(format!("{}: {e}", f.display())))?;
        map.push(f.display().to_string(), &text);
        unit.push_str(&text);
        if !text.ends_with('\n') {
            unit.push('\n');
        }
    }
    let reporter = Reporter { map, format: args.report_format, color: color_enabled() };
    let parsed = parse_source(&unit).map_err(|ds| reporter.fail(EXIT_PARSE, &ds))?;
    let checked = check(&parsed, &externals).map_err(|ds| reporter.fail(EXIT_CONFORMANCE, &ds))?;
    if args.verbose > 0 {
        for w in &checked.warnings {
            eprintln!("{}", reporter.render(w));
        }
    }
    Ok(Loaded { checked, eval: Evaluator::new(externals), reporter })
}

fn model(l: &Loaded, system: Option<&str>) -> CResult<HybridModel> {
    let systems = l.checked.systems();
    if system.is_none() && systems.len() > 1 {
        return Err(Failure::usage(format!("several System classes ({}); pick one with --system", systems.join(", "))));
    }
    flatten(&l.checked, &l.eval, system).map_err(|e| l.reporter.fail(EXIT_CONFORMANCE, &[e.to_diagnostic()]))
}

fn sim_config(a: &SimArgs, max_jumps_per_instant: usize, policy: Policy) -> SimConfig {
    SimConfig {
        t_end: a.t_end,
        dt: a.dt,
        event_tol: a.event_tol,
        value_tol: a.value_tol,
        policy,
        max_jumps_per_instant,
        step_log: a.step_log.is_some(),
    }
}

fn sim_failure(l: &Loaded, e: SimError) -> Failure {
    let code = if matches!(e, SimError::Config(_)) { EXIT_USAGE } else { EXIT_SIM };
    l.reporter.fail(code, &[e.to_diagnostic()])
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn cmd_check(a: &CheckArgs) -> CResult<()> {
    let l = load(&a.model)?;
    for w in &l.checked.warnings {
        println!("{}", l.reporter.render(w));
    }
    if a.model.report_format == ReportFormat::Text {
        let systems = l.checked.systems();
        println!("ok: {} classes, {} warnings, systems: {}", l.checked.table.classes.len(), l.checked.warnings.len(), systems.join(", "));
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> CResult<()> {
    let l = load(&a.model)?;
    let m = model(&l, a.sim.system.as_deref())?;
    let policy = match a.sim.policy {
        PolicyArg::Eager => Policy::Eager,
        PolicyArg::Lazy => Policy::Lazy,
        PolicyArg::Random => Policy::Random { seed: a.sim.seed },
    };
    let cfg = sim_config(&a.sim, a.max_jumps, policy);
    let sim = Simulator::new(&m, &l.checked.table, &l.eval, cfg).map_err(|e| sim_failure(&l, e))?;
    let out = sim.simulate().map_err(|e| sim_failure(&l, e))?;
    let format = a.format.map(Format::from).or_else(|| a.output.as_deref().map(Format::from_path)).unwrap_or(Format::Csv);
    let path = a.output.clone().unwrap_or_else(|| PathBuf::from(if format == Format::Csv { "trace.csv" } else { "trace.jsonl" }));
    out.trace.save(&path, format).map_err(|e| io_failure(&path, e))?;
    if let Some(p) = &a.sim.step_log {
        let text: String = out.log.iter().map(|r| format!("{r}\n")).collect();
        fs::write(p, text).map_err(|e| io_failure(p, e))?;
    }
    summarize(&out.trace, &path);
    Ok(())
}

fn summarize(tr: &Trace, path: &Path) {
    let count = |k| tr.events_of(k).count();
    println!("trace: {}", path.display());
    println!("samples: {}", tr.samples.len());
    println!(
        "events: {} (jumps {}, sync-jumps {}, flow-stops {}, invariant-hits {})",
        tr.events.len(),
        count(EventKind::Jump),
        count(EventKind::SyncJump),
        count(EventKind::FlowStop),
        count(EventKind::InvariantHit)
    );
    println!("termination: {}", tr.termination.map_or("none", |t| t.as_str()));
    if let Some(last) = tr.samples.last() {
        println!("final time: {}", num(last.time));
        for (c, v) in tr.columns.iter().zip(&last.values) {
            println!("  {c} = {}", v.map_or("null".into(), num));
        }
        for (c, m) in tr.components.iter().zip(&last.modes) {
            println!("  {c} @ {m}");
        }
    }
}

fn cmd_explore(a: &ExploreArgs) -> CResult<()> {
    let l = load(&a.model)?;
    let m = model(&l, a.sim.system.as_deref())?;
    let policy = Policy::Explore { max_branches: a.max_branches, max_jumps: a.max_jumps };
    let cfg = sim_config(&a.sim, SimConfig::default().max_jumps_per_instant, policy);
    let sim = Simulator::new(&m, &l.checked.table, &l.eval, cfg).map_err(|e| sim_failure(&l, e))?;
    let tree = explore(&sim, a.max_branches, a.max_jumps).map_err(|e| sim_failure(&l, e))?;
    let dir = &a.output;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let tree_path = dir.join("tree.jsonl");
    let mut buf = Vec::new();
    tree.write_jsonl(&mut buf).map_err(|e| io_failure(&tree_path, e))?;
    fs::write(&tree_path, buf).map_err(|e| io_failure(&tree_path, e))?;
    let ext = if a.format == FormatArg::Csv { "csv" } else { "jsonl" };
    for (i, leaf) in tree.leaves.iter().enumerate() {
        let p = dir.join(format!("leaf-{i}.{ext}"));
        leaf.trace.save(&p, a.format.into()).map_err(|e| io_failure(&p, e))?;
    }
    println!("tree: {}", tree_path.display());
    println!("nodes: {}", tree.nodes.len());
    println!("branches: {}", tree.leaves.len());
    println!("truncated: {}", tree.truncated);
    Ok(())
}

/// Exact column name, or the unique column ending in `.name`.
fn resolve_column(tr: &Trace, name: &str) -> CResult<String> {
    if name == "time" || tr.column_index(name).is_some() {
        return Ok(name.to_string());
    }
    let suffix = format!(".{name}");
    let hits: Vec<&String> = tr.columns.iter().filter(|c| c.ends_with(&suffix)).collect();
    match hits.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(Failure::usage(format!("unknown column `{name}`"))),
        many => Err(Failure::usage(format!(
            "column `{name}` is ambiguous: {}",
            many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn cmd_trace(a: &TraceArgs) -> CResult<()> {
    if !a.file.exists() {
        return Err(Failure::usage(format!("{}: no such file", a.file.display())));
    }
    let tr = Trace::load(&a.file).map_err(|e| Failure { code: EXIT_PARSE, lines: vec![format!("error: {e}")] })?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let w = |out: &mut dyn Write, s: String| {
        writeln!(out, "{s}").map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe => Failure { code: 0, lines: vec![] },
            _ => Failure::usage(e.to_string()),
        })
    };
    if !a.columns.is_empty() {
        let names = a.columns.iter().map(|c| resolve_column(&tr, c)).collect::<CResult<Vec<_>>>()?;
        let cols: Vec<Vec<Option<f64>>> = names.iter().map(|n| tr.column(n).unwrap_or_default()).collect();
        w(&mut out, names.join(","))?;
        for i in 0..tr.samples.len() {
            let row: Vec<String> = cols.iter().map(|c| c[i].map(num).unwrap_or_default()).collect();
            w(&mut out, row.join(","))?;
        }
    }
    if a.stats || a.columns.is_empty() {
        w(&mut out, format!("samples: {}", tr.samples.len()))?;
        w(&mut out, format!("{:<28} {:>8} {:>24} {:>24} {:>24}", "column", "n", "min", "max", "mean"))?;
        let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), num);
        let names = std::iter::once("time".to_string()).chain(tr.columns.iter().cloned());
        for name in names {
            let s = column_stats(&name, &tr.column(&name).unwrap_or_default());
            w(&mut out, format!("{:<28} {:>8} {:>24} {:>24} {:>24}", s.name, s.n, fmt(s.min), fmt(s.max), fmt(s.mean)))?;
        }
        w(&mut out, format!("events: {}", tr.events.len()))?;
        for e in &tr.events {
            w(&mut out, format!("{} {:<14} {:<28} {}", num(e.time), e.kind.as_str(), e.name, e.prefix))?;
        }
        if let Some(t) = tr.termination {
            w(&mut out, format!("termination: {}", t.as_str()))?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CResult<()> {
    match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Run(a) => cmd_run(a),
        Command::Explore(a) => cmd_explore(a),
        Command::Trace(a) => cmd_trace(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // Deep call chains in models need more stack than the main thread has.
    let worker = std::thread::Builder::new().stack_size(INTERPRETER_STACK).spawn(move || dispatch(cli));
    let result = match worker.map(|h| h.join()) {
        Ok(Ok(r)) => r,
        _ => Err(Failure { code: EXIT_SIM, lines: vec!["error: interpreter thread failed".into()] }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            for l in &f.lines {
                eprintln!("{l}");
            }
            ExitCode::from(f.code)
        }
    }
}
