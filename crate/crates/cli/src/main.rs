//! `pcl`: parse protocols, enumerate their runs, check axioms and
//! invariants against them, and run the built-in experiments.
//!
//! Exit status: 0 when the outcome is the expected one (a check holds
//! within bounds, an experiment agrees with its expectation), 1 when it
//! is not, 2 on usage or input errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pcl_core::bench::{self, case_names, HonestyReport, Outcome, ReproOptions, Verdict};
use pcl_core::engine::enumerate_runs;
use pcl_core::logic::{parse_schemas, Schema, SchemaKind};
use pcl_core::protocol::{basic_sequences, parse_protocol, Protocol};
use pcl_core::{Bounds, KeyScheme, SemanticsConfig};

#[derive(Parser, Debug)]
#[command(name = "pcl", version, about = "Bounded checking of protocol logic axioms over Dolev-Yao runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a protocol and its basic-sequence decomposition.
    Parse { file: PathBuf },
    /// Enumerate the runs of a protocol within bounds.
    Runs {
        file: PathBuf,
        /// Stop after this many runs.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Check a catalogue entry or the schemas of a file against a protocol.
    Check {
        file: PathBuf,
        /// Catalogue name, e.g. VER or GAMMA1.
        #[arg(long, conflicts_with = "schema", required_unless_present = "schema")]
        axiom: Option<String>,
        /// File of `axiom`/`invariant` declarations; names may refer to the protocol's constants.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Check per basic sequence instead of per run.
        #[arg(long)]
        honesty: bool,
    },
    /// List the axiom and invariant catalogue.
    Axioms,
    /// Run a built-in experiment.
    Repro {
        /// Experiment name; omit with --list.
        #[arg(required_unless_present = "list")]
        case: Option<String>,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Keys {
    Sym,
    Asym,
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    #[value(alias = "structured", alias = "json-like")]
    Json,
}

#[derive(Args, Debug)]
struct Opts {
    /// Enforce variable sorts when matching (default).
    #[arg(long, global = true, overrides_with = "untyped")]
    typed: bool,
    /// Let any variable bind any term.
    #[arg(long, global = true, env = "PCL_UNTYPED")]
    untyped: bool,
    #[arg(long, global = true, value_enum, default_value = "off", env = "PCL_DH_THEORY")]
    dh_theory: Switch,
    #[arg(long, global = true, value_enum, default_value = "split", env = "PCL_KEYS")]
    keys: Keys,
    /// In per-sequence checking, run each basic sequence after its predecessors.
    #[arg(long, global = true, value_enum, default_value = "off", env = "PCL_PRECEDENCE")]
    precedence: Switch,
    /// Maximum threads per role.
    #[arg(long, global = true, env = "PCL_THREADS")]
    threads: Option<usize>,
    /// Maximum run length in events.
    #[arg(long, global = true, env = "PCL_LENGTH")]
    length: Option<usize>,
    /// Maximum intruder construction depth.
    #[arg(long, global = true, env = "PCL_DEPTH")]
    depth: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "text", env = "PCL_FORMAT")]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, global = true, env = "PCL_OUTPUT")]
    output: Option<PathBuf>,
    /// Worker threads for checking runs; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, env = "PCL_WORKERS")]
    workers: usize,
}

impl Opts {
    fn config(&self) -> SemanticsConfig {
        let mut c = SemanticsConfig::default()
            .with_dh_theory(self.dh_theory.on())
            .with_precedence(self.precedence.on())
            .with_keys(match self.keys {
                Keys::Sym => KeyScheme::SymmetricOnly,
                Keys::Asym => KeyScheme::AsymmetricOnly,
                Keys::Split => KeyScheme::Split,
            });
        if self.untyped && !self.typed {
            c = c.untyped();
        }
        c
    }

    fn explicit_bounds(&self) -> bool {
        self.threads.is_some() || self.length.is_some() || self.depth.is_some()
    }

    fn bounds(&self, base: Bounds) -> Result<Bounds> {
        let b = Bounds::new(
            self.threads.unwrap_or(base.max_threads_per_role),
            self.length.unwrap_or(base.max_run_length),
            self.depth.unwrap_or(base.max_intruder_depth),
        );
        b.validate()?;
        Ok(b)
    }

    fn emit(&self, text: String, json: serde_json::Value) -> Result<()> {
        let body = match self.format {
            Format::Text => text,
            Format::Json => serde_json::to_string_pretty(&json)? + "\n",
        };
        match &self.output {
            Some(path) => {
                fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{body}"),
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(path: &Path) -> Result<Protocol> {
    let src = read(path)?;
    parse_protocol(&src).with_context(|| format!("in {}", path.display()))
}

fn cmd_parse(opts: &Opts, file: &Path) -> Result<bool> {
    let p = load(file)?;
    let mut text = format!("{p}\n");
    let mut roles = Vec::new();
    let mut n = 0;
    for role in &p.roles {
        let seqs = basic_sequences(role);
        for bs in &seqs {
            n += 1;
            text.push_str(&format!("BS{n} = {} (actions {}..{})\n", bs.label(), bs.start, bs.start + bs.actions.len()));
            for a in &bs.actions {
                text.push_str(&format!("    {a}\n"));
            }
        }
        roles.push(json!({
            "name": &*role.name,
            "params": role.params.iter().map(|v| v.name.to_string()).collect::<Vec<_>>(),
            "basic_sequences": seqs,
        }));
    }
    opts.emit(text, json!({ "protocol": &*p.name, "source": p.to_string(), "roles": roles }))?;
    Ok(true)
}

fn cmd_runs(opts: &Opts, file: &Path, limit: Option<usize>) -> Result<bool> {
    let p = load(file)?;
    let runs = enumerate_runs(&p, opts.bounds(Bounds::default())?, opts.config())?;
    let mut out: Box<dyn Write> = match &opts.output {
        Some(path) => Box::new(fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut count = 0;
    for (i, run) in runs.take(limit.unwrap_or(usize::MAX)).enumerate() {
        count += 1;
        match opts.format {
            Format::Text => writeln!(out, "run {i} ({} events)\n{}", run.len(), run.trace())?,
            Format::Json => writeln!(out, "{}", serde_json::to_string(&run)?)?,
        }
    }
    if opts.format == Format::Text {
        writeln!(out, "{count} runs")?;
    }
    Ok(true)
}

fn check_one(opts: &Opts, p: &Protocol, schema: &Schema, honesty: bool) -> Result<(bool, String, serde_json::Value)> {
    let bounds = opts.bounds(Bounds::default())?;
    let config = opts.config();
    if honesty {
        if schema.kind != SchemaKind::Invariant {
            bail!("`{}` is an axiom; per-sequence checking applies to invariants", schema.name);
        }
        let r: HonestyReport = bench::check_invariant_honesty_mode(p, schema, bounds, config)?;
        let ok = r.sequences.values().all(Verdict::holds);
        return Ok((ok, r.render_text(), serde_json::to_value(&r)?));
    }
    let v = bench::check_schema(p, schema, bounds, config, opts.workers)?;
    Ok((v.outcome == Outcome::HoldsWithinBounds, v.render_text(), serde_json::to_value(&v)?))
}

fn cmd_check(opts: &Opts, file: &Path, axiom: Option<&str>, schema: Option<&Path>, honesty: bool) -> Result<bool> {
    let p = load(file)?;
    let schemas: Vec<Schema> = match (axiom, schema) {
        (Some(name), _) => {
            let entry = bench::lookup(name)?;
            entry.check_features(&opts.config())?;
            vec![entry.schema().clone()]
        }
        (None, Some(path)) => {
            let src = read(path)?;
            let s = parse_schemas(&src, Some(&p)).with_context(|| format!("in {}", path.display()))?;
            if s.is_empty() {
                bail!("{} declares no axioms or invariants", path.display());
            }
            s
        }
        (None, None) => bail!("give --axiom NAME or --schema FILE"),
    };
    let (mut all_ok, mut text, mut values) = (true, String::new(), Vec::new());
    for s in &schemas {
        let (ok, t, v) = check_one(opts, &p, s, honesty)?;
        all_ok &= ok;
        text.push_str(&t);
        values.push(v);
    }
    let json = if values.len() == 1 { values.pop().unwrap() } else { values.into() };
    opts.emit(text, json)?;
    Ok(all_ok)
}

fn cmd_axioms(opts: &Opts) -> Result<bool> {
    let mut text = String::new();
    let mut rows = Vec::new();
    for e in bench::catalogue() {
        let kind = match e.kind() {
            SchemaKind::Axiom => "axiom",
            SchemaKind::Invariant => "invariant",
        };
        let dh = if e.requires_dh { " (needs --dh-theory on)" } else { "" };
        text.push_str(&format!("{:<12} {kind:<9} {}{dh}\n    {}\n", e.name, e.summary, e.schema()));
        rows.push(json!({
            "name": e.name,
            "kind": kind,
            "requires_dh": e.requires_dh,
            "summary": e.summary,
            "formula": e.schema().to_string(),
        }));
    }
    opts.emit(text, rows.into())?;
    Ok(true)
}

fn cmd_repro(opts: &Opts, case: Option<&str>, list: bool) -> Result<bool> {
    if list {
        let text: String = case_names().iter().map(|(n, e)| format!("{n:<16} {e}\n")).collect();
        let json: Vec<_> = case_names().iter().map(|(n, e)| json!({ "case": n, "expected": e })).collect();
        opts.emit(text, json.into())?;
        return Ok(true);
    }
    let case = case.expect("clap requires a case without --list");
    let bounds = if opts.explicit_bounds() {
        Some(opts.bounds(Bounds::default())?)
    } else {
        None
    };
    let r = bench::reproduce(case, ReproOptions { bounds, workers: opts.workers })
        .map_err(|e| match e {
            pcl_core::Error::UnknownCase(_) => anyhow::anyhow!(
                "{e}; known cases: {}",
                case_names().iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ),
            other => other.into(),
        })?;
    opts.emit(r.render_text(), serde_json::to_value(&r)?)?;
    Ok(r.agrees)
}

fn run(cli: &Cli) -> Result<bool> {
    let o = &cli.opts;
    if o.workers == 0 {
        bail!("--workers must be at least 1");
    }
    match &cli.command {
        Command::Parse { file } => cmd_parse(o, file),
        Command::Runs { file, limit } => cmd_runs(o, file, *limit),
        Command::Check { file, axiom, schema, honesty } => {
            cmd_check(o, file, axiom.as_deref(), schema.as_deref(), *honesty)
        }
        Command::Axioms => cmd_axioms(o),
        Command::Repro { case, list } => cmd_repro(o, case.as_deref(), *list),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
