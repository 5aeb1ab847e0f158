//! The `dpcl` command line. Exit codes: 0 ok, 1 domain error (diagnostics,
//! failed step, unknown transformation), 2 system error (I/O, bad usage).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::http;
use crate::interpreter::{Engine, Scenario};
use crate::model::{pretty_print, InstitutionalState};
use crate::parser::{self, Diagnostics};
use crate::repl::{render_position, Repl};
use crate::rewriter::Registry;
use crate::session::SessionStore;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_SYSTEM: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dpcl", version, about = "Check, run and rewrite DPCL programs")]
pub struct Cli {
    /// Where sessions and programs are persisted. In memory when unset.
    #[arg(long, env = "DPCL_SESSIONS_DIR", global = true)]
    pub sessions_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a program.
    Check { path: PathBuf },
    /// Run a scenario against a program.
    Run {
        program: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Write the trace JSON here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Summary)]
        format: Format,
    },
    /// Apply a transformation at every applicable site.
    Rewrite {
        program: PathBuf,
        #[arg(long)]
        transform: String,
        #[arg(long, conflicts_with = "out")]
        in_place: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Step a session interactively.
    Repl { program: PathBuf },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = http::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Summary,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SYSTEM } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    run(cli, out, err)
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Check { path } => cmd_check(&path, out, err),
        Command::Run {
            program,
            scenario,
            trace,
            format,
        } => cmd_run(&program, &scenario, trace.as_deref(), format, out, err),
        Command::Rewrite {
            program,
            transform,
            in_place,
            out: target,
        } => {
            let target = if in_place { Some(program.clone()) } else { target };
            cmd_rewrite(&program, &transform, target.as_deref(), out, err)
        }
        Command::Repl { program } => {
            let stdin = io::stdin();
            let prompt = stdin.is_terminal();
            cmd_repl(&program, cli.sessions_dir.as_deref(), stdin.lock(), out, err, prompt)
        }
        Command::Serve { port, host } => cmd_serve(&host, port, cli.sessions_dir.as_deref(), err),
    }
}

fn read(path: &Path, err: &mut dyn Write) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        EXIT_SYSTEM
    })
}

fn print_diagnostics(d: &Diagnostics, err: &mut dyn Write) {
    if !d.is_empty() {
        let _ = writeln!(err, "{d}");
    }
}

fn load_program(path: &Path, err: &mut dyn Write) -> Result<crate::model::Program, i32> {
    let source = read(path, err)?;
    match parser::check(&path.display().to_string(), &source) {
        Ok((program, warnings)) => {
            print_diagnostics(&warnings, err);
            Ok(program)
        }
        Err(d) => {
            print_diagnostics(&d, err);
            Err(EXIT_DOMAIN)
        }
    }
}

pub fn cmd_check(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match load_program(path, err) {
        Ok(program) => {
            let _ = writeln!(
                out,
                "{}: ok ({} declarations)",
                path.display(),
                program.declarations.len()
            );
            EXIT_OK
        }
        Err(code) => code,
    }
}

pub fn cmd_run(
    program: &Path,
    scenario: &Path,
    trace_path: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let program = match load_program(program, err) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let text = match read(scenario, err) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", scenario.display());
            return EXIT_DOMAIN;
        }
    };
    let outcome = Engine::new(program).run(&scenario);
    let json = outcome.trace.to_json();
    if let Some(path) = trace_path {
        if let Err(e) = fs::write(path, format!("{json}\n")) {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_SYSTEM;
        }
    }
    let _ = match format {
        Format::Json => writeln!(out, "{json}"),
        Format::Summary => write!(out, "{}", summary(&outcome.state)),
    };
    match (&outcome.error, &outcome.trace.error) {
        (Some(e), Some(at)) => {
            let _ = writeln!(err, "error[{}]: step {}: {e}", e.code(), at.step);
            EXIT_DOMAIN
        }
        (Some(e), None) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            EXIT_DOMAIN
        }
        _ => EXIT_OK,
    }
}

/// The final-state table printed by `dpcl run`.
pub fn summary(state: &InstitutionalState) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "clock: {}", state.clock);
    let _ = writeln!(s, "objects:");
    for o in state.objects.values() {
        let d: Vec<&str> = o.descriptors.keys().map(String::as_str).collect();
        if d.is_empty() {
            let _ = writeln!(s, "  {}", o.name);
        } else {
            let _ = writeln!(s, "  {} [{}]", o.name, d.join(", "));
        }
    }
    let _ = writeln!(s, "compounds:");
    for c in state.compounds.values() {
        let _ = writeln!(s, "  {c}");
    }
    let _ = writeln!(s, "positions:");
    for p in state.positions.values() {
        let _ = writeln!(s, "  {}", render_position(p));
    }
    let violated: Vec<String> = state
        .positions
        .values()
        .filter(|p| p.violated)
        .map(|p| p.display_name())
        .collect();
    let _ = writeln!(s, "violations:");
    for v in violated {
        let _ = writeln!(s, "  {v}");
    }
    s
}

pub fn cmd_rewrite(
    program_path: &Path,
    transform: &str,
    target: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let registry = Registry::default();
    let t = match registry.get(transform) {
        Ok(t) => t,
        Err(e) => {
            let names: Vec<&str> = registry.names().collect();
            let _ = writeln!(err, "error[{}]: {e} (known: {})", e.code(), names.join(", "));
            return EXIT_DOMAIN;
        }
    };
    let program = match load_program(program_path, err) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let (rewritten, sites) = match t.apply_all(&program) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            return EXIT_DOMAIN;
        }
    };
    let text = pretty_print(&rewritten);
    let noun = if sites.len() == 1 { "site" } else { "sites" };
    let listed: Vec<String> = sites.iter().map(|s| s.to_string()).collect();
    let report = if listed.is_empty() {
        format!("0 {noun}")
    } else {
        format!("{} {noun}: {}", sites.len(), listed.join(", "))
    };
    match target {
        Some(path) => {
            if let Err(e) = fs::write(path, &text) {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                return EXIT_SYSTEM;
            }
            let _ = writeln!(out, "{report}");
        }
        None => {
            let _ = write!(out, "{text}");
            let _ = writeln!(err, "{report}");
        }
    }
    EXIT_OK
}

fn open_store(dir: Option<&Path>, err: &mut dyn Write) -> Result<SessionStore, i32> {
    match dir {
        None => Ok(SessionStore::in_memory()),
        Some(d) => SessionStore::open(d).map_err(|e| {
            let _ = writeln!(err, "error: {}: {e}", d.display());
            EXIT_SYSTEM
        }),
    }
}

pub fn cmd_repl<R: BufRead>(
    program: &Path,
    sessions_dir: Option<&Path>,
    input: R,
    out: &mut dyn Write,
    err: &mut dyn Write,
    prompt: bool,
) -> i32 {
    let source = match read(program, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let store = match open_store(sessions_dir, err) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut repl = match Repl::from_source(store, &program.display().to_string(), &source) {
        Ok(r) => r,
        Err(crate::session::StoreError::Program(d)) => {
            print_diagnostics(&d, err);
            return EXIT_DOMAIN;
        }
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            return EXIT_DOMAIN;
        }
    };
    match repl.run(input, out, prompt) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_SYSTEM
        }
    }
}

pub fn cmd_serve(host: &str, port: u16, sessions_dir: Option<&Path>, err: &mut dyn Write) -> i32 {
    let addr: SocketAddr = match format!("{host}:{port}").parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: bad address {host}:{port}: {e}");
            return EXIT_SYSTEM;
        }
    };
    let store = match open_store(sessions_dir, err) {
        Ok(s) => Arc::new(s),
        Err(code) => return code,
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_SYSTEM;
        }
    };
    let _ = writeln!(err, "listening on http://{addr}");
    match runtime.block_on(http::serve(addr, store)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_SYSTEM
        }
    }
}
