//! Command-line entry points. Exit codes: 0 success, 1 the program or
//! script was rejected, 2 usage or I/O error, 3 the soundness oracle failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::fuzz::{self, FuzzConfig};
use crate::parser::parse_script;
use crate::program::{self, SourceFile};
use crate::refiner::{Fault, Session, SessionOptions};
use crate::service::{http, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSOUND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sifo", version, about = "Type checker and refinement engine for security-typed objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Type check a program.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        lattice: PathBuf,
    },
    /// Replay a refinement script on one method and print the result.
    Refine {
        #[arg(long)]
        script: PathBuf,
        /// `Class.method`
        #[arg(long)]
        method: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long)]
        allow_declassify: bool,
    },
    /// Check the refinement engine against the type checker on random
    /// sessions.
    Fuzz {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 60)]
        max_depth: usize,
        /// Run against a deliberately broken engine.
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Serve the session protocol over HTTP.
    Serve {
        #[arg(long)]
        bind: String,
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        allow_declassify: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    SecurityPromotion,
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_program(lattice: &Path, files: &[PathBuf]) -> Result<(SourceFile, Vec<SourceFile>), String> {
    let lat = SourceFile::new(lattice.display().to_string(), read(lattice)?);
    let sources = files
        .iter()
        .map(|f| Ok(SourceFile::new(f.display().to_string(), read(f)?)))
        .collect::<Result<Vec<_>, String>>()?;
    Ok((lat, sources))
}

/// Runs the command line `args` (program name first), writing normal output
/// to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match cli.command {
        Command::Check { files, lattice } => check(&lattice, &files, out, err),
        Command::Refine {
            script,
            method,
            files,
            lattice,
            allow_declassify,
        } => refine(&script, &method, &lattice, &files, allow_declassify, out, err),
        Command::Fuzz {
            seed,
            iterations,
            max_depth,
            inject_fault,
        } => {
            let config = FuzzConfig {
                seed,
                iterations,
                max_depth,
                fault: inject_fault.map(|FaultArg::SecurityPromotion| Fault::SecurityPromotionIgnoresModifier),
            };
            let report = fuzz::run(&config);
            let _ = writeln!(out, "{report}");
            if report.passed() {
                EXIT_OK
            } else {
                for f in &report.failures {
                    let _ = writeln!(err, "{f}");
                }
                EXIT_UNSOUND
            }
        }
        Command::Serve {
            bind,
            workspace,
            allow_declassify,
        } => serve(&bind, workspace, allow_declassify, out, err),
    }
}

fn check(lattice: &Path, files: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (lat, sources) = match read_program(lattice, files) {
        Ok(p) => p,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let diagnostics = program::load_and_check(&lat, &sources);
    if diagnostics.is_empty() {
        let _ = writeln!(out, "ok: {} file(s) checked", sources.len());
        EXIT_OK
    } else {
        for d in &diagnostics {
            let _ = writeln!(err, "{d}");
        }
        EXIT_REJECTED
    }
}

fn refine(
    script_path: &Path,
    method: &str,
    lattice: &Path,
    files: &[PathBuf],
    allow_declassify: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let script_name = script_path.display().to_string();
    let loaded = read_program(lattice, files).and_then(|p| Ok((p, read(script_path)?)));
    let ((lat, sources), script_text) = match loaded {
        Ok(x) => x,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let script = match parse_script(&script_text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{}", e.render(&script_name));
            return EXIT_USAGE;
        }
    };
    let Some((class, method_name)) = method.split_once('.') else {
        let _ = writeln!(err, "error: --method expects `Class.method`, got `{method}`");
        return EXIT_USAGE;
    };
    let program = match program::load(&lat, &sources) {
        Ok(p) => p,
        Err(ds) => {
            for d in &ds {
                let _ = writeln!(err, "{d}");
            }
            return EXIT_REJECTED;
        }
    };
    let options = SessionOptions {
        allow_declassify,
        ..Default::default()
    };
    let mut session = match Session::start(program.table, program.lattice, class, method_name, options) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    for (i, line) in script.iter().enumerate() {
        if let Err(e) = session.apply_in_place(&line.step) {
            let _ = writeln!(
                err,
                "{script_name}:{}:1: step {}: `{}` rejected: {e}",
                line.span.start_line,
                i + 1,
                line.step
            );
            return EXIT_REJECTED;
        }
    }
    let text = match session.export_method() {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "{script_name}: {e}");
            return EXIT_REJECTED;
        }
    };
    let _ = writeln!(out, "{text}");
    match session.verify_soundness() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "soundness oracle failed: {e}");
            EXIT_UNSOUND
        }
    }
}

fn serve(bind: &str, workspace: PathBuf, allow_declassify: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    runtime.block_on(async {
        let server = match http::Server::bind(bind, workspace, ServiceConfig { allow_declassify }).await {
            Ok(s) => s,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USAGE;
            }
        };
        if let Ok(addr) = server.local_addr() {
            let _ = writeln!(out, "listening on http://{addr}");
            let _ = out.flush();
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        match server.run(shutdown).await {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_USAGE
            }
        }
    })
}
