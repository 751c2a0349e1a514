use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use tmkit::diag::{Diagnostics, Severity};
use tmkit::dsl::{self, SourceFile};
use tmkit::dynamics::{compile_dynamic, DynamicModel};
use tmkit::render::{self, DotTarget, View};
use tmkit::sim::{RunBound, Scenario, SimError, SimState};
use tmkit::validate::validate;
use tmkit::{bpmn, StaticModel};

#[derive(Parser)]
#[command(
    name = "tmkit",
    version,
    about = "Thinging machine models: parse, check, simulate, render"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of a model
    Parse { file: PathBuf },
    /// Report diagnostics; exit 1 on errors
    Validate { file: PathBuf },
    /// Summarize the dynamic model
    Compile { file: PathBuf },
    /// Run a scenario and print or save the trace
    Simulate {
        file: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Stop after this tick
        #[arg(long)]
        until: Option<u64>,
        /// Write the trace as JSON lines (`-` for stdout)
        #[arg(long)]
        trace: Option<String>,
        /// Print per-region statistics
        #[arg(long)]
        stats: bool,
    },
    /// Convert a BPMN 2.0 file into the model language
    ImportBpmn {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Emit Graphviz DOT
    Render {
        file: PathBuf,
        #[arg(long, default_value = "static")]
        view: View,
        #[arg(short, long)]
        output: Option<String>,
    },
    /// Collapse transfer chains into links
    Simplify {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<String>,
    },
}

enum Failure {
    Invalid(Diagnostics),
    Runtime(String),
}

impl From<Diagnostics> for Failure {
    fn from(d: Diagnostics) -> Self {
        Failure::Invalid(d)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn color() -> bool {
    std::env::var("TM_COLOR").map_or(io::stderr().is_terminal(), |v| v != "0")
}

fn report(file: &Path, diags: &Diagnostics) {
    let color = color();
    let mut err = io::stderr().lock();
    for d in diags {
        let sep = if d.location.is_some() { ":" } else { ": " };
        let line = format!("{}{sep}{d}", file.display());
        if color {
            let code = match d.severity {
                Severity::Error => "31",
                Severity::Warning => "33",
            };
            let _ = writeln!(err, "\x1b[{code}m{line}\x1b[0m");
        } else {
            let _ = writeln!(err, "{line}");
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&str>, text: &str) -> Result<(), Failure> {
    match output {
        None | Some("-") => {
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
        Some(path) => fs::write(path, text).map_err(|e| Failure::Runtime(format!("{path}: {e}"))),
    }
}

fn load(path: &Path) -> Result<(StaticModel, dsl::DynamicDecls), Failure> {
    let text = read(path)?;
    let source = SourceFile::new(path.display().to_string(), text);
    Ok(dsl::parse(&source)?)
}

fn load_dynamic(path: &Path) -> Result<(DynamicModel, Diagnostics), Failure> {
    let (model, decls) = load(path)?;
    let warnings = validate(&model, &decls);
    let dynamic = compile_dynamic(Arc::new(model), &decls).map_err(Diagnostics::from)?;
    Ok((dynamic, warnings))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Parse { file } => {
            let (model, decls) = load(&file)?;
            emit(None, &dsl::print(&model, &decls))
        }
        Command::Validate { file } => {
            let (model, decls) = load(&file)?;
            let diags = validate(&model, &decls);
            report(&file, &diags);
            if diags.has_errors() {
                return Err(Failure::Invalid(Diagnostics::new()));
            }
            println!(
                "ok: {} thimacs, {} stages, {} arcs, {} events",
                model.thimacs.len(),
                model.stages.len(),
                model.arcs.len(),
                decls.events.len()
            );
            Ok(())
        }
        Command::Compile { file } => {
            let (dynamic, warnings) = load_dynamic(&file)?;
            report(&file, &warnings);
            let mut out = String::new();
            for e in &dynamic.events {
                let mut flags = Vec::new();
                if e.extended {
                    flags.push("extended".to_string());
                }
                if e.instantaneous {
                    flags.push("instant".to_string());
                }
                if let Some(m) = &e.measure {
                    flags.push(format!("measure {m}"));
                }
                out.push_str(&format!(
                    "event {} duration {} stages {} arcs {}{}: {}\n",
                    e.name,
                    e.duration,
                    e.region.nodes.len(),
                    e.region.arcs.len(),
                    if flags.is_empty() {
                        String::new()
                    } else {
                        format!(" [{}]", flags.join(", "))
                    },
                    e.description
                ));
            }
            for n in &dynamic.negatives {
                out.push_str(&format!("negative {} of {}\n", n.name, n.paired));
            }
            let c = &dynamic.chronology;
            out.push_str(&format!(
                "chronology: {} edges, {} joins, starts {}\n",
                c.edges.len(),
                c.joins.len(),
                c.start_events().join(" ")
            ));
            emit(None, &out)
        }
        Command::Simulate {
            file,
            scenario,
            seed,
            until,
            trace,
            stats,
        } => {
            let (dynamic, warnings) = load_dynamic(&file)?;
            report(&file, &warnings);
            let text = read(&scenario)?;
            let mut sc: Scenario = serde_json::from_str(&text)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", scenario.display())))?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            let mut state = SimState::init(&dynamic, &sc).map_err(sim_failure)?;
            let bound = until.map_or(RunBound::Quiescence, RunBound::Until);
            let result = state.run(bound).map_err(sim_failure)?;
            let jsonl = result.to_jsonl();
            match trace.as_deref() {
                Some(path) => emit(Some(path), &jsonl)?,
                None if !stats => emit(None, &jsonl)?,
                None => {}
            }
            if stats {
                let text = serde_json::to_string_pretty(&state.stats()).expect("plain map");
                emit(None, &format!("{text}\n"))?;
            }
            Ok(())
        }
        Command::ImportBpmn { file, output } => {
            let text = read(&file)?;
            let (model, decls, warnings) = bpmn::import_bpmn(&text)?;
            report(&file, &warnings);
            let diags = validate(&model, &decls);
            report(&file, &diags);
            if diags.has_errors() {
                return Err(Failure::Invalid(Diagnostics::new()));
            }
            emit(output.as_deref(), &dsl::print(&model, &decls))
        }
        Command::Render { file, view, output } => {
            let dot = if view == View::Static {
                let (model, decls) = load(&file)?;
                let diags = validate(&model, &decls);
                report(&file, &diags);
                if diags.has_errors() {
                    return Err(Failure::Invalid(Diagnostics::new()));
                }
                render::to_dot(DotTarget::Static(&model), view)
            } else {
                let (dynamic, warnings) = load_dynamic(&file)?;
                report(&file, &warnings);
                render::to_dot(DotTarget::Dynamic(&dynamic), view)
            };
            emit(output.as_deref(), &dot)
        }
        Command::Simplify { file, output } => {
            let (model, _) = load(&file)?;
            let simplified = render::simplify(&model);
            emit(output.as_deref(), &dsl::print_simplified(&simplified))
        }
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::UnresolvedGuard { .. } => Failure::Invalid(
            tmkit::diag::Diagnostic::error(tmkit::diag::codes::E_GUARD_UNRESOLVED, e.to_string())
                .into(),
        ),
        other => Failure::Runtime(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let file = match &cli.command {
        Command::Parse { file }
        | Command::Validate { file }
        | Command::Compile { file }
        | Command::Simulate { file, .. }
        | Command::ImportBpmn { file, .. }
        | Command::Render { file, .. }
        | Command::Simplify { file, .. } => file.clone(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(diags)) => {
            report(&file, &diags);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
