use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use engagesim::analysis::analyze;
use engagesim::render::render_svg;
use engagesim::scenario::{bundled_names, load_scenario_or_bundled, ScenarioError};
use engagesim::trace::{read_trace, TraceHeader, TraceWriter};
use engagesim::Simulation;

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(
    name = "engagesim",
    version,
    about = "Attention and engagement simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (file path or bundled name) and write a trace.
    Run {
        scenario: String,
        /// Tick count; overrides the scenario's.
        #[arg(long)]
        ticks: Option<u64>,
        /// RNG seed; overrides the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        /// Trace output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip subjective views (objective loop only).
        #[arg(long)]
        objective: bool,
    },
    /// Summarise a trace.
    Analyze {
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Scenario the trace is expected to come from.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Draw one tick of a trace as SVG.
    Render {
        trace: PathBuf,
        #[arg(long)]
        tick: u64,
        /// SVG output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario without running it.
    Validate { scenario: String },
    /// List bundled scenarios.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn scenario_failure(e: &ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_validation() {
        EXIT_INVALID
    } else {
        EXIT_IO
    })
}

fn io_failure(what: &str, e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {what}: {e}");
    ExitCode::from(EXIT_IO)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            ticks,
            seed,
            out,
            objective,
        } => {
            let mut s = match load_scenario_or_bundled(&scenario) {
                Ok(s) => s,
                Err(e) => return scenario_failure(&e),
            };
            let seed = seed.unwrap_or(s.seed);
            s.world.rng_seed = seed;
            if objective {
                s.params.subjective_views = false;
            }
            let header = TraceHeader::new(&s.name, &s.hash, seed);
            let sink: Box<dyn Write> = match &out {
                Some(p) => match std::fs::File::create(p) {
                    Ok(f) => Box::new(io::BufWriter::new(f)),
                    Err(e) => return io_failure(&p.display().to_string(), e),
                },
                None => Box::new(io::BufWriter::new(io::stdout().lock())),
            };
            let mut writer = match TraceWriter::new(sink, &header) {
                Ok(w) => w,
                Err(e) => return io_failure("writing trace", e),
            };
            let mut sim = Simulation::new(s.world, s.params, s.script);
            let total = ticks.unwrap_or(s.ticks);
            let mut written = 0;
            for _ in 0..total {
                let record = match sim.step() {
                    Ok(r) => r,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_INVALID);
                    }
                };
                if let Err(e) = writer.write_record(&record) {
                    return io_failure("writing trace", e);
                }
                written += 1;
                if s.stop.map(|p| p.holds(&record)).unwrap_or(false) {
                    eprintln!("stop condition met at tick {}", record.tick);
                    break;
                }
            }
            if let Err(e) = writer.finish() {
                return io_failure("writing trace", e);
            }
            eprintln!("{}: {written} ticks, seed {seed}", s.name);
            ExitCode::SUCCESS
        }
        Command::Analyze {
            trace,
            format,
            scenario,
        } => {
            let t = match read_trace(&trace) {
                Ok(t) => t,
                Err(e) => return io_failure(&trace.display().to_string(), e),
            };
            if let Some(arg) = scenario {
                match load_scenario_or_bundled(&arg) {
                    Ok(s) if s.hash != t.header.scenario_hash => {
                        eprintln!(
                            "warning: trace was not produced from {arg} (scenario hash differs)"
                        );
                    }
                    Ok(_) => {}
                    Err(e) => return scenario_failure(&e),
                }
            }
            let report = analyze(&t.records);
            let text = match format {
                Format::Text => report.to_text(),
                Format::Json => {
                    serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
                }
            };
            print!("{text}");
            ExitCode::SUCCESS
        }
        Command::Render { trace, tick, out } => {
            let t = match read_trace(&trace) {
                Ok(t) => t,
                Err(e) => return io_failure(&trace.display().to_string(), e),
            };
            let Some(record) = t.record(tick) else {
                eprintln!(
                    "error: tick {tick} is not in the trace (last tick {})",
                    t.last_tick()
                        .map(|t| t.to_string())
                        .unwrap_or_else(|| "none".into())
                );
                return ExitCode::from(EXIT_INVALID);
            };
            if let Err(e) = std::fs::write(&out, render_svg(record)) {
                return io_failure(&out.display().to_string(), e);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match load_scenario_or_bundled(&scenario) {
            Ok(s) => {
                println!("{}: ok ({} entities)", s.name, s.world.len());
                ExitCode::SUCCESS
            }
            Err(e) => scenario_failure(&e),
        },
        Command::List => {
            for n in bundled_names() {
                println!("{n}");
            }
            ExitCode::SUCCESS
        }
    }
}
