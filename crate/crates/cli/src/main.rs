use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};

use pepflow::convert::{convert_to_event_based, merged_model, ConvertError, DedupReport};
use pepflow::dialect::{classify_dialect, Dialect};
use pepflow::engine::{self, AnalysisResult, Settings, DEFAULT_EPSILON};
use pepflow::ingest::{self, IngestError};
use pepflow::mdp::{
    compile, compose, ComposeError, ComposeOptions, ComposedMdp, GenerateError, MdpProgram, DEFAULT_MAX_STATES,
};
use pepflow::model::ProcessModel;
use pepflow::prism::{emit_model, emit_properties};

/// Exit codes.
const EXIT_INPUT: u8 = 1;
const EXIT_CONVERT: u8 = 2;
const EXIT_LIMIT: u8 = 3;
const EXIT_VIOLATED: u8 = 4;

#[derive(Parser)]
#[command(name = "pepflow", version, about = "Convert BPMN process models to MDPs and check them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a model and write the MDP, property file and event-based model.
    Convert {
        input: PathBuf,
        /// Directory for the generated files.
        #[arg(short, long, default_value = ".")]
        output_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Dat)]
        format: Format,
    },
    /// Print state and transition counts of the compiled MDP.
    Stats {
        input: PathBuf,
        /// Also compile the single-diagram flattening and report the reduction.
        #[arg(long)]
        baseline_merged: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check properties phi1..phi5 with the built-in engine.
    Check {
        input: PathBuf,
        /// phi1..phi5 or all.
        #[arg(long, default_value = "all")]
        property: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Stop once the composed MDP has this many states.
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    max_states: usize,
    /// Absolute convergence threshold of value iteration.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Omit timing information so output is reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dat,
    Prism,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Dat => "dat",
            Format::Prism => "prism",
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ConvertError> for Failure {
    fn from(e: ConvertError) -> Self {
        Failure::new(EXIT_CONVERT, format!("conversion failed: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert {
            input,
            output_dir,
            format,
        } => convert(&input, &output_dir, format),
        Command::Stats {
            input,
            baseline_merged,
            common,
        } => stats(&input, baseline_merged, &common),
        Command::Check { input, property, common } => check(&input, &property, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<ProcessModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    ingest::parse(&text).map_err(|e| match e {
        IngestError::Validation(violations) => {
            let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
            Failure::new(
                EXIT_INPUT,
                format!("{}: invalid model\n{}", path.display(), lines.join("\n")),
            )
        }
        IngestError::Parse(p) => Failure::new(EXIT_INPUT, format!("{}: {p}", path.display())),
    })
}

/// The event-based form of `model`, converting it first when it is pool-based.
fn event_based(model: &ProcessModel) -> Result<(Dialect, ProcessModel, Option<DedupReport>), Failure> {
    let dialect = classify_dialect(model).map_err(ConvertError::from)?;
    info!("input dialect: {dialect}");
    match dialect {
        Dialect::PoolBased => {
            let (converted, report) = convert_to_event_based(model)?;
            Ok((dialect, converted, Some(report)))
        }
        Dialect::EventBased => Ok((dialect, model.clone(), None)),
    }
}

fn program(model: &ProcessModel) -> Result<MdpProgram, Failure> {
    compile(model).map_err(|e| {
        let code = match e {
            GenerateError::TooManyLocations { .. } => EXIT_LIMIT,
            _ => EXIT_CONVERT,
        };
        Failure::new(code, format!("MDP generation failed: {e}"))
    })
}

fn build(model: &ProcessModel, common: &Common) -> Result<ComposedMdp, Failure> {
    let program = program(model)?;
    compose(
        &program,
        &ComposeOptions {
            max_states: common.max_states,
        },
    )
    .map_err(|e| match e {
        ComposeError::StateSpaceLimitExceeded { limit, explored } => {
            println!("states: >= {explored} (partial, limit {limit})");
            Failure::new(EXIT_LIMIT, e.to_string())
        }
        other => Failure::new(EXIT_CONVERT, other.to_string()),
    })
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut stem = name.as_str();
    for ext in [".xml", ".bpmn"] {
        stem = stem.strip_suffix(ext).unwrap_or(stem);
    }
    if stem.is_empty() {
        "model".to_string()
    } else {
        stem.to_string()
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn convert(input: &Path, out: &Path, format: Format) -> Result<(), Failure> {
    let model = load(input)?;
    let (dialect, converted, report) = event_based(&model)?;
    println!("dialect: {dialect}");
    let program = program(&converted)?;
    let text = emit_model(&program).map_err(|e| Failure::new(EXIT_CONVERT, e.to_string()))?;

    fs::create_dir_all(out).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", out.display())))?;
    let stem = file_stem(input);
    write(&out.join(format!("{stem}.{}", format.extension())), &text)?;
    write(&out.join(format!("{stem}.props")), &emit_properties(&converted))?;
    write(&out.join(format!("{stem}.ebpmn.xml")), &ingest::serialize(&converted))?;
    if let Some(report) = report {
        write(&out.join("dedup_report.txt"), &report.to_text())?;
    }
    Ok(())
}

fn row(name: &str, mdp: &ComposedMdp, common: &Common) {
    let space = engine::count_state_space(mdp);
    if common.deterministic {
        println!("{name:<14} {:>12} {:>12}", space.states, space.transitions);
    } else {
        println!(
            "{name:<14} {:>12} {:>12} {:>10.3}",
            space.states,
            space.transitions,
            space.build_time.as_secs_f64()
        );
    }
}

fn reduction(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (before as f64 - after as f64) / before as f64
    }
}

fn stats(input: &Path, baseline: bool, common: &Common) -> Result<(), Failure> {
    let model = load(input)?;
    let (_, converted, _) = event_based(&model)?;
    let mdp = build(&converted, common)?;
    if common.deterministic {
        println!("{:<14} {:>12} {:>12}", "model", "states", "transitions");
    } else {
        println!("{:<14} {:>12} {:>12} {:>10}", "model", "states", "transitions", "build (s)");
    }
    row("eBPMN", &mdp, common);
    if baseline {
        let merged = merged_model(&model)?;
        debug!("merged baseline has {} nodes", merged.node_count());
        let base = build(&merged, common)?;
        row("pBPMN merged", &base, common);
        println!(
            "reduction: {:.1}% in states and {:.1}% in transitions",
            reduction(base.num_states(), mdp.num_states()),
            reduction(base.num_transitions(), mdp.num_transitions())
        );
    }
    Ok(())
}

fn selected(property: &str) -> Result<Vec<&'static str>, Failure> {
    let all = ["phi1", "phi2", "phi3", "phi4", "phi5"];
    let p = property.trim().to_lowercase().replace('φ', "phi");
    if p == "all" {
        return Ok(all.to_vec());
    }
    all.iter()
        .find(|&&name| name == p || name.strip_prefix("phi") == Some(p.as_str()))
        .map(|&name| vec![name])
        .ok_or_else(|| Failure::new(EXIT_INPUT, format!("unknown property {property:?}; use phi1..phi5 or all")))
}

fn check(input: &Path, property: &str, common: &Common) -> Result<(), Failure> {
    let props = selected(property)?;
    let model = load(input)?;
    let (_, converted, _) = event_based(&model)?;
    let mdp = build(&converted, common)?;
    let settings = Settings {
        epsilon: common.epsilon,
        ..Settings::default()
    };
    let result = engine::analyze(&mdp, &settings).map_err(|e| Failure::new(EXIT_CONVERT, e.to_string()))?;
    if !common.deterministic {
        println!("states {}, transitions {}, built in {:.3}s", result.states, result.transitions, result.build_time.as_secs_f64());
    }
    let mut violated = false;
    for p in props {
        violated |= report(p, &result);
    }
    if violated {
        Err(Failure::new(EXIT_VIOLATED, ""))
    } else {
        Ok(())
    }
}

/// Prints one property; returns true if it is violated.
fn report(p: &str, r: &AnalysisResult) -> bool {
    let mark = |ok: bool| if ok { "✓" } else { "✗" };
    match p {
        "phi1" => {
            let ok = r.holds(p) == Some(true);
            println!(
                "{p}: {} (deadlock free: {}, Pmin = {})",
                mark(ok),
                r.deadlock_free,
                r.values[p]
            );
            !ok
        }
        "phi2" => {
            let ok = r.holds(p) == Some(true);
            println!("{p}: {} (Pmax = {})", mark(ok), r.values[p]);
            !ok
        }
        "phi3" => {
            let ok = r.holds(p) == Some(true);
            println!("{p}: {} (every terminal state is all-done: {ok})", mark(ok));
            !ok
        }
        _ => {
            let unit = if p == "phi4" { "days (minimum)" } else { "wd (expected, maximum)" };
            match r.values.get(p) {
                Some(v) => println!("{p}: {v} {unit}"),
                None => println!("{p}: not applicable (model has no timeline)"),
            }
            false
        }
    }
}
