use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finsler_cut::scenario::{
    builtin_text, compare_numeric, list_builtin_scenarios, parse_scenario, run_scenario, OutputBundle, RunOptions,
    Scenario,
};
use finsler_cut::Error;

/// Cut loci, focal loci and normal geodesics of submanifolds in Finsler
/// manifolds, driven by JSON scenarios.
#[derive(Parser, Debug)]
#[command(name = "fincut", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunFlags {
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the scenario's, else `out/<name>`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for ray-parallel work.
    #[arg(long)]
    jobs: Option<usize>,
    /// Refinement levels of the continuity study.
    #[arg(long)]
    refine: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs a scenario file or builtin name and writes the output bundle.
    Run {
        scenario: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Lists the builtin scenarios.
    List,
    /// Parses and validates a scenario without running it.
    Validate { scenario: String },
    /// Compares a run against its golden summary, or rewrites it.
    Golden {
        scenario: String,
        /// Golden file (default: the shipped one for builtins).
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Regenerate the golden file instead of comparing.
        #[arg(long)]
        update: bool,
        /// Relative tolerance on numeric fields.
        #[arg(long, default_value_t = 1e-9)]
        rel: f64,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn load(arg: &str) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    let text = if path.exists() {
        std::fs::read_to_string(path)?
    } else if let Some(t) = builtin_text(arg) {
        t.to_string()
    } else {
        return Err(Error::Config { pointer: "/".into(), message: format!("{arg}: no such file or builtin scenario") });
    };
    parse_scenario(&text)
}

fn options(f: &RunFlags) -> RunOptions {
    RunOptions { seed: f.seed, jobs: f.jobs, refine: f.refine }
}

fn report(bundle: &OutputBundle) {
    if let Some(tasks) = bundle.manifest["tasks"].as_array() {
        for t in tasks {
            let status = t["status"].as_str().unwrap_or("?");
            let extra = match status {
                "error" => format!(": {}", t["error"].as_str().unwrap_or("")),
                "violation" => format!(": {} violation(s)", t["violations"].as_array().map_or(0, Vec::len)),
                _ => String::new(),
            };
            println!("{:<10} {status}{extra} ({:.1} s)", t["task"].as_str().unwrap_or("?"), t["seconds"].as_f64().unwrap_or(0.0));
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        Error::Config { .. } | Error::Io(_) => 1,
        _ => 2,
    })
}

fn default_golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/golden").join(format!("{name}.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, description) in list_builtin_scenarios() {
                println!("{name:<22} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match load(&scenario) {
            Ok(s) => {
                println!("{}: valid ({} task(s))", s.name, s.tasks.len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { scenario, flags } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let bundle = match run_scenario(&s, &options(&flags)) {
                Ok(b) => b,
                Err(e) => return fail(&e),
            };
            let dir = flags
                .out_dir
                .clone()
                .or_else(|| s.output.directory.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| Path::new("out").join(&s.name));
            if let Err(e) = bundle.write(&dir) {
                return fail(&e);
            }
            report(&bundle);
            println!("wrote {} file(s) to {}", bundle.files.len(), dir.display());
            ExitCode::from(bundle.status.exit_code() as u8)
        }
        Command::Golden { scenario, golden, update, rel, flags } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let path = golden.unwrap_or_else(|| default_golden(&s.name));
            let bundle = match run_scenario(&s, &options(&flags)) {
                Ok(b) => b,
                Err(e) => return fail(&e),
            };
            report(&bundle);
            let current = bundle.file("summary.json").unwrap_or_default();
            if update {
                if let Err(e) = std::fs::write(&path, current) {
                    return fail(&e.into());
                }
                println!("updated {}", path.display());
                return ExitCode::from(bundle.status.exit_code() as u8);
            }
            let expected = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => return fail(&Error::Io(format!("{}: {e}", path.display()))),
            };
            let expected: serde_json::Value = match serde_json::from_str(&expected) {
                Ok(v) => v,
                Err(e) => return fail(&Error::Config { pointer: "/".into(), message: e.to_string() }),
            };
            let diffs = compare_numeric(&expected, &bundle.summary, rel, 1e-12);
            if diffs.is_empty() {
                println!("{}: matches {}", s.name, path.display());
                ExitCode::from(bundle.status.exit_code() as u8)
            } else {
                for d in &diffs {
                    println!("mismatch {d}");
                }
                ExitCode::from(2)
            }
        }
    }
}
