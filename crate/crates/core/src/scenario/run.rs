//! Task orchestration for one scenario run.

use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::{json, Map, Value};

use super::build::Instance;
use super::output::{pretty, OutputBundle, RunStatus};
use super::tasks::{self, Context, TaskOutput};
use super::{Format, Scenario, Task, SCHEMA_VERSION};
use crate::error::{Error, Result};

/// Command-line overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Worker threads for ray-parallel work; the global pool when absent.
    pub jobs: Option<usize>,
    /// Continuity refinement levels.
    pub refine: Option<usize>,
}

/// Runs every task in declared order. Only configuration errors are
/// returned as `Err`; task failures are recorded in the manifest.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<OutputBundle> {
    let inst = Instance::new(scenario, options.seed, options.refine)?;
    match options.jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Config { pointer: "/jobs".into(), message: e.to_string() })?;
            pool.install(|| execute(&inst))
        }
        None => execute(&inst),
    }
}

fn execute(inst: &Instance) -> Result<OutputBundle> {
    let started = Instant::now();
    let s = &inst.scenario;
    let mut ctx = Context::new(inst);
    let mut files = BTreeMap::new();
    let mut summaries = Map::new();
    let mut outcomes = Vec::new();
    let (mut failed, mut violated) = (false, false);
    for &task in &s.tasks {
        let t0 = Instant::now();
        let result: Result<TaskOutput> = match task {
            Task::Validate => tasks::validate(&mut ctx),
            Task::Cutlocus => tasks::cutlocus(&mut ctx),
            Task::Classify => tasks::classify(&mut ctx),
            Task::Retracts => tasks::retracts(&mut ctx),
            Task::Dfcheck => tasks::dfcheck(&mut ctx),
            Task::Loops => tasks::loops(&mut ctx),
            Task::Theorems => tasks::theorems(&mut ctx),
        };
        let seconds = t0.elapsed().as_secs_f64();
        match result {
            Ok(out) => {
                let status = if out.violations.is_empty() { "ok" } else { "violation" };
                violated |= !out.violations.is_empty();
                outcomes.push(json!({"task": task.name(), "status": status, "violations": out.violations, "seconds": seconds}));
                summaries.insert(task.name().into(), out.summary);
                if s.output.formats.contains(&Format::Json) {
                    files.insert(format!("{}.json", task.name()), pretty(&out.document));
                }
                for (name, format, body) in out.files {
                    if s.output.formats.contains(&format) {
                        files.insert(name, body);
                    }
                }
            }
            Err(e) => {
                failed = true;
                outcomes.push(json!({"task": task.name(), "status": "error", "error": e.to_string(), "seconds": seconds}));
                summaries.insert(task.name().into(), json!({"error": e.to_string()}));
            }
        }
    }
    let status = if violated {
        RunStatus::Violation
    } else if failed {
        RunStatus::NumericalFailure
    } else {
        RunStatus::Success
    };
    let summary = json!({
        "scenario": s.name,
        "seed": inst.seed,
        "tasks": Value::Object(summaries),
    });
    let manifest = json!({
        "scenario": s.name,
        "seed": inst.seed,
        "versions": {"finsler-cut": env!("CARGO_PKG_VERSION"), "schema": SCHEMA_VERSION},
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "tasks": outcomes,
    });
    Ok(OutputBundle::assemble(files, summary, manifest, status))
}
