//! Library side of the `stablemc` command: configuration, task execution
//! and artifact writing.

pub mod catalog;
pub mod config;
pub mod error;
pub mod output;
pub mod tasks;

use std::path::Path;

use config::ExperimentConfig;
use error::CliError;

/// What happened to one task of a run.
#[derive(Debug)]
pub struct TaskReport {
    pub name: String,
    pub summary: String,
    pub passed: Option<bool>,
}

/// Runs every task of `cfg` in order on a pool of `cfg.workers` threads,
/// writing `<name>.csv` and `<name>.json` into `cfg.output_dir`.
///
/// A failed verification does not stop the run; it is reported at the end
/// as [`CliError::Verification`]. Any other error aborts.
pub fn run(cfg: &ExperimentConfig, mut on_task: impl FnMut(&TaskReport)) -> Result<Vec<TaskReport>, CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut reports = Vec::new();
    for task in &cfg.tasks {
        let out = pool.install(|| tasks::run_task(cfg, task))?;
        write_outputs(&cfg.output_dir, task.name(), &out)?;
        let report = TaskReport {
            name: task.name().to_string(),
            summary: out.summary.clone(),
            passed: out.verification.as_ref().map(|v| v.overall),
        };
        on_task(&report);
        reports.push(report);
    }
    let failed: Vec<&str> = reports.iter().filter(|r| r.passed == Some(false)).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Verification(format!("failed: {}", failed.join(", "))))
    }
}

fn write_outputs(dir: &Path, name: &str, out: &tasks::TaskOutput) -> Result<(), CliError> {
    output::write_atomic(dir, &format!("{name}.csv"), &out.table.to_csv()?)?;
    let mut json = serde_json::to_vec_pretty(&out.document).map_err(|e| CliError::Io(e.to_string()))?;
    json.push(b'\n');
    output::write_atomic(dir, &format!("{name}.json"), &json)?;
    Ok(())
}
