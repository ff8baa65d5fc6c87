//! Runs one configured task and turns its results into artifacts.

use std::sync::Arc;

use serde_json::{json, Value};
use stablemc_core::estimators::{
    exit_time_mean, hitting_probability, occupation_times, resolvents, tube_probabilities,
};
use stablemc_core::kernels::JumpKernel;
use stablemc_core::mollify::{pipeline_measure, ConvergenceRow, MollifiedKernel, PipelineConfig};
use stablemc_core::parallel::map_paths;
use stablemc_core::sampler::simulate_path;
use stablemc_core::verify::{
    estimate_phi_envelope, verify_exit_scaling, verify_hitting_bound, verify_mollify_pipeline,
    verify_support_theorem, EnvelopeConfig, EnvelopeRow, PipelineInputs,
};
use stablemc_core::{EstimateWithCI, Polyline, ScalarField, SimConfig, VerificationResult};

use crate::config::{CurveSpec, ExperimentConfig, TaskSpec};
use crate::error::CliError;
use crate::output::{Table, CONVERGENCE_HEADER, CSV_VERSION, ENVELOPE_HEADER, ESTIMATE_HEADER};

/// Everything a task produces.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub table: Table,
    pub document: Value,
    pub summary: String,
    /// `Some` for verification tasks.
    pub verification: Option<VerificationResult>,
}

struct Ctx<'a> {
    task: &'a str,
    seed: String,
    digest: String,
}

impl Ctx<'_> {
    fn estimate_row(&self, estimator: &str, label: &str, e: &EstimateWithCI) -> Vec<String> {
        let method = serde_json::to_value(e.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        vec![
            self.task.to_string(),
            estimator.to_string(),
            label.to_string(),
            e.mean.to_string(),
            e.std_error.to_string(),
            e.n_samples.to_string(),
            method,
            e.bias_bound.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            self.seed.clone(),
            self.digest.clone(),
        ]
    }

    fn convergence_row(&self, table: &str, r: &ConvergenceRow) -> Vec<String> {
        vec![
            self.task.to_string(),
            table.to_string(),
            r.eps.to_string(),
            r.estimate.to_string(),
            r.reference.to_string(),
            r.abs_error.to_string(),
            r.combined_se.to_string(),
            r.support_failure_fraction.to_string(),
            self.seed.clone(),
            self.digest.clone(),
        ]
    }

    fn envelope_row(&self, r: &EnvelopeRow) -> Vec<String> {
        vec![
            self.task.to_string(),
            r.measure_level.to_string(),
            r.raw_min.to_string(),
            r.raw_lower.to_string(),
            r.envelope.to_string(),
            r.envelope_lower.to_string(),
            r.sets.to_string(),
            r.points.to_string(),
            r.n.to_string(),
            self.seed.clone(),
            self.digest.clone(),
        ]
    }
}

fn polyline(c: &CurveSpec) -> Result<Polyline, CliError> {
    Ok(Polyline::new(c.clone())?)
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
    format!("[{}]", parts.join(" "))
}

fn estimate_summary(e: &EstimateWithCI) -> String {
    format!("{:.6} ± {:.6} (n = {})", e.mean, e.std_error, e.n_samples)
}

/// Runs `task` with the kernel and simulation settings of `cfg`.
pub fn run_task(cfg: &ExperimentConfig, task: &TaskSpec) -> Result<TaskOutput, CliError> {
    let kernel = cfg.kernel.build()?;
    let sim = cfg.sim_config();
    let ctx = Ctx { task: task.name(), seed: cfg.master_seed.to_string(), digest: cfg.task_digest(task) };
    let kind = serde_json::to_value(task)
        .ok()
        .and_then(|v| v.get("kind").and_then(Value::as_str).map(String::from))
        .unwrap_or_default();
    let mut out = dispatch(kernel, &sim, task, &ctx)?;
    let mut doc = json!({
        "csv_version": CSV_VERSION,
        "task": task.name(),
        "kind": kind,
        "master_seed": cfg.master_seed,
        "config_digest": ctx.digest,
        "summary": out.summary,
    });
    if let (Value::Object(d), Value::Object(extra)) = (&mut doc, std::mem::take(&mut out.document)) {
        d.extend(extra);
    }
    if let Some(v) = &out.verification {
        doc["verification"] = serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))?;
    }
    out.document = doc;
    Ok(out)
}

fn estimates_output(
    ctx: &Ctx<'_>,
    estimator: &str,
    labelled: Vec<(String, EstimateWithCI)>,
    verification: Option<VerificationResult>,
) -> TaskOutput {
    let mut table = Table::new(ESTIMATE_HEADER);
    for (label, e) in &labelled {
        table.push(ctx.estimate_row(estimator, label, e));
    }
    let summary = match &verification {
        Some(v) => verification_summary(v),
        None => labelled.iter().map(|(l, e)| format!("{l}: {}", estimate_summary(e))).collect::<Vec<_>>().join("; "),
    };
    let estimates: Vec<Value> = labelled.iter().map(|(l, e)| json!({"label": l, "estimate": e})).collect();
    TaskOutput { table, document: json!({ "estimates": estimates }), summary, verification }
}

fn verification_summary(v: &VerificationResult) -> String {
    let failed = v.failures().count();
    format!(
        "{}: {} ({} of {} checks passed)",
        v.theorem_id,
        if v.overall { "PASS" } else { "FAIL" },
        v.checks.len() - failed,
        v.checks.len()
    )
}

fn dispatch(kernel: Arc<dyn JumpKernel>, sim: &SimConfig, task: &TaskSpec, ctx: &Ctx<'_>) -> Result<TaskOutput, CliError> {
    let k = kernel.as_ref();
    Ok(match task {
        TaskSpec::Simulate { x0, paths, .. } => {
            let d = k.bounds().d;
            let mut header = vec!["task".to_string(), "path".into(), "event".into(), "t".into()];
            header.extend((0..d).map(|i| format!("x{i}")));
            header.extend(["master_seed".to_string(), "config_digest".to_string()]);
            let mut table = Table { header, rows: Vec::new() };
            let skeletons = map_paths(*paths, |i| simulate_path(k, x0, sim, i))?;
            let mut events = 0usize;
            for (p, s) in skeletons.iter().enumerate() {
                let mut push = |event: usize, t: f64, x: &[f64]| {
                    let mut row = vec![ctx.task.to_string(), p.to_string(), event.to_string(), t.to_string()];
                    row.extend(x.iter().map(|v| v.to_string()));
                    row.extend([ctx.seed.clone(), ctx.digest.clone()]);
                    table.rows.push(row);
                };
                push(0, 0.0, &s.start);
                for i in 0..s.len() {
                    push(i + 1, s.times[i], s.position(i));
                }
                events += s.len();
            }
            let summary = format!("{paths} paths, {events} events");
            TaskOutput { table, document: json!({"paths": paths, "events": events}), summary, verification: None }
        }
        TaskSpec::EstimateExit { x0, domain, n, .. } => {
            let e = exit_time_mean(k, x0, domain, sim, *n)?;
            estimates_output(ctx, "exit-time", vec![(format!("x0={}", fmt_point(x0)), e)], None)
        }
        TaskSpec::EstimateHit { y, target, container, n, .. } => {
            let e = hitting_probability(k, y, target, container, sim, *n)?;
            estimates_output(ctx, "hitting", vec![(format!("y={}", fmt_point(y)), e)], None)
        }
        TaskSpec::EstimateOccupation { x0, sets, domain, n, .. } => {
            let es = occupation_times(k, x0, sets, domain, sim, *n)?;
            let labelled = es.into_iter().enumerate().map(|(i, e)| (format!("set {i}"), e)).collect();
            estimates_output(ctx, "occupation", labelled, None)
        }
        TaskSpec::EstimateTube { curve, eps, n, .. } => {
            let phi = polyline(curve)?;
            let es = tube_probabilities(k, &phi, eps, sim, *n)?;
            let labelled = eps.iter().zip(es).map(|(e, est)| (format!("eps={e}"), est)).collect();
            estimates_output(ctx, "tube", labelled, None)
        }
        TaskSpec::EstimateResolvent { x0, fields, lambda, n, .. } => {
            let fs: Vec<&dyn ScalarField> = fields.iter().map(|f| f as &dyn ScalarField).collect();
            let es = resolvents(k, x0, &fs, *lambda, sim, *n)?;
            let labelled = es.into_iter().enumerate().map(|(i, e)| (format!("field {i}"), e)).collect();
            estimates_output(ctx, "resolvent", labelled, None)
        }
        TaskSpec::VerifyScaling { radii, n, .. } => {
            let (es, v) = verify_exit_scaling(k, radii, sim, *n)?;
            let labelled = radii.iter().zip(es).map(|(r, e)| (format!("r={r}"), e)).collect();
            estimates_output(ctx, "exit-time", labelled, Some(v))
        }
        TaskSpec::VerifyHitting { center, targets, starts, n, .. } => {
            let (table, v) = verify_hitting_bound(k, center, targets, starts, sim, *n)?;
            let mut labelled = Vec::new();
            for (i, row) in table.into_iter().enumerate() {
                for (j, e) in row.into_iter().enumerate() {
                    labelled.push((format!("target {i}, y={}", fmt_point(&starts[j])), e));
                }
            }
            estimates_output(ctx, "hitting", labelled, Some(v))
        }
        TaskSpec::VerifySupport { curves, eps, n, .. } => {
            let phis = curves.iter().map(polyline).collect::<Result<Vec<_>, _>>()?;
            let (table, v) = verify_support_theorem(k, &phis, eps, sim, *n)?;
            let mut labelled = Vec::new();
            for (c, row) in table.into_iter().enumerate() {
                for (e, est) in eps.iter().zip(row) {
                    labelled.push((format!("curve {c}, eps={e}"), est));
                }
            }
            estimates_output(ctx, "tube", labelled, Some(v))
        }
        TaskSpec::VerifyPhi { levels, sets_per_level, points_per_axis, set_seed, n, .. } => {
            let env = EnvelopeConfig::new(k.bounds().d, levels.clone(), *sets_per_level, *points_per_axis, *set_seed);
            let (rows, v) = estimate_phi_envelope(k, &env, sim, *n)?;
            let mut table = Table::new(ENVELOPE_HEADER);
            for r in &rows {
                table.push(ctx.envelope_row(r));
            }
            let summary = verification_summary(&v);
            TaskOutput { table, document: json!({ "envelope": rows }), summary, verification: Some(v) }
        }
        TaskSpec::VerifyMollify { x0, f, eps, lambda, n, m, grid, .. } => {
            let d = k.bounds().d;
            let inputs = PipelineInputs {
                x0: x0.clone(),
                f,
                eps_list: eps.clone(),
                x_grid: grid.x_grid(d),
                h_grid: grid.h_grid(d),
                pipeline: PipelineConfig { lambda: *lambda, n: *n, m: *m },
            };
            let (tables, v) = verify_mollify_pipeline(kernel.clone(), &inputs, sim)?;
            let mut table = Table::new(CONVERGENCE_HEADER);
            for r in &tables.resolvent {
                table.push(ctx.convergence_row("resolvent", r));
            }
            for r in &tables.kernel {
                table.push(ctx.convergence_row("kernel", r));
            }
            let summary = verification_summary(&v);
            TaskOutput { table, document: json!({ "tables": tables }), summary, verification: Some(v) }
        }
        TaskSpec::MollifyBuild { x0, lambda, m, eps, grid, .. } => {
            let d = k.bounds().d;
            let pc = PipelineConfig { lambda: *lambda, n: 0, m: *m };
            let mu = Arc::new(pipeline_measure(k, x0, sim, &pc)?);
            let mut header = vec!["task".to_string(), "eps".into()];
            header.extend((0..d).map(|i| format!("x{i}")));
            header.extend((0..d).map(|i| format!("h{i}")));
            header.extend(["profile", "base_profile", "master_seed", "config_digest"].map(String::from));
            let mut table = Table { header, rows: Vec::new() };
            let (xs, hs) = (grid.x_grid(d), grid.h_grid(d));
            let mut failures = Vec::new();
            for &e in eps {
                let mk = MollifiedKernel::new(kernel.clone(), mu.clone(), e)?;
                for x in &xs {
                    for h in &hs {
                        let mut row = vec![ctx.task.to_string(), e.to_string()];
                        row.extend(x.iter().chain(h).map(|v| v.to_string()));
                        row.push(mk.mollified_profile(x, h).to_string());
                        row.push(k.profile(x, h).to_string());
                        row.extend([ctx.seed.clone(), ctx.digest.clone()]);
                        table.rows.push(row);
                    }
                }
                failures.push(json!({"eps": e, "support_failure_fraction": mk.failure_fraction()}));
            }
            let summary = format!("{} atoms from {m} paths, total mass {:.9}", mu.atoms(), mu.total_mass);
            let document = json!({
                "atoms": mu.atoms(),
                "paths": mu.paths(),
                "total_mass": mu.total_mass,
                "tail_bound": mu.tail_bound(),
                "support_failures": failures,
            });
            TaskOutput { table, document, summary, verification: None }
        }
    })
}
