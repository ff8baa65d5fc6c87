//! Statistical verification suites.
//!
//! Positivity claims are checked as "95% lower confidence bound > 0"; every
//! suite records the parameters and seed it ran with, plus a digest of both.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::estimators::{
    exit_time_mean, hitting_probability, occupation_times, tube_probabilities, EstimateWithCI, Polyline,
    ScalarField, Z95,
};
use crate::kernels::{JumpKernel, KernelFamily};
use crate::mollify::{
    bound_inheritance_check, kernel_convergence_check, pipeline_measure, resolvent_convergence_check,
    ConvergenceRow, MollifiedKernel, PipelineConfig,
};
use crate::region::{dyadic_union, Region};
use crate::rng::{derive_seed, Lane, PathRng};
use crate::sampler::{SimConfig, SmallJumpMode};

/// One falsifiable statement and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub description: String,
    pub observed: f64,
    pub threshold: f64,
    pub pass: bool,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationResult {
    pub theorem_id: String,
    pub checks: Vec<Check>,
    pub overall: bool,
    pub master_seed: u64,
    pub parameters: Value,
    /// SHA-256 of the parameters and seed.
    pub digest: String,
}

impl VerificationResult {
    pub fn new(theorem_id: &str, master_seed: u64, parameters: Value) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(parameters.to_string().as_bytes());
        hasher.update(master_seed.to_le_bytes());
        let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self { theorem_id: theorem_id.to_string(), checks: Vec::new(), overall: false, master_seed, parameters, digest }
    }

    pub fn check(&mut self, description: impl Into<String>, observed: f64, threshold: f64, pass: bool, n: usize) {
        self.checks.push(Check { description: description.into(), observed, threshold, pass, n_samples: n });
        self.overall = self.checks.iter().all(|c| c.pass) && self.checks.iter().any(|c| c.n_samples > 0);
    }

    /// `observed > threshold`.
    pub fn check_above(&mut self, description: impl Into<String>, observed: f64, threshold: f64, n: usize) {
        self.check(description, observed, threshold, observed > threshold, n);
    }

    /// `observed ≤ threshold`.
    pub fn check_at_most(&mut self, description: impl Into<String>, observed: f64, threshold: f64, n: usize) {
        self.check(description, observed, threshold, observed <= threshold, n);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn cfg_json(cfg: &SimConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

/// `E τ_{B(0,r)} / r^α` is the same for every `r` (within 4 combined SE plus
/// censoring bias), and positive. Only constant kernels scale exactly.
pub fn verify_exit_scaling<K: JumpKernel + ?Sized>(
    kernel: &K,
    r_list: &[f64],
    cfg: &SimConfig,
    n: usize,
) -> Result<(Vec<EstimateWithCI>, VerificationResult)> {
    let family = kernel.family();
    ensure!(
        matches!(family, KernelFamily::ConstantStable { .. }),
        Precondition,
        "exit-time scaling is exact only for constant-stable kernels, got {}",
        family.name()
    );
    ensure!(!r_list.is_empty() && r_list.iter().all(|&r| r > 0.0), Domain, "radii must be positive");
    let b = *kernel.bounds();
    let mut res = VerificationResult::new(
        "exit-scaling",
        cfg.master_seed,
        json!({"family": family, "alpha": b.alpha, "d": b.d, "radii": r_list, "sim": cfg_json(cfg), "n": n}),
    );
    let origin = vec![0.0; b.d];
    let mut ests = Vec::with_capacity(r_list.len());
    for &r in r_list {
        ests.push(exit_time_mean(kernel, &origin, &Region::ball(&origin, r), cfg, n)?);
    }
    let scaled: Vec<(f64, f64, f64)> = r_list
        .iter()
        .zip(&ests)
        .map(|(&r, e)| {
            let s = r.powf(b.alpha);
            (e.mean / s, e.std_error / s, e.bias_bound / s)
        })
        .collect();
    for (&r, &(m, se, _)) in r_list.iter().zip(&scaled) {
        res.check_above(format!("E tau / r^alpha lower confidence bound at r = {r}"), m - Z95 * se, 0.0, n);
        res.check(format!("E tau / r^alpha finite at r = {r}"), m, f64::INFINITY, m.is_finite(), n);
    }
    let (m0, se0, b0) = scaled[0];
    for (&r, &(m, se, bias)) in r_list.iter().zip(&scaled).skip(1) {
        let tol = 4.0 * (se * se + se0 * se0).sqrt() + bias + b0;
        res.check_at_most(
            format!("|E tau/r^alpha at r = {r} minus at r = {}|", r_list[0]),
            (m - m0).abs(),
            tol,
            n,
        );
    }
    Ok((ests, res))
}

/// `min_{i,j} P^{y_j}(T_{A_i} < τ_{B(x,3)}) / |A_i|` has a positive lower
/// bound, and hitting frequencies are monotone along nested targets.
pub fn verify_hitting_bound<K: JumpKernel + ?Sized>(
    kernel: &K,
    center: &[f64],
    a_list: &[Region],
    y_list: &[Vec<f64>],
    cfg: &SimConfig,
    n: usize,
) -> Result<(Vec<Vec<EstimateWithCI>>, VerificationResult)> {
    ensure!(!a_list.is_empty() && !y_list.is_empty(), Domain, "need at least one target and one start");
    let inner = Region::ball(center, 1.0);
    let outer = Region::ball(center, 2.0);
    for a in a_list {
        a.validate()?;
        ensure!(!a.is_empty(), Precondition, "hitting targets must be nonempty");
        ensure!(a.is_subset_of(&inner), Precondition, "hitting target must lie inside ball(x, 1)");
    }
    for y in y_list {
        ensure!(outer.contains(y), Precondition, "start {y:?} must lie inside ball(x, 2)");
    }
    let container = Region::ball(center, 3.0);
    let mut res = VerificationResult::new(
        "hitting-bound",
        cfg.master_seed,
        json!({"family": kernel.family(), "center": center, "targets": a_list, "starts": y_list, "sim": cfg_json(cfg), "n": n}),
    );
    let mut table = Vec::with_capacity(a_list.len());
    let mut min_ratio = f64::INFINITY;
    for a in a_list {
        let mut row = Vec::with_capacity(y_list.len());
        for y in y_list {
            let e = hitting_probability(kernel, y, a, &container, cfg, n)?;
            min_ratio = min_ratio.min(e.ci_low / a.volume());
            row.push(e);
        }
        table.push(row);
    }
    res.check_above("min over targets and starts of Wilson lower bound / |A|", min_ratio, 0.0, n);
    // nested targets on shared paths: hits can only be lost
    let mut violations = 0usize;
    for i in 1..a_list.len() {
        if a_list[i].is_subset_of(&a_list[i - 1]) {
            violations += table[i].iter().zip(&table[i - 1]).filter(|(inner, outer)| inner.mean > outer.mean).count();
        }
    }
    res.check_at_most("hitting frequency increases along a nested target", violations as f64, 0.0, n);
    Ok((table, res))
}

/// Whether a DROP-mode tube is too narrow to follow a moving curve: any kept
/// jump is at least `eps_cut` long, but can move at most `2ε` inside the tube.
pub fn tube_is_unreachable(cfg: &SimConfig, eps: f64) -> bool {
    cfg.small_jump_mode == SmallJumpMode::Drop && 2.0 * eps < cfg.eps_cut
}

/// For every curve and radius, the Wilson lower bound of the tube probability is positive.
pub fn verify_support_theorem<K: JumpKernel + ?Sized>(
    kernel: &K,
    phi_list: &[Polyline],
    eps_list: &[f64],
    cfg: &SimConfig,
    n: usize,
) -> Result<(Vec<Vec<EstimateWithCI>>, VerificationResult)> {
    ensure!(!phi_list.is_empty() && !eps_list.is_empty(), Domain, "need at least one curve and one radius");
    let mut res = VerificationResult::new(
        "support",
        cfg.master_seed,
        json!({"family": kernel.family(), "curves": phi_list.len(), "radii": eps_list, "sim": cfg_json(cfg), "n": n}),
    );
    let mut table = Vec::with_capacity(phi_list.len());
    for (k, phi) in phi_list.iter().enumerate() {
        let ests = tube_probabilities(kernel, phi, eps_list, cfg, n)?;
        for (&eps, e) in eps_list.iter().zip(&ests) {
            let mut desc = format!("curve {k}, eps = {eps}: Wilson lower bound of tube probability");
            if e.ci_low <= 0.0 && tube_is_unreachable(cfg, eps) {
                desc.push_str(&format!(
                    " (tube narrower than eps_cut/2 = {}: no kept jump fits, so only curves within eps of the start can be followed)",
                    cfg.eps_cut / 2.0
                ));
            }
            res.check_above(desc, e.ci_low, 0.0, n);
        }
        table.push(ests);
    }
    Ok((table, res))
}

/// One row of the occupation envelope table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub measure_level: f64,
    /// Smallest mean occupation over sets and start points at this level.
    pub raw_min: f64,
    /// Smallest CLT lower bound at this level.
    pub raw_lower: f64,
    /// `min` of `raw_min` over this and all larger levels.
    pub envelope: f64,
    pub envelope_lower: f64,
    pub sets: usize,
    pub points: usize,
    pub n: usize,
}

/// Settings for [`estimate_phi_envelope`].
#[derive(Debug, Clone)]
pub struct EnvelopeConfig {
    /// Measure levels in `(0, 1)`, increasing.
    pub levels: Vec<f64>,
    pub sets_per_level: usize,
    /// Start points inside `Q(0, 1/2)`.
    pub points: Vec<Vec<f64>>,
    /// Dyadic refinement level of the random sets.
    pub dyadic_level: u32,
    /// Seed of the random sets, separate from the path seed.
    pub set_seed: u64,
}

impl EnvelopeConfig {
    pub fn new(d: usize, levels: Vec<f64>, sets_per_level: usize, points_per_axis: usize, set_seed: u64) -> Self {
        let mut level = 1;
        while (1u64 << (level * d as u32)) < 128 {
            level += 1;
        }
        let axis: Vec<f64> = if points_per_axis == 1 {
            vec![0.0]
        } else {
            (0..points_per_axis).map(|i| -0.24 + 0.48 * i as f64 / (points_per_axis - 1) as f64).collect()
        };
        let mut points = vec![Vec::new()];
        for _ in 0..d {
            points = points
                .into_iter()
                .flat_map(|p| axis.iter().map(move |&a| [p.clone(), vec![a]].concat()))
                .collect();
        }
        Self { levels, sets_per_level, points, dyadic_level: level, set_seed }
    }
}

/// Random unions of dyadic sub-cubes of `Q(0,1)` with measure at least `level`.
pub fn random_dyadic_sets(d: usize, level: f64, count: usize, dyadic_level: u32, seed: u64) -> Vec<Region> {
    let cells = 1usize << (dyadic_level as usize * d);
    let k = ((level * cells as f64).ceil() as usize).clamp(1, cells);
    let center = vec![0.0; d];
    (0..count as u64)
        .map(|j| {
            let mut rng = PathRng::new(seed, Lane::Oracle, j);
            let mut idx: Vec<u64> = (0..cells as u64).collect();
            for i in 0..k {
                let r = i + rng.index(cells - i);
                idx.swap(i, r);
            }
            idx.truncate(k);
            dyadic_union(&center, 1.0, dyadic_level, idx)
        })
        .collect()
}

/// Estimates `φ̂(ε) = min_{|B| ≥ ε, x} E^x ∫_0^{τ_Q} 1_B(X_s) ds` over random
/// dyadic sets `B ⊆ Q(0,1)` and start points in `Q(0,1/2)`, then takes the
/// suffix minimum so the envelope is nondecreasing.
pub fn estimate_phi_envelope<K: JumpKernel + ?Sized>(
    kernel: &K,
    env: &EnvelopeConfig,
    cfg: &SimConfig,
    n: usize,
) -> Result<(Vec<EnvelopeRow>, VerificationResult)> {
    let d = kernel.bounds().d;
    ensure!(!env.levels.is_empty(), Domain, "need at least one measure level");
    ensure!(env.levels.iter().all(|&l| l > 0.0 && l < 1.0), Domain, "measure levels must lie in (0, 1)");
    ensure!(env.levels.windows(2).all(|w| w[0] < w[1]), Domain, "measure levels must increase");
    ensure!(env.sets_per_level >= 1 && !env.points.is_empty(), Domain, "need sets and start points");
    let half = Region::cube(&vec![0.0; d], 0.5);
    for x in &env.points {
        ensure!(half.contains(x), Precondition, "start point {x:?} must lie inside Q(0, 1/2)");
    }
    let domain = Region::cube(&vec![0.0; d], 1.0);
    let mut sets = Vec::new();
    for (i, &level) in env.levels.iter().enumerate() {
        let sd = derive_seed(env.set_seed, i as u64);
        sets.extend(random_dyadic_sets(d, level, env.sets_per_level, env.dyadic_level, sd));
    }
    for s in &sets {
        ensure!(s.is_subset_of(&domain), Precondition, "random set escapes the cube");
    }
    let mut res = VerificationResult::new(
        "occupation-envelope",
        cfg.master_seed,
        json!({
            "family": kernel.family(), "levels": env.levels, "sets_per_level": env.sets_per_level,
            "points": env.points, "dyadic_level": env.dyadic_level, "set_seed": env.set_seed,
            "sim": cfg_json(cfg), "n": n
        }),
    );
    let mut raw = vec![(f64::INFINITY, f64::INFINITY); env.levels.len()];
    for x in &env.points {
        let ests = occupation_times(kernel, x, &sets, &domain, cfg, n)?;
        for (k, e) in ests.iter().enumerate() {
            let l = k / env.sets_per_level;
            raw[l].0 = raw[l].0.min(e.mean);
            raw[l].1 = raw[l].1.min(e.ci_low);
        }
    }
    let mut rows: Vec<EnvelopeRow> = Vec::with_capacity(raw.len());
    let (mut env_mean, mut env_low) = (f64::INFINITY, f64::INFINITY);
    for (l, &(m, lo)) in raw.iter().enumerate().rev() {
        env_mean = env_mean.min(m);
        env_low = env_low.min(lo);
        rows.push(EnvelopeRow {
            measure_level: env.levels[l],
            raw_min: m,
            raw_lower: lo,
            envelope: env_mean,
            envelope_lower: env_low,
            sets: env.sets_per_level,
            points: env.points.len(),
            n,
        });
    }
    rows.reverse();
    for r in &rows {
        res.check_above(format!("envelope lower bound at measure {}", r.measure_level), r.envelope_lower, 0.0, n);
    }
    let decreases = rows.windows(2).filter(|w| w[1].envelope < w[0].envelope).count();
    res.check_at_most("envelope decreases between levels", decreases as f64, 0.0, n);
    if let Some(top) = rows.last().filter(|r| r.measure_level >= 0.9) {
        res.check_above(
            format!("nearly full cube (measure {}): min lower bound over sets and points", top.measure_level),
            top.raw_lower,
            0.0,
            n,
        );
    }
    Ok((rows, res))
}

/// Inputs of [`verify_mollify_pipeline`].
pub struct PipelineInputs<'a> {
    pub x0: Vec<f64>,
    pub f: &'a dyn ScalarField,
    pub eps_list: Vec<f64>,
    pub x_grid: Vec<Vec<f64>>,
    pub h_grid: Vec<Vec<f64>>,
    pub pipeline: PipelineConfig,
}

/// Tables produced by [`verify_mollify_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineTables {
    pub resolvent: Vec<ConvergenceRow>,
    pub kernel: Vec<ConvergenceRow>,
    pub total_mass: f64,
}

/// Bound inheritance on the grid for every `ε`, then either the error
/// trends (largest `ε` versus smallest, separated by `Z95` combined SE) or,
/// for constant base kernels, zero error within 4 SE.
pub fn verify_mollify_pipeline(
    base: Arc<dyn JumpKernel>,
    inputs: &PipelineInputs<'_>,
    cfg: &SimConfig,
) -> Result<(PipelineTables, VerificationResult)> {
    let eps = &inputs.eps_list;
    ensure!(!eps.is_empty(), Domain, "eps_list must be nonempty");
    let pc = inputs.pipeline;
    let b = *base.bounds();
    let mut res = VerificationResult::new(
        "mollify-pipeline",
        cfg.master_seed,
        json!({
            "family": base.family(), "x0": inputs.x0, "eps": eps, "lambda": pc.lambda, "n": pc.n, "m": pc.m,
            "x_grid": inputs.x_grid.len(), "h_grid": inputs.h_grid.len(), "sim": cfg_json(cfg)
        }),
    );
    let mu = Arc::new(pipeline_measure(base.as_ref(), &inputs.x0, cfg, &pc)?);
    let grid = inputs.x_grid.len() * inputs.h_grid.len();
    for &e in eps {
        let mk = MollifiedKernel::new(base.clone(), mu.clone(), e)?;
        let rep = bound_inheritance_check(&mk, &inputs.x_grid, &inputs.h_grid)?;
        res.check(format!("eps = {e}: min n^eps |h|^(d+alpha) >= kappa"), rep.min_ratio, b.kappa, rep.lower_ok, grid);
        res.check(
            format!("eps = {e}: max n^eps |h|^(d+alpha) <= 1/kappa"),
            rep.max_ratio,
            1.0 / b.kappa,
            rep.upper_ok,
            grid,
        );
        res.check_at_most(format!("eps = {e}: asymmetry in h"), rep.max_asymmetry, 0.0, grid);
    }
    let resolvent =
        resolvent_convergence_check(base.clone(), mu.clone(), &inputs.x0, inputs.f, eps, cfg, &pc)?;
    let kernel = kernel_convergence_check(base.clone(), mu.clone(), eps, &inputs.x_grid, &inputs.h_grid)?;
    let constant = matches!(base.family(), KernelFamily::ConstantStable { .. });
    for (name, rows, count) in [("resolvent", &resolvent, pc.n), ("kernel", &kernel, pc.m)] {
        if constant {
            for r in rows.iter() {
                let tol = 4.0 * r.combined_se;
                res.check_at_most(format!("{name} error at eps = {} (constant base)", r.eps), r.abs_error, tol, count);
            }
        } else if rows.len() >= 2 {
            let (hi, lo) = (&rows[0], &rows[rows.len() - 1]);
            let tol = Z95 * (hi.combined_se.powi(2) + lo.combined_se.powi(2)).sqrt();
            res.check_above(
                format!("{name} error at eps = {} minus error at eps = {}", hi.eps, lo.eps),
                hi.abs_error - lo.abs_error,
                tol,
                count,
            );
        }
    }
    Ok((PipelineTables { resolvent, kernel, total_mass: mu.total_mass }, res))
}

/// Maps a failed suite to an error, for callers that treat failure as fatal.
pub fn require(res: &VerificationResult) -> Result<()> {
    if res.overall {
        Ok(())
    } else {
        let msgs: Vec<String> = res
            .failures()
            .map(|c| format!("{} (observed {}, threshold {})", c.description, c.observed, c.threshold))
            .collect();
        Err(Error::Diagnostic(format!("{} failed: {}", res.theorem_id, msgs.join("; "))))
    }
}
