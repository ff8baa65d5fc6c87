//! Experiment configuration: one TOML document with a kernel, simulation
//! settings and a list of tasks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use stablemc_core::kernels::{Anisotropic, ConstantStable, JumpKernel, KernelBounds, Modulated};
use stablemc_core::{Field, Region, SimConfig, SmallJumpMode};

use crate::error::CliError;

/// Environment variable that replaces `master_seed` for CI sweeps.
pub const SEED_ENV: &str = "STABLEMC_MASTER_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub kernel: KernelSpec,
    pub sim: SimSpec,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskSpec>,
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("stablemc-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Isotropic α-stable kernel with symbol `|ξ|^α`.
    Standard { d: usize, alpha: f64 },
    ConstantStable { d: usize, alpha: f64, kappa: f64, c: f64, eta: Option<f64> },
    Modulated { d: usize, alpha: f64, kappa: f64, amplitude: f64, width: f64, eta: Option<f64> },
    Anisotropic { d: usize, alpha: f64, kappa: f64, strength: f64, eta: Option<f64> },
}

impl KernelSpec {
    pub fn build(&self) -> stablemc_core::Result<Arc<dyn JumpKernel>> {
        Ok(match *self {
            KernelSpec::Standard { d, alpha } => Arc::new(ConstantStable::standard(d, alpha)?),
            KernelSpec::ConstantStable { d, alpha, kappa, c, eta } => {
                Arc::new(ConstantStable::new(KernelBounds::new(d, alpha, kappa, eta)?, c)?)
            }
            KernelSpec::Modulated { d, alpha, kappa, amplitude, width, eta } => {
                Arc::new(Modulated::checked(KernelBounds::new(d, alpha, kappa, eta)?, amplitude, width)?)
            }
            KernelSpec::Anisotropic { d, alpha, kappa, strength, eta } => {
                Arc::new(Anisotropic::new(KernelBounds::new(d, alpha, kappa, eta)?, strength)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub eps_cut: f64,
    pub t_max: f64,
    #[serde(default = "drop_mode")]
    pub small_jump_mode: SmallJumpMode,
    #[serde(default = "default_dt")]
    pub gauss_dt: f64,
}

fn drop_mode() -> SmallJumpMode {
    SmallJumpMode::Drop
}

fn default_dt() -> f64 {
    1e-3
}

/// A curve given as `[[t, [x...]], ...]`.
pub type CurveSpec = Vec<(f64, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Simulate { name: String, x0: Vec<f64>, paths: usize },
    EstimateExit { name: String, x0: Vec<f64>, domain: Region, n: usize },
    EstimateHit { name: String, y: Vec<f64>, target: Region, container: Region, n: usize },
    EstimateOccupation { name: String, x0: Vec<f64>, sets: Vec<Region>, domain: Region, n: usize },
    EstimateTube { name: String, curve: CurveSpec, eps: Vec<f64>, n: usize },
    EstimateResolvent { name: String, x0: Vec<f64>, fields: Vec<Field>, lambda: f64, n: usize },
    VerifyScaling { name: String, radii: Vec<f64>, n: usize },
    VerifyHitting { name: String, center: Vec<f64>, targets: Vec<Region>, starts: Vec<Vec<f64>>, n: usize },
    VerifySupport { name: String, curves: Vec<CurveSpec>, eps: Vec<f64>, n: usize },
    VerifyPhi {
        name: String,
        levels: Vec<f64>,
        sets_per_level: usize,
        points_per_axis: usize,
        set_seed: u64,
        n: usize,
    },
    VerifyMollify {
        name: String,
        x0: Vec<f64>,
        f: Field,
        eps: Vec<f64>,
        lambda: f64,
        n: usize,
        m: usize,
        grid: GridSpec,
    },
    MollifyBuild { name: String, x0: Vec<f64>, lambda: f64, m: usize, eps: Vec<f64>, grid: GridSpec },
}

/// `(x, h)` evaluation grid: `x_points` along the first axis on
/// `[x_min, x_max]`, `h_radii` log-spaced radii on `[h_min, h_max]` times
/// `h_directions` directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub h_radii: usize,
    #[serde(default = "two")]
    pub h_directions: usize,
}

fn two() -> usize {
    2
}

impl GridSpec {
    pub fn x_grid(&self, d: usize) -> Vec<Vec<f64>> {
        (0..self.x_points)
            .map(|i| {
                let s = if self.x_points == 1 { 0.0 } else { i as f64 / (self.x_points - 1) as f64 };
                let mut x = vec![0.0; d];
                x[0] = self.x_min + s * (self.x_max - self.x_min);
                x
            })
            .collect()
    }

    pub fn h_grid(&self, d: usize) -> Vec<Vec<f64>> {
        stablemc_core::kernels::grid_h(d, self.h_min, self.h_max, self.h_radii, self.h_directions)
    }
}

impl TaskSpec {
    pub fn name(&self) -> &str {
        match self {
            TaskSpec::Simulate { name, .. }
            | TaskSpec::EstimateExit { name, .. }
            | TaskSpec::EstimateHit { name, .. }
            | TaskSpec::EstimateOccupation { name, .. }
            | TaskSpec::EstimateTube { name, .. }
            | TaskSpec::EstimateResolvent { name, .. }
            | TaskSpec::VerifyScaling { name, .. }
            | TaskSpec::VerifyHitting { name, .. }
            | TaskSpec::VerifySupport { name, .. }
            | TaskSpec::VerifyPhi { name, .. }
            | TaskSpec::VerifyMollify { name, .. }
            | TaskSpec::MollifyBuild { name, .. } => name,
        }
    }
}

impl ExperimentConfig {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            eps_cut: self.sim.eps_cut,
            t_max: self.sim.t_max,
            small_jump_mode: self.sim.small_jump_mode,
            gauss_dt: self.sim.gauss_dt,
            master_seed: self.master_seed,
        }
    }

    /// Digest of everything that determines a task's results. Worker count
    /// and output location are excluded.
    pub fn task_digest(&self, task: &TaskSpec) -> String {
        let doc = json!({"kernel": self.kernel, "sim": self.sim_config(), "task": task});
        let hash = Sha256::digest(doc.to_string().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.tasks.is_empty() {
            return Err(CliError::Config("config defines no [[task]]".into()));
        }
        self.kernel.build()?;
        self.sim_config().validate()?;
        let mut names = std::collections::HashSet::new();
        for t in &self.tasks {
            let name = t.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(CliError::Config(format!("task name {name:?} must be nonempty [A-Za-z0-9_-]")));
            }
            if !names.insert(name) {
                return Err(CliError::Config(format!("duplicate task name {name:?}")));
            }
        }
        Ok(())
    }
}

/// Reads, parses and validates a config; `seed_override` replaces `master_seed`.
pub fn load(path: &Path, seed_override: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse(&text)?;
    if let Some(s) = seed_override {
        cfg.master_seed = s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} = {s:?} is not an unsigned 64-bit integer")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}
