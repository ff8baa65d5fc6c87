//! Exact thinning simulation of stable-like jump processes.
//!
//! Candidate jumps arrive as a homogeneous Poisson stream with the envelope
//! rate `Λ = κ⁻¹ s_d ε^{-α} / α` and carry Pareto-radius, isotropic
//! displacements with density `κ⁻¹|h|^{-d-α}/Λ` on `|h| ≥ ε`. A candidate
//! `h` at state `x` is kept with probability `κ·n(x,h)|h|^{d+α}`, which lies
//! in `(0, 1]` under the kernel bounds. This adds large jumps to the frozen
//! path at exponential clock times, and the kept jumps have exactly the law
//! of the process driven by `n(x,h)1{|h| ≥ ε}`: there is no time
//! discretization in [`SmallJumpMode::Drop`].
//!
//! Since `κ·n(x,h)|h|^{d+α} ≤ p_sup = κ·profile_sup`, the stream is thinned by
//! the constant `p_sup` up front: candidates arrive at rate `Λ·p_sup` and are
//! kept with probability `κ·n(x,h)|h|^{d+α}/p_sup`. This does not change the
//! law of the output, and constant kernels accept every candidate.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernels::{envelope_intensity, JumpKernel, KernelBounds, MAX_DIM};
use crate::region::Region;
use crate::rng::{Lane, PathRng};
use crate::special::sphere_area;

/// Treatment of jumps smaller than the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmallJumpMode {
    /// Discard them; the path is exactly piecewise constant.
    Drop,
    /// Replace them by Gaussian increments with matched covariance on a
    /// uniform time grid of step `gauss_dt`.
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub eps_cut: f64,
    pub t_max: f64,
    pub small_jump_mode: SmallJumpMode,
    #[serde(default = "default_gauss_dt")]
    pub gauss_dt: f64,
    pub master_seed: u64,
}

fn default_gauss_dt() -> f64 {
    1e-3
}

/// Acceptance probabilities may exceed one by this much before the declared
/// bounds are considered wrong.
pub const ACCEPTANCE_SLACK: f64 = 1e-9;

impl SimConfig {
    pub fn drop(eps_cut: f64, t_max: f64, master_seed: u64) -> Self {
        Self { eps_cut, t_max, small_jump_mode: SmallJumpMode::Drop, gauss_dt: default_gauss_dt(), master_seed }
    }

    pub fn gauss(eps_cut: f64, t_max: f64, gauss_dt: f64, master_seed: u64) -> Self {
        Self { eps_cut, t_max, small_jump_mode: SmallJumpMode::Gauss, gauss_dt, master_seed }
    }

    /// Cutoff `1e-3`; Gaussian small jumps on a `1e-3` grid once `α > 1.5`.
    pub fn recommended(alpha: f64, t_max: f64, master_seed: u64) -> Self {
        if alpha > 1.5 {
            Self::gauss(1e-3, t_max, 1e-3, master_seed)
        } else {
            Self::drop(1e-3, t_max, master_seed)
        }
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_horizon(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.eps_cut > 0.0 && self.eps_cut < 1.0,
            Config,
            "eps_cut = {} must lie in (0, 1)",
            self.eps_cut
        );
        ensure!(self.t_max > 0.0 && self.t_max.is_finite(), Config, "t_max = {} must be positive", self.t_max);
        if self.small_jump_mode == SmallJumpMode::Gauss {
            ensure!(self.gauss_dt > 0.0 && self.gauss_dt.is_finite(), Config, "gauss_dt must be positive");
        }
        Ok(())
    }

    /// Trace of the small-jump covariance bound, `κ⁻¹ s_d ε^{2-α} / (2-α)`,
    /// times the horizon.
    pub fn truncated_mass_bound(&self, bounds: &KernelBounds) -> f64 {
        sphere_area(bounds.d) * self.eps_cut.powf(2.0 - bounds.alpha) / (bounds.kappa * (2.0 - bounds.alpha))
            * self.t_max
    }
}

/// Draws one envelope displacement into `out`: radius `ε·U^{-1/α}`,
/// direction uniform on the sphere.
#[inline]
pub fn sample_candidate(bounds: &KernelBounds, eps_cut: f64, rng: &mut PathRng, out: &mut [f64]) {
    let u = rng.uniform();
    let r = if bounds.alpha == 1.0 { eps_cut / u } else { eps_cut * u.powf(-1.0 / bounds.alpha) };
    rng.direction(out);
    out.iter_mut().for_each(|v| *v *= r);
}

/// Whether the simulation should keep going after an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Receives the position changes of one path as they are generated.
pub trait PathObserver {
    fn start(&mut self, _x0: &[f64]) -> Flow {
        Flow::Continue
    }
    /// The path moved to `x` at time `t`.
    fn event(&mut self, t: f64, x: &[f64]) -> Flow;
    /// Simulation ended at `t_end` (horizon, or the time of a stopping event).
    fn finish(&mut self, _t_end: f64) {}
}

/// Counters from one simulated path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub candidates: u64,
    pub accepted: u64,
    pub gauss_steps: u64,
    pub end_time: f64,
    pub stopped: bool,
}

/// Simulates path `path_index` from `x0`, streaming events into `obs`.
/// The output is a pure function of `(cfg.master_seed, path_index)`.
pub fn run_path<K, O>(kernel: &K, x0: &[f64], cfg: &SimConfig, path_index: u64, obs: &mut O) -> Result<RunStats>
where
    K: JumpKernel + ?Sized,
    O: PathObserver,
{
    cfg.validate()?;
    let bounds = *kernel.bounds();
    let d = bounds.d;
    ensure!(x0.len() == d, Domain, "start point has dimension {}, kernel has {d}", x0.len());
    ensure!(x0.iter().all(|v| v.is_finite()), Domain, "start point is not finite");
    let rate = envelope_intensity(&bounds, cfg.eps_cut)?;
    let kappa = bounds.kappa;
    let p_sup = kappa * kernel.profile_sup();
    if !(p_sup > 0.0 && p_sup <= 1.0 + ACCEPTANCE_SLACK) {
        return Err(Error::KernelBound(format!(
            "kappa * profile_sup = {p_sup} outside (0, 1]; declared kappa is wrong"
        )));
    }

    // thinning the envelope by the constant p_sup first leaves a Poisson
    // stream of rate `rate * p_sup`
    let rate = rate * p_sup;
    let mut cand = PathRng::new(cfg.master_seed, Lane::Candidates, path_index);
    let mut aux = PathRng::new(cfg.master_seed, Lane::Auxiliary, path_index);
    let mut x = [0.0; MAX_DIM];
    x[..d].copy_from_slice(x0);
    let mut h = [0.0; MAX_DIM];
    let mut stats = RunStats::default();

    if obs.start(&x[..d]) == Flow::Stop {
        stats.stopped = true;
        obs.finish(0.0);
        return Ok(stats);
    }

    let mut gauss = match cfg.small_jump_mode {
        SmallJumpMode::Drop => None,
        SmallJumpMode::Gauss => Some(GaussStepper::new(cfg, path_index, d)),
    };

    let mut t = 0.0;
    loop {
        t += cand.exponential() / rate;
        if let Some(g) = gauss.as_mut() {
            let horizon = t.min(cfg.t_max);
            while g.next_time <= horizon {
                let tg = g.next_time;
                g.step(kernel, &mut x[..d]);
                stats.gauss_steps += 1;
                if obs.event(tg, &x[..d]) == Flow::Stop {
                    stats.stopped = true;
                    stats.end_time = tg;
                    obs.finish(tg);
                    return Ok(stats);
                }
            }
        }
        if t > cfg.t_max {
            break;
        }
        stats.candidates += 1;
        let u = cand.uniform() * p_sup;
        sample_candidate(&bounds, cfg.eps_cut, &mut cand, &mut h[..d]);
        let p = kappa * kernel.sample_profile(&x[..d], &h[..d], &mut aux);
        if !(p >= 0.0 && p <= p_sup + ACCEPTANCE_SLACK) {
            return Err(Error::KernelBound(format!(
                "acceptance probability {p} outside [0, {p_sup}] at x = {:?}, h = {:?}",
                &x[..d],
                &h[..d]
            )));
        }
        if u < p {
            x.iter_mut().zip(&h).take(d).for_each(|(xv, hv)| *xv += hv);
            stats.accepted += 1;
            if obs.event(t, &x[..d]) == Flow::Stop {
                stats.stopped = true;
                stats.end_time = t;
                obs.finish(t);
                return Ok(stats);
            }
        }
    }
    stats.end_time = cfg.t_max;
    obs.finish(cfg.t_max);
    Ok(stats)
}

struct GaussStepper {
    rng: PathRng,
    dt: f64,
    eps: f64,
    steps: u64,
    next_time: f64,
    cov: [f64; MAX_DIM * MAX_DIM],
}

impl GaussStepper {
    fn new(cfg: &SimConfig, path_index: u64, _d: usize) -> Self {
        Self {
            rng: PathRng::new(cfg.master_seed, Lane::Gaussian, path_index),
            dt: cfg.gauss_dt,
            eps: cfg.eps_cut,
            steps: 0,
            next_time: cfg.gauss_dt,
            cov: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    fn step<K: JumpKernel + ?Sized>(&mut self, kernel: &K, x: &mut [f64]) {
        let d = x.len();
        kernel.small_jump_covariance(x, self.eps, &mut self.cov[..d * d]);
        let mut z = [0.0; MAX_DIM];
        for v in z.iter_mut().take(d) {
            *v = self.rng.normal();
        }
        let l = cholesky(&self.cov[..d * d], d);
        let sdt = self.dt.sqrt();
        for i in 0..d {
            let mut inc = 0.0;
            for j in 0..=i {
                inc += l[i * d + j] * z[j];
            }
            x[i] += sdt * inc;
        }
        self.steps += 1;
        // recomputed from the step count so grid times carry no accumulated rounding
        self.next_time = self.dt * (self.steps + 1) as f64;
    }
}

/// Lower Cholesky factor of a small symmetric PSD matrix (negative pivots clamp to 0).
fn cholesky(a: &[f64], d: usize) -> [f64; MAX_DIM * MAX_DIM] {
    let mut l = [0.0; MAX_DIM * MAX_DIM];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                l[i * d + i] = s.max(0.0).sqrt();
            } else if l[j * d + j] > 0.0 {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    l
}

/// A piecewise-constant sample path: `X_t = x_i` on `[t_i, t_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSkeleton {
    pub start: Vec<f64>,
    pub times: Vec<f64>,
    /// Row-major event positions, `times.len() × d`.
    pub positions: Vec<f64>,
    pub horizon: f64,
    pub truncated_mass_bound: f64,
}

impl PathSkeleton {
    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.positions[i * d..(i + 1) * d]
    }

    /// `X_t` for `0 ≤ t ≤ horizon`.
    pub fn position_at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            &self.start
        } else {
            self.position(k - 1)
        }
    }

    pub fn end_position(&self) -> &[f64] {
        if self.is_empty() {
            &self.start
        } else {
            self.position(self.len() - 1)
        }
    }

    /// Replays the skeleton through an observer, honoring `Flow::Stop`.
    pub fn replay<O: PathObserver>(&self, obs: &mut O) {
        if obs.start(&self.start) == Flow::Stop {
            obs.finish(0.0);
            return;
        }
        for i in 0..self.len() {
            if obs.event(self.times[i], self.position(i)) == Flow::Stop {
                obs.finish(self.times[i]);
                return;
            }
        }
        obs.finish(self.horizon);
    }
}

#[derive(Debug, Default)]
struct Recorder {
    start: Vec<f64>,
    times: Vec<f64>,
    positions: Vec<f64>,
    end: f64,
}

impl PathObserver for Recorder {
    fn start(&mut self, x0: &[f64]) -> Flow {
        self.start = x0.to_vec();
        Flow::Continue
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        self.times.push(t);
        self.positions.extend_from_slice(x);
        Flow::Continue
    }
    fn finish(&mut self, t_end: f64) {
        self.end = t_end;
    }
}

/// Simulates and records path `path_index` on `[0, cfg.t_max]`.
pub fn simulate_path<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    cfg: &SimConfig,
    path_index: u64,
) -> Result<PathSkeleton> {
    let mut rec = Recorder::default();
    run_path(kernel, x0, cfg, path_index, &mut rec)?;
    Ok(PathSkeleton {
        start: rec.start,
        times: rec.times,
        positions: rec.positions,
        horizon: cfg.t_max,
        truncated_mass_bound: cfg.truncated_mass_bound(kernel.bounds()),
    })
}

/// First exit from a domain, or censoring at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitRecord {
    /// `τ ∧ t_max`.
    pub exit_time: f64,
    pub exit_position: Vec<f64>,
    pub pre_exit_position: Vec<f64>,
    pub exited: bool,
}

/// Observer that stops at the first position outside `domain`.
#[derive(Debug)]
pub struct ExitWatch<'a> {
    domain: &'a Region,
    current: Vec<f64>,
    pub record: ExitRecord,
}

impl<'a> ExitWatch<'a> {
    pub fn new(domain: &'a Region) -> Self {
        Self {
            domain,
            current: Vec::new(),
            record: ExitRecord { exit_time: 0.0, exit_position: Vec::new(), pre_exit_position: Vec::new(), exited: false },
        }
    }
}

impl PathObserver for ExitWatch<'_> {
    fn start(&mut self, x0: &[f64]) -> Flow {
        self.current = x0.to_vec();
        Flow::Continue
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        if self.domain.contains(x) {
            self.current.copy_from_slice(x);
            Flow::Continue
        } else {
            self.record = ExitRecord {
                exit_time: t,
                exit_position: x.to_vec(),
                pre_exit_position: self.current.clone(),
                exited: true,
            };
            Flow::Stop
        }
    }
    fn finish(&mut self, t_end: f64) {
        if !self.record.exited {
            self.record.exit_time = t_end;
            self.record.exit_position = self.current.clone();
            self.record.pre_exit_position = self.current.clone();
        }
    }
}

/// Runs two observers on the same event stream; stops when either stops.
pub struct Both<'a, A, B>(pub &'a mut A, pub &'a mut B);

impl<A: PathObserver, B: PathObserver> PathObserver for Both<'_, A, B> {
    fn start(&mut self, x0: &[f64]) -> Flow {
        let a = self.0.start(x0);
        let b = self.1.start(x0);
        if a == Flow::Stop || b == Flow::Stop {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        let a = self.0.event(t, x);
        let b = self.1.event(t, x);
        if a == Flow::Stop || b == Flow::Stop {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }
    fn finish(&mut self, t_end: f64) {
        self.0.finish(t_end);
        self.1.finish(t_end);
    }
}

pub(crate) fn check_inside(domain: &Region, x0: &[f64]) -> Result<()> {
    domain.validate()?;
    ensure!(domain.dim().is_none_or(|d| d == x0.len()), Precondition, "domain and start point dimensions differ");
    ensure!(domain.contains(x0), Precondition, "start point {x0:?} is not inside the domain");
    Ok(())
}

/// Simulates until the first event outside `domain` (exact in drop mode,
/// since the path only moves at events) or the horizon.
pub fn simulate_until_exit<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    domain: &Region,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<(PathSkeleton, ExitRecord)> {
    check_inside(domain, x0)?;
    let mut rec = Recorder::default();
    let mut watch = ExitWatch::new(domain);
    run_path(kernel, x0, cfg, path_index, &mut Both(&mut rec, &mut watch))?;
    let horizon = if watch.record.exited { watch.record.exit_time } else { cfg.t_max };
    Ok((
        PathSkeleton {
            start: rec.start,
            times: rec.times,
            positions: rec.positions,
            horizon,
            truncated_mass_bound: cfg.truncated_mass_bound(kernel.bounds()),
        },
        watch.record,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ConstantStable, KernelBounds, Modulated};

    fn cauchy() -> ConstantStable {
        ConstantStable::standard(1, 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::drop(0.0, 1.0, 1).validate().is_err());
        assert!(SimConfig::drop(1.5, 1.0, 1).validate().is_err());
        assert!(SimConfig::drop(0.1, -1.0, 1).validate().is_err());
        assert!(SimConfig::gauss(0.1, 1.0, 0.0, 1).validate().is_err());
        assert!(SimConfig::recommended(1.7, 1.0, 1).small_jump_mode == SmallJumpMode::Gauss);
        assert!(SimConfig::recommended(1.0, 1.0, 1).small_jump_mode == SmallJumpMode::Drop);
    }

    #[test]
    fn skeleton_invariants() {
        let k = Modulated::new(KernelBounds::new(2, 1.2, 0.5, None).unwrap(), 0.3, 0.5).unwrap();
        let cfg = SimConfig::drop(0.01, 2.0, 11);
        let p = simulate_path(&k, &[0.1, -0.2], &cfg, 5).unwrap();
        assert!(!p.is_empty());
        assert!(p.times.windows(2).all(|w| w[0] < w[1]));
        assert!(p.times.iter().all(|&t| t > 0.0 && t <= 2.0));
        assert!(p.positions.iter().all(|v| v.is_finite()));
        assert_eq!(p.position_at(0.0), &[0.1, -0.2]);
        assert_eq!(p.position_at(p.times[0]), p.position(0));
        // jumps are at least eps_cut in drop mode
        let mut prev = p.start.clone();
        for i in 0..p.len() {
            let x = p.position(i);
            let j: f64 = x.iter().zip(&prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(j >= 0.01 * (1.0 - 1e-12));
            prev = x.to_vec();
        }
    }

    #[test]
    fn deterministic_per_path_index() {
        let k = cauchy();
        let cfg = SimConfig::drop(1e-2, 1.0, 42);
        let a = simulate_path(&k, &[0.0], &cfg, 7).unwrap();
        let b = simulate_path(&k, &[0.0], &cfg, 7).unwrap();
        let c = simulate_path(&k, &[0.0], &cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn wrong_kappa_is_detected() {
        // c = 1.5 with the sup claimed by a kernel whose kappa admits c: fine.
        let ok = ConstantStable::new(KernelBounds::new(1, 1.0, 0.5, None).unwrap(), 1.5).unwrap();
        assert!(simulate_path(&ok, &[0.0], &SimConfig::drop(0.1, 1.0, 1), 0).is_ok());
        // a modulated kernel with amplitude beyond kappa's reach still stays below 1/kappa
        // at the profile level, so craft an explicit violation through a user kernel
        let b = KernelBounds::new(1, 1.0, 0.5, None).unwrap();
        let bad = crate::kernels::UserKernel::new(b, "too-big", |_x, h| 3.0 / (h[0] * h[0])).unwrap();
        let err = simulate_path(&bad, &[0.0], &SimConfig::drop(0.1, 5.0, 1), 0).unwrap_err();
        assert!(matches!(err, Error::KernelBound(_)));
    }

    #[test]
    fn exit_record_geometry() {
        let k = cauchy();
        let dom = Region::ball(&[0.0], 1.0);
        let cfg = SimConfig::drop(1e-2, 50.0, 3);
        for i in 0..200 {
            let (p, e) = simulate_until_exit(&k, &[0.0], &dom, &cfg, i).unwrap();
            assert!(e.exited);
            assert!(!dom.contains(&e.exit_position));
            assert!(dom.contains(&e.pre_exit_position));
            assert_eq!(*p.times.last().unwrap(), e.exit_time);
            assert_eq!(p.end_position(), e.exit_position.as_slice());
        }
        assert!(matches!(
            simulate_until_exit(&k, &[1.0], &dom, &cfg, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn big_first_jump_exits_immediately() {
        // unit-rate constant kernel with cutoff larger than the ball diameter
        let k = ConstantStable::new(KernelBounds::new(1, 1.0, 0.5, None).unwrap(), 2.0).unwrap();
        let dom = Region::ball(&[0.0], 0.2);
        let cfg = SimConfig::drop(0.5, 100.0, 9);
        for i in 0..50 {
            let (p, e) = simulate_until_exit(&k, &[0.0], &dom, &cfg, i).unwrap();
            assert!(e.exited);
            assert_eq!(p.len(), 1);
        }
    }

    #[test]
    fn gauss_mode_moves_on_grid() {
        let k = ConstantStable::standard(1, 1.8).unwrap();
        let cfg = SimConfig::gauss(0.05, 0.1, 0.01, 5);
        let p = simulate_path(&k, &[0.0], &cfg, 0).unwrap();
        assert!(p.len() >= 10);
        assert!(p.times.windows(2).all(|w| w[0] < w[1]));
        let grid: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
        for g in grid {
            assert!(p.times.contains(&g), "missing grid time {g}");
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 3.0, 0.1, 0.4, 0.1, 2.0];
        let l = cholesky(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }
}
