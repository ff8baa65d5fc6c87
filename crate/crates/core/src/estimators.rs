//! Monte Carlo functionals of the process with 95% confidence intervals.
//!
//! Every estimator evaluates its functional exactly on the piecewise-constant
//! skeleton of each path, so the only errors are Monte Carlo error, the
//! small-jump cutoff and horizon censoring. The latter two are reported in
//! `bias_bound`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kernels::JumpKernel;
use crate::parallel::map_paths;
use crate::region::Region;
use crate::sampler::{check_inside, run_path, Flow, PathObserver, SimConfig, SmallJumpMode};
use crate::special::{getoor_constant, stable_normalization};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Clt,
    Wilson,
}

/// A Monte Carlo mean with its standard error and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub method: CiMethod,
    pub bias_bound: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EstimateWithCI {
    /// Sample mean with CLT interval.
    pub fn from_samples(values: &[f64], bias_bound: f64) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let se = (var / n as f64).sqrt();
        Self {
            mean,
            std_error: se,
            n_samples: n,
            method: CiMethod::Clt,
            bias_bound,
            ci_low: mean - Z95 * se,
            ci_high: mean + Z95 * se,
        }
    }

    /// Binomial proportion with Wilson score interval.
    pub fn wilson(successes: usize, n: usize, bias_bound: f64) -> Self {
        let nf = n as f64;
        let p = successes as f64 / nf;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / nf;
        let center = (p + z2 / (2.0 * nf)) / denom;
        let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        Self {
            mean: p,
            std_error: (p * (1.0 - p) / nf).sqrt(),
            n_samples: n,
            method: CiMethod::Wilson,
            bias_bound,
            ci_low: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
            ci_high: if successes == n { 1.0 } else { (center + half).min(1.0) },
        }
    }

    /// A value known exactly, with a zero-width interval.
    pub fn exact(value: f64, n: usize, method: CiMethod) -> Self {
        Self { mean: value, std_error: 0.0, n_samples: n, method, bias_bound: 0.0, ci_low: value, ci_high: value }
    }
}

/// A bounded scalar field with a declared `sup |f|`.
pub trait ScalarField: Sync {
    fn eval(&self, x: &[f64]) -> f64;
    fn sup_abs(&self) -> f64;
}

/// Built-in fields, serializable for experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Field {
    Constant { value: f64 },
    Indicator { region: Region },
    /// `height · exp(-|x - center|² / (2 width²))`.
    Gaussian { center: Vec<f64>, width: f64, height: f64 },
    /// `Σ weight_i · field_i`.
    Sum { terms: Vec<(f64, Field)> },
}

impl ScalarField for Field {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Field::Constant { value } => *value,
            Field::Indicator { region } => {
                if region.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            Field::Gaussian { center, width, height } => {
                let r2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                height * (-0.5 * r2 / (width * width)).exp()
            }
            Field::Sum { terms } => terms.iter().map(|(w, f)| w * f.eval(x)).sum(),
        }
    }

    fn sup_abs(&self) -> f64 {
        match self {
            Field::Constant { value } => value.abs(),
            Field::Indicator { region } => {
                if region.is_empty() {
                    0.0
                } else {
                    1.0
                }
            }
            Field::Gaussian { height, .. } => height.abs(),
            Field::Sum { terms } => terms.iter().map(|(w, f)| w.abs() * f.sup_abs()).sum(),
        }
    }
}

/// Closure-backed field.
pub struct FnField<F> {
    pub f: F,
    pub sup: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for FnField<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn sup_abs(&self) -> f64 {
        self.sup
    }
}

/// Continuous piecewise-linear curve through `(time, point)` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl Polyline {
    pub fn new(vertices: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        ensure!(vertices.len() >= 2, Domain, "a polyline needs at least two vertices");
        ensure!(vertices[0].0 == 0.0, Domain, "polyline must start at time 0");
        let d = vertices[0].1.len();
        ensure!(d > 0, Domain, "polyline points have no coordinates");
        for w in vertices.windows(2) {
            ensure!(w[1].0 > w[0].0, Domain, "polyline times must be strictly increasing");
        }
        for (t, p) in &vertices {
            ensure!(t.is_finite() && p.iter().all(|v| v.is_finite()), Domain, "polyline has non-finite coordinates");
            ensure!(p.len() == d, Domain, "polyline points differ in dimension");
        }
        let (times, points) = vertices.into_iter().unzip();
        Ok(Self { times, points })
    }

    /// `a → b → a` over `[0, t0]` with the turn at `t0/2`.
    pub fn zigzag(a: &[f64], b: &[f64], t0: f64) -> Result<Self> {
        Self::new(vec![(0.0, a.to_vec()), (0.5 * t0, b.to_vec()), (t0, a.to_vec())])
    }

    pub fn constant(x: &[f64], t0: f64) -> Result<Self> {
        Self::new(vec![(0.0, x.to_vec()), (t0, x.to_vec())])
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn start(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.points.iter().map(Vec::as_slice))
    }

    /// `φ(s)` for `s` in `[0, end_time]`, clamped outside.
    pub fn at(&self, s: f64, out: &mut [f64]) {
        let k = self.times.partition_point(|&t| t <= s);
        if k == 0 {
            out.copy_from_slice(&self.points[0]);
        } else if k == self.times.len() {
            out.copy_from_slice(self.points.last().unwrap());
        } else {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            let w = (s - t0) / (t1 - t0);
            for ((o, a), b) in out.iter_mut().zip(&self.points[k - 1]).zip(&self.points[k]) {
                *o = a + w * (b - a);
            }
        }
    }

    /// `max_{s ∈ [a, b]} |x - φ(s)|`. The distance is convex along each
    /// linear piece, so only the endpoints and interior vertices matter.
    pub fn max_distance(&self, x: &[f64], a: f64, b: f64) -> f64 {
        let mut buf = [0.0; crate::kernels::MAX_DIM];
        let d = x.len();
        let dist = |p: &[f64]| p.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        self.at(a, &mut buf[..d]);
        let mut m = dist(&buf[..d]);
        self.at(b, &mut buf[..d]);
        m = m.max(dist(&buf[..d]));
        let lo = self.times.partition_point(|&t| t <= a);
        let hi = self.times.partition_point(|&t| t < b);
        for p in &self.points[lo..hi.max(lo)] {
            m = m.max(dist(p));
        }
        m
    }
}

/// Heuristic horizon for exit problems from a ball of radius `r`: twenty
/// times the stable exit time scaled to the weakest admissible kernel.
pub fn default_exit_horizon(bounds: &crate::kernels::KernelBounds, r: f64) -> f64 {
    let scale = stable_normalization(bounds.d, bounds.alpha) / bounds.kappa;
    20.0 * getoor_constant(bounds.d, bounds.alpha) * r.powf(bounds.alpha) * scale.max(1.0)
}

/// In GAUSS mode the small-jump motion is only observed on the time grid;
/// one grid step is added to the disclosed bias of time functionals.
fn grid_bias(cfg: &SimConfig) -> f64 {
    match cfg.small_jump_mode {
        SmallJumpMode::Drop => 0.0,
        SmallJumpMode::Gauss => cfg.gauss_dt,
    }
}

struct ExitTime<'a> {
    domain: &'a Region,
    exited: bool,
    time: f64,
}

impl PathObserver for ExitTime<'_> {
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        if self.domain.contains(x) {
            Flow::Continue
        } else {
            self.exited = true;
            self.time = t;
            Flow::Stop
        }
    }
    fn finish(&mut self, t_end: f64) {
        if !self.exited {
            self.time = t_end;
        }
    }
}

/// Per-path `τ ∧ t_max` and censoring flags, in path-index order.
pub fn exit_time_samples<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    domain: &Region,
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<(f64, bool)>> {
    check_inside(domain, x0)?;
    map_paths(n, |i| {
        let mut obs = ExitTime { domain, exited: false, time: 0.0 };
        run_path(kernel, x0, cfg, i, &mut obs)?;
        Ok((obs.time, obs.exited))
    })
}

/// Mean of `τ_domain ∧ t_max`. `bias_bound` is the censored fraction times `t_max`.
pub fn exit_time_mean<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    domain: &Region,
    cfg: &SimConfig,
    n: usize,
) -> Result<EstimateWithCI> {
    ensure!(n >= 2, Domain, "need at least two paths");
    let s = exit_time_samples(kernel, x0, domain, cfg, n)?;
    let censored = s.iter().filter(|(_, e)| !e).count();
    let times: Vec<f64> = s.iter().map(|(t, _)| *t).collect();
    Ok(EstimateWithCI::from_samples(&times, censored as f64 / n as f64 * cfg.t_max + grid_bias(cfg)))
}

struct Hit<'a> {
    target: &'a Region,
    container: &'a Region,
    hit: bool,
    decided: bool,
}

impl PathObserver for Hit<'_> {
    fn start(&mut self, x0: &[f64]) -> Flow {
        if self.target.contains(x0) {
            self.hit = true;
            self.decided = true;
            Flow::Stop
        } else {
            Flow::Continue
        }
    }
    fn event(&mut self, _t: f64, x: &[f64]) -> Flow {
        if !self.container.contains(x) {
            self.decided = true;
            Flow::Stop
        } else if self.target.contains(x) {
            self.hit = true;
            self.decided = true;
            Flow::Stop
        } else {
            Flow::Continue
        }
    }
}

/// `P^y(T_A < τ_container)` with a Wilson interval. Paths undecided at the
/// horizon count as misses; their fraction is the `bias_bound`.
pub fn hitting_probability<K: JumpKernel + ?Sized>(
    kernel: &K,
    y: &[f64],
    target: &Region,
    container: &Region,
    cfg: &SimConfig,
    n: usize,
) -> Result<EstimateWithCI> {
    ensure!(n >= 1, Domain, "need at least one path");
    check_inside(container, y)?;
    target.validate()?;
    ensure!(target.is_subset_of(container), Precondition, "target set is not inside the container");
    if target.is_empty() {
        return Ok(EstimateWithCI::exact(0.0, n, CiMethod::Wilson));
    }
    let res = map_paths(n, |i| {
        let mut obs = Hit { target, container, hit: false, decided: false };
        run_path(kernel, y, cfg, i, &mut obs)?;
        Ok((obs.hit, obs.decided))
    })?;
    let hits = res.iter().filter(|r| r.0).count();
    let undecided = res.iter().filter(|r| !r.1).count();
    Ok(EstimateWithCI::wilson(hits, n, undecided as f64 / n as f64))
}

/// Accumulates `∫_0^{τ∧t_max} 1_{B_k}(X_s) ds` for several sets at once.
/// Time in each set is summed over maximal runs, so `B = domain` yields
/// `τ ∧ t_max` bit for bit.
pub struct Occupation<'a> {
    domain: &'a Region,
    sets: &'a [Region],
    run_start: Vec<Option<f64>>,
    pub totals: Vec<f64>,
    pub exited: bool,
    pub end: f64,
}

impl<'a> Occupation<'a> {
    pub fn new(domain: &'a Region, sets: &'a [Region]) -> Self {
        Self { domain, sets, run_start: vec![None; sets.len()], totals: vec![0.0; sets.len()], exited: false, end: 0.0 }
    }

    fn close_all(&mut self, t: f64) {
        for (start, total) in self.run_start.iter_mut().zip(self.totals.iter_mut()) {
            if let Some(s) = start.take() {
                *total += t - s;
            }
        }
    }
}

impl PathObserver for Occupation<'_> {
    fn start(&mut self, x0: &[f64]) -> Flow {
        for (k, b) in self.sets.iter().enumerate() {
            self.run_start[k] = if b.contains(x0) { Some(0.0) } else { None };
        }
        Flow::Continue
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        if !self.domain.contains(x) {
            self.exited = true;
            return Flow::Stop;
        }
        for (k, b) in self.sets.iter().enumerate() {
            let inside = b.contains(x);
            match (self.run_start[k], inside) {
                (Some(s), false) => {
                    self.totals[k] += t - s;
                    self.run_start[k] = None;
                }
                (None, true) => self.run_start[k] = Some(t),
                _ => {}
            }
        }
        Flow::Continue
    }
    fn finish(&mut self, t_end: f64) {
        self.end = t_end;
        self.close_all(t_end);
    }
}

/// Per-path occupation times of every set (outer index: path).
pub fn occupation_samples<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    sets: &[Region],
    domain: &Region,
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<(Vec<f64>, bool)>> {
    check_inside(domain, x0)?;
    for b in sets {
        b.validate()?;
        ensure!(b.is_subset_of(domain), Precondition, "occupation set is not inside the domain");
    }
    map_paths(n, |i| {
        let mut obs = Occupation::new(domain, sets);
        run_path(kernel, x0, cfg, i, &mut obs)?;
        Ok((obs.totals, obs.exited))
    })
}

/// Occupation-time estimates for several sets on shared paths.
pub fn occupation_times<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    sets: &[Region],
    domain: &Region,
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<EstimateWithCI>> {
    ensure!(n >= 2, Domain, "need at least two paths");
    let s = occupation_samples(kernel, x0, sets, domain, cfg, n)?;
    let censored = s.iter().filter(|(_, e)| !e).count();
    let bias = censored as f64 / n as f64 * cfg.t_max + grid_bias(cfg);
    Ok((0..sets.len())
        .map(|k| {
            if sets[k].is_empty() {
                return EstimateWithCI::exact(0.0, n, CiMethod::Clt);
            }
            let v: Vec<f64> = s.iter().map(|(t, _)| t[k]).collect();
            EstimateWithCI::from_samples(&v, bias)
        })
        .collect())
}

/// `E^{x0} ∫_0^{τ_domain} 1_B(X_s) ds`.
pub fn occupation_time<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    set: &Region,
    domain: &Region,
    cfg: &SimConfig,
    n: usize,
) -> Result<EstimateWithCI> {
    Ok(occupation_times(kernel, x0, std::slice::from_ref(set), domain, cfg, n)?.remove(0))
}

/// Tracks `sup_s |X_s - φ(s)|` on `[0, t0]`, stopping early past `cap`.
struct Tube<'a> {
    phi: &'a Polyline,
    cap: f64,
    x: Vec<f64>,
    last: f64,
    sup: f64,
}

impl PathObserver for Tube<'_> {
    fn start(&mut self, x0: &[f64]) -> Flow {
        self.x = x0.to_vec();
        Flow::Continue
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        self.sup = self.sup.max(self.phi.max_distance(&self.x, self.last, t));
        self.x.copy_from_slice(x);
        self.last = t;
        if self.sup >= self.cap {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }
    fn finish(&mut self, t_end: f64) {
        if self.sup < self.cap {
            self.sup = self.sup.max(self.phi.max_distance(&self.x, self.last, t_end));
        }
    }
}

/// Per-path `sup_{s ≤ t0} |X_s − φ(s)|`, truncated to `cap` once exceeded.
pub fn tube_sup_samples<K: JumpKernel + ?Sized>(
    kernel: &K,
    phi: &Polyline,
    cap: f64,
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<f64>> {
    ensure!(phi.dim() == kernel.bounds().d, Domain, "polyline dimension does not match the kernel");
    let run_cfg = cfg.with_horizon(phi.end_time());
    map_paths(n, |i| {
        let mut obs = Tube { phi, cap, x: Vec::new(), last: 0.0, sup: 0.0 };
        run_path(kernel, phi.start(), &run_cfg, i, &mut obs)?;
        Ok(obs.sup)
    })
}

/// `P(sup_{s ≤ t0} |X_s − φ(s)| < eps)` for each `eps`, on shared paths.
pub fn tube_probabilities<K: JumpKernel + ?Sized>(
    kernel: &K,
    phi: &Polyline,
    eps_list: &[f64],
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<EstimateWithCI>> {
    ensure!(n >= 1, Domain, "need at least one path");
    ensure!(eps_list.iter().all(|&e| e > 0.0), Domain, "tube radius must be positive");
    let cap = eps_list.iter().copied().fold(0.0, f64::max);
    let sups = tube_sup_samples(kernel, phi, cap, cfg, n)?;
    Ok(eps_list
        .iter()
        .map(|&eps| EstimateWithCI::wilson(sups.iter().filter(|&&s| s < eps).count(), n, 0.0))
        .collect())
}

pub fn tube_probability<K: JumpKernel + ?Sized>(
    kernel: &K,
    phi: &Polyline,
    eps: f64,
    cfg: &SimConfig,
    n: usize,
) -> Result<EstimateWithCI> {
    Ok(tube_probabilities(kernel, phi, &[eps], cfg, n)?.remove(0))
}

/// Accumulates `Σ_i f(x_i)(e^{-λ t_i} − e^{-λ t_{i+1}})/λ` for several fields.
pub struct Discounted<'a> {
    fields: &'a [&'a dyn ScalarField],
    lambda: f64,
    current: Vec<f64>,
    prev_disc: f64,
    pub totals: Vec<f64>,
}

impl<'a> Discounted<'a> {
    pub fn new(fields: &'a [&'a dyn ScalarField], lambda: f64) -> Self {
        Self { fields, lambda, current: vec![0.0; fields.len()], prev_disc: 1.0, totals: vec![0.0; fields.len()] }
    }

    fn close(&mut self, t: f64) {
        let disc = (-self.lambda * t).exp();
        let w = (self.prev_disc - disc) / self.lambda;
        for (tot, c) in self.totals.iter_mut().zip(&self.current) {
            *tot += c * w;
        }
        self.prev_disc = disc;
    }
}

impl PathObserver for Discounted<'_> {
    fn start(&mut self, x0: &[f64]) -> Flow {
        for (c, f) in self.current.iter_mut().zip(self.fields) {
            *c = f.eval(x0);
        }
        Flow::Continue
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        self.close(t);
        for (c, f) in self.current.iter_mut().zip(self.fields) {
            *c = f.eval(x);
        }
        Flow::Continue
    }
    fn finish(&mut self, t_end: f64) {
        self.close(t_end);
    }
}

/// Per-path discounted integrals of each field from an arbitrary start per path.
pub fn resolvent_samples_from<K, S>(
    kernel: &K,
    start: S,
    fields: &[&dyn ScalarField],
    lambda: f64,
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<Vec<f64>>>
where
    K: JumpKernel + ?Sized,
    S: Fn(u64) -> Vec<f64> + Sync + Send,
{
    ensure!(lambda > 0.0 && lambda.is_finite(), Domain, "lambda = {lambda} must be positive");
    map_paths(n, |i| {
        let x0 = start(i);
        let mut obs = Discounted::new(fields, lambda);
        run_path(kernel, &x0, cfg, i, &mut obs)?;
        Ok(obs.totals)
    })
}

/// Resolvent estimates `E^{x0} ∫_0^∞ e^{-λt} f(X_t) dt` for several fields on
/// shared paths. The tail beyond `t_max` is disclosed as
/// `sup|f| e^{-λ t_max}/λ`.
pub fn resolvents<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    fields: &[&dyn ScalarField],
    lambda: f64,
    cfg: &SimConfig,
    n: usize,
) -> Result<Vec<EstimateWithCI>> {
    ensure!(n >= 2, Domain, "need at least two paths");
    let s = resolvent_samples_from(kernel, |_| x0.to_vec(), fields, lambda, cfg, n)?;
    let tail = (-lambda * cfg.t_max).exp() / lambda;
    Ok(fields
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let v: Vec<f64> = s.iter().map(|row| row[k]).collect();
            EstimateWithCI::from_samples(&v, f.sup_abs() * tail)
        })
        .collect())
}

pub fn resolvent<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    f: &dyn ScalarField,
    lambda: f64,
    cfg: &SimConfig,
    n: usize,
) -> Result<EstimateWithCI> {
    Ok(resolvents(kernel, x0, &[f], lambda, cfg, n)?.remove(0))
}
