//! Occupation measures, mollifiers and mollified kernels.
//!
//! The discounted occupation measure `μ(C) = E ∫ e^{-λt} 1_C(X_t) dt` is
//! kept as weighted path atoms, and the mollified kernel
//!
//! ```text
//! n^ε(x,h) = ∫ φ_ε(x−y) n(y,h) μ(dy) / ∫ φ_ε(x−y) μ(dy)
//! ```
//!
//! is an exact finite sum over those atoms. Each value is a convex
//! combination of base-kernel values, so the mollified kernel keeps the
//! base kernel's `(d, α, κ)` bounds and its `h`-symmetry.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::estimators::{resolvent_samples_from, EstimateWithCI, ScalarField};
use crate::kernels::{norm, validate_bounds, BoundsReport, JumpKernel, KernelBounds, KernelFamily, MAX_DIM};
use crate::parallel::map_paths;
use crate::region::Region;
use crate::rng::{derive_seed, Lane, PathRng};
use crate::sampler::{run_path, Flow, PathObserver, SimConfig};
use crate::special::{gamma, sphere_area};

/// Smooth bump `φ(z) = c_d (1 − |z|²)³` on the unit ball, rescaled to
/// `φ_ε(x) = ε^{-d} φ(x/ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mollifier {
    pub d: usize,
    pub eps: f64,
    /// Normalizing constant of the unit profile (`35/32` in one dimension).
    pub c_d: f64,
}

impl Mollifier {
    pub fn new(d: usize, eps: f64) -> Result<Self> {
        ensure!(eps > 0.0 && eps.is_finite(), Domain, "mollifier scale must be positive, got {eps}");
        ensure!((1..=MAX_DIM).contains(&d), Domain, "dimension {d} unsupported");
        // ∫_{|z|<1} (1-|z|²)³ dz = s_d Γ(d/2) Γ(4) / (2 Γ(d/2 + 4))
        let h = 0.5 * d as f64;
        let mass = sphere_area(d) * gamma(h) * 6.0 / (2.0 * gamma(h + 4.0));
        Ok(Self { d, eps, c_d: 1.0 / mass })
    }

    /// `φ(z)` for the unit-scale profile.
    #[inline]
    pub fn profile(&self, z2: f64) -> f64 {
        if z2 < 1.0 {
            let s = 1.0 - z2;
            self.c_d * s * s * s
        } else {
            0.0
        }
    }

    /// `φ_ε(x)`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let z2 = x.iter().map(|v| v * v).sum::<f64>() / (self.eps * self.eps);
        self.profile(z2) / self.eps.powi(self.d as i32)
    }

    /// `φ_ε(0)`.
    pub fn peak(&self) -> f64 {
        self.c_d / self.eps.powi(self.d as i32)
    }

    /// Draws `z` with density `φ` on the unit ball (rejection from uniform).
    pub fn sample_unit(&self, rng: &mut PathRng, out: &mut [f64]) {
        let d = self.d;
        loop {
            rng.direction(&mut out[..d]);
            let r = rng.uniform().powf(1.0 / d as f64);
            out[..d].iter_mut().for_each(|v| *v *= r);
            let s = 1.0 - r * r;
            if rng.uniform() < s * s * s {
                return;
            }
        }
    }
}

pub fn build_mollifier(d: usize, eps: f64) -> Result<Mollifier> {
    Mollifier::new(d, eps)
}

/// Weighted atoms `(y_i, w_i)` with `w_i = (e^{-λ t_i} − e^{-λ t_{i+1}})/λ`,
/// one group per simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    pub lambda: f64,
    pub start: Vec<f64>,
    pub t_max: f64,
    d: usize,
    positions: Vec<f64>,
    weights: Vec<f64>,
    /// `path_starts[j]..path_starts[j+1]` are the atoms of path `j`.
    path_starts: Vec<usize>,
    pub total_mass: f64,
}

struct AtomCollector {
    lambda: f64,
    prev_disc: f64,
    current: Vec<f64>,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomCollector {
    fn close(&mut self, t: f64) {
        let disc = (-self.lambda * t).exp();
        let w = (self.prev_disc - disc) / self.lambda;
        if w > 0.0 {
            self.positions.extend_from_slice(&self.current);
            self.weights.push(w);
        }
        self.prev_disc = disc;
    }
}

impl PathObserver for AtomCollector {
    fn start(&mut self, x0: &[f64]) -> Flow {
        self.current = x0.to_vec();
        Flow::Continue
    }
    fn event(&mut self, t: f64, x: &[f64]) -> Flow {
        self.close(t);
        self.current.copy_from_slice(x);
        Flow::Continue
    }
    fn finish(&mut self, t_end: f64) {
        self.close(t_end);
    }
}

impl OccupationMeasure {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn paths(&self) -> usize {
        self.path_starts.len() - 1
    }

    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn atom(&self, i: usize) -> (&[f64], f64) {
        (&self.positions[i * self.d..(i + 1) * self.d], self.weights[i])
    }

    /// Upper bound on `|total_mass − 1/λ|` from the horizon.
    pub fn tail_bound(&self) -> f64 {
        (-self.lambda * self.t_max).exp() / self.lambda
    }

    /// `μ̂(C) = (1/M) Σ w_i 1_C(y_i)`.
    pub fn measure(&self, c: &Region) -> f64 {
        self.per_path(c).iter().sum::<f64>() / self.paths() as f64
    }

    /// `μ̂(C)` with a CLT interval over paths.
    pub fn measure_estimate(&self, c: &Region) -> EstimateWithCI {
        EstimateWithCI::from_samples(&self.per_path(c), self.tail_bound())
    }

    fn per_path(&self, c: &Region) -> Vec<f64> {
        self.path_starts
            .windows(2)
            .map(|r| (r[0]..r[1]).filter(|&i| c.contains(self.atom(i).0)).map(|i| self.weights[i]).sum())
            .collect()
    }
}

/// Neumaier summation; the atom weights telescope, so naive summation would
/// drift by far more than the horizon tail at large `λ t_max`.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Builds `μ̂` from `m` paths of `kernel` started at `x0`.
pub fn estimate_mu<K: JumpKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    lambda: f64,
    cfg: &SimConfig,
    m: usize,
) -> Result<OccupationMeasure> {
    ensure!(lambda > 0.0 && lambda.is_finite(), Domain, "lambda must be positive");
    ensure!(m >= 1, Domain, "need at least one path");
    let d = kernel.bounds().d;
    let per_path = map_paths(m, |i| {
        let mut c = AtomCollector {
            lambda,
            prev_disc: 1.0,
            current: Vec::new(),
            positions: Vec::new(),
            weights: Vec::new(),
        };
        run_path(kernel, x0, cfg, i, &mut c)?;
        Ok((c.positions, c.weights))
    })?;
    let atoms: usize = per_path.iter().map(|p| p.1.len()).sum();
    let mut positions = Vec::with_capacity(atoms * d);
    let mut weights = Vec::with_capacity(atoms);
    let mut path_starts = Vec::with_capacity(m + 1);
    path_starts.push(0);
    for (p, w) in per_path {
        positions.extend(p);
        weights.extend(w);
        path_starts.push(weights.len());
    }
    let total_mass = compensated_sum(&weights) / m as f64;
    Ok(OccupationMeasure {
        lambda,
        start: x0.to_vec(),
        t_max: cfg.t_max,
        d,
        positions,
        weights,
        path_starts,
        total_mass,
    })
}

type CellKey = [i64; MAX_DIM];

/// Atoms bucketed into cubes of side `ε`, so every atom within `ε` of `x`
/// lies in one of the `3^d` cells around `x`'s cell.
#[derive(Debug)]
struct CellIndex {
    d: usize,
    side: f64,
    positions: Vec<f64>,
    weights: Vec<f64>,
    paths: Vec<u32>,
    /// `cum[k] = Σ_{j<k} weights[j]`.
    cum: Vec<f64>,
    cells: HashMap<CellKey, (usize, usize)>,
}

impl CellIndex {
    fn build(mu: &OccupationMeasure, side: f64) -> Self {
        let d = mu.d;
        let key_of = |p: &[f64]| {
            let mut k = [0i64; MAX_DIM];
            for (kv, v) in k.iter_mut().zip(p) {
                *kv = (v / side).floor() as i64;
            }
            k
        };
        let mut order: Vec<(CellKey, usize)> = (0..mu.atoms()).map(|i| (key_of(mu.atom(i).0), i)).collect();
        order.sort_unstable();
        let mut path_of = vec![0u32; mu.atoms()];
        for (j, r) in mu.path_starts.windows(2).enumerate() {
            path_of[r[0]..r[1]].iter_mut().for_each(|p| *p = j as u32);
        }
        let mut positions = Vec::with_capacity(mu.positions.len());
        let mut weights = Vec::with_capacity(order.len());
        let mut paths = Vec::with_capacity(order.len());
        let mut cum = Vec::with_capacity(order.len() + 1);
        let mut cells = HashMap::new();
        cum.push(0.0);
        let mut k = 0;
        while k < order.len() {
            let key = order[k].0;
            let begin = k;
            while k < order.len() && order[k].0 == key {
                let i = order[k].1;
                let (p, w) = mu.atom(i);
                positions.extend_from_slice(p);
                weights.push(w);
                paths.push(path_of[i]);
                cum.push(cum.last().unwrap() + w);
                k += 1;
            }
            cells.insert(key, (begin, k));
        }
        Self { d, side, positions, weights, paths, cum, cells }
    }

    #[inline]
    fn pos(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    /// Atom ranges of the cells neighbouring `x`.
    fn neighbours(&self, x: &[f64], out: &mut Vec<(usize, usize)>) {
        out.clear();
        let mut base = [0i64; MAX_DIM];
        for (b, v) in base.iter_mut().zip(x) {
            *b = (v / self.side).floor() as i64;
        }
        let count = 3usize.pow(self.d as u32);
        for code in 0..count {
            let mut key = [0i64; MAX_DIM];
            let mut c = code;
            for k in 0..self.d {
                key[k] = base[k] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(&r) = self.cells.get(&key) {
                out.push(r);
            }
        }
    }
}

/// Tries before the mixture sampler switches to exact enumeration.
const MIXTURE_TRIES: usize = 256;

/// Relative size of the regularizer `ρ = 1e-12 Σ w_i`.
pub const REGULARIZER_SCALE: f64 = 1e-12;

/// `n^ε(x, h)` built from a base kernel and an occupation measure.
pub struct MollifiedKernel {
    base: Arc<dyn JumpKernel>,
    mu: Arc<OccupationMeasure>,
    mollifier: Mollifier,
    regularizer_weight: f64,
    index: CellIndex,
    evaluations: AtomicU64,
    failures: AtomicU64,
}

impl std::fmt::Debug for MollifiedKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MollifiedKernel")
            .field("bounds", self.base.bounds())
            .field("mollifier", &self.mollifier)
            .field("atoms", &self.mu.atoms())
            .field("regularizer_weight", &self.regularizer_weight)
            .finish()
    }
}

impl MollifiedKernel {
    pub fn new(base: Arc<dyn JumpKernel>, mu: Arc<OccupationMeasure>, eps: f64) -> Result<Self> {
        let d = base.bounds().d;
        ensure!(mu.dim() == d, Domain, "occupation measure dimension differs from the kernel");
        let mollifier = Mollifier::new(d, eps)?;
        let total: f64 = mu.weights.iter().sum();
        ensure!(total > 0.0, Domain, "occupation measure has no mass");
        let index = CellIndex::build(&mu, eps);
        Ok(Self {
            base,
            mu,
            mollifier,
            regularizer_weight: REGULARIZER_SCALE * total,
            index,
            evaluations: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        })
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }

    pub fn measure(&self) -> &OccupationMeasure {
        &self.mu
    }

    pub fn regularizer_weight(&self) -> f64 {
        self.regularizer_weight
    }

    /// `(evaluations, support failures)` counted so far.
    pub fn counters(&self) -> (u64, u64) {
        (self.evaluations.load(Ordering::Relaxed), self.failures.load(Ordering::Relaxed))
    }

    pub fn reset_counters(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
        self.failures.store(0, Ordering::Relaxed);
    }

    pub fn failure_fraction(&self) -> f64 {
        let (e, f) = self.counters();
        if e == 0 {
            0.0
        } else {
            f as f64 / e as f64
        }
    }

    /// `(Σ w φ_ε(x−y)(p(y,h) − p(x,h)), Σ w φ_ε(x−y))` over atoms near `x`,
    /// with `p` the base profile.
    fn sums(&self, x: &[f64], h: &[f64], reference: f64) -> (f64, f64) {
        let mut ranges = Vec::with_capacity(27);
        self.index.neighbours(x, &mut ranges);
        let (mut num, mut den) = (0.0, 0.0);
        let mut diff = [0.0; MAX_DIM];
        for (a, b) in ranges {
            for i in a..b {
                let y = self.index.pos(i);
                diff.iter_mut().zip(x.iter().zip(y)).for_each(|(dv, (u, v))| *dv = u - v);
                let phi = self.mollifier.eval(&diff[..x.len()]);
                if phi > 0.0 {
                    let a = self.index.weights[i] * phi;
                    den += a;
                    num += a * (self.base.profile(y, h) - reference);
                }
            }
        }
        (num, den)
    }

    /// `n^ε(x,h)·|h|^{d+α}`, computed as `p(x,h) + Σ a_i (p(y_i,h) − p(x,h)) / (Σ a_i + ρ)`
    /// which equals the regularized ratio and is exact for `y`-free profiles.
    pub fn mollified_profile(&self, x: &[f64], h: &[f64]) -> f64 {
        let reference = self.base.profile(x, h);
        let (num, den) = self.sums(x, h, reference);
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        if den < self.regularizer_weight {
            self.failures.fetch_add(1, Ordering::Relaxed);
        }
        reference + num / (den + self.regularizer_weight)
    }

    /// Ratio estimate of `n^ε(x,h)|h|^{d+α}` with a delta-method standard
    /// error over the independent paths behind `μ̂`.
    pub fn profile_with_se(&self, x: &[f64], h: &[f64]) -> (f64, f64) {
        let mut ranges = Vec::new();
        self.index.neighbours(x, &mut ranges);
        let mut per_path: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        let mut diff = [0.0; MAX_DIM];
        for (a, b) in ranges {
            for i in a..b {
                let y = self.index.pos(i);
                diff.iter_mut().zip(x.iter().zip(y)).for_each(|(dv, (u, v))| *dv = u - v);
                let phi = self.mollifier.eval(&diff[..x.len()]);
                if phi > 0.0 {
                    let a = self.index.weights[i] * phi;
                    let e = per_path.entry(self.index.paths[i]).or_default();
                    e.0 += a * self.base.profile(y, h);
                    e.1 += a;
                }
            }
        }
        let value = self.mollified_profile(x, h);
        let m = self.mu.paths() as f64;
        let den: f64 = per_path.values().map(|v| v.1).sum();
        if den <= 0.0 || m < 2.0 {
            return (value, f64::INFINITY);
        }
        let r = per_path.values().map(|v| v.0).sum::<f64>() / den;
        // paths without atoms near x contribute zero residual
        let ss: f64 = per_path.values().map(|(n, dd)| (n - r * dd).powi(2)).sum();
        let se = (m / (m - 1.0) * ss).sqrt() / den;
        (value, se)
    }
}

impl JumpKernel for MollifiedKernel {
    fn bounds(&self) -> &KernelBounds {
        self.base.bounds()
    }

    fn family(&self) -> KernelFamily {
        KernelFamily::Mollified { eps: self.mollifier.eps, atoms: self.mu.atoms() }
    }

    fn profile(&self, x: &[f64], h: &[f64]) -> f64 {
        self.mollified_profile(x, h)
    }

    fn profile_sup(&self) -> f64 {
        self.base.profile_sup()
    }

    /// Returns `p(Y, h)` with `Y` drawn from the mixture
    /// `∝ Σ w_i φ_ε(x − y_i) δ_{y_i} + ρ δ_x`, whose mean is the mollified
    /// profile. Sampling proposes atoms from the neighbouring cells by weight
    /// and accepts with `φ_ε(x−y)/φ_ε(0)`; after `MIXTURE_TRIES` rejections it
    /// enumerates the window exactly. Either way the draw has the exact mixture law.
    fn sample_profile(&self, x: &[f64], h: &[f64], aux: &mut PathRng) -> f64 {
        let mut ranges = Vec::with_capacity(27);
        self.index.neighbours(x, &mut ranges);
        let cum = &self.index.cum;
        let cell_mass: f64 = ranges.iter().map(|&(a, b)| cum[b] - cum[a]).sum();
        let peak = self.mollifier.peak();
        let rho = self.regularizer_weight;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        if cell_mass * peak < rho {
            self.failures.fetch_add(1, Ordering::Relaxed);
        }
        let envelope = cell_mass * peak + rho;
        let d = x.len();
        let mut diff = [0.0; MAX_DIM];
        for _ in 0..MIXTURE_TRIES {
            let u = aux.uniform() * envelope;
            if u < rho {
                return self.base.profile(x, h);
            }
            let mut target = (u - rho) / peak;
            let mut pick = None;
            for &(a, b) in &ranges {
                let m = cum[b] - cum[a];
                if target < m {
                    let goal = cum[a] + target;
                    let k = a + cum[a + 1..=b].partition_point(|&c| c <= goal);
                    pick = Some(k.min(b - 1));
                    break;
                }
                target -= m;
            }
            let Some(i) = pick else { continue };
            let y = self.index.pos(i);
            diff.iter_mut().zip(x.iter().zip(y)).for_each(|(dv, (p, q))| *dv = p - q);
            if aux.uniform() * peak < self.mollifier.eval(&diff[..d]) {
                return self.base.profile(y, h);
            }
        }
        // exact fallback
        let mut total = rho;
        let mut weights = Vec::new();
        for &(a, b) in &ranges {
            for i in a..b {
                let y = self.index.pos(i);
                diff.iter_mut().zip(x.iter().zip(y)).for_each(|(dv, (p, q))| *dv = p - q);
                let w = self.index.weights[i] * self.mollifier.eval(&diff[..d]);
                if w > 0.0 {
                    total += w;
                    weights.push((i, w));
                }
            }
        }
        let mut u = aux.uniform() * total;
        for (i, w) in weights {
            if u < w {
                return self.base.profile(self.index.pos(i), h);
            }
            u -= w;
        }
        self.base.profile(x, h)
    }
}

/// `n^ε(x,h)`.
pub fn mollified_evaluate(mk: &MollifiedKernel, x: &[f64], h: &[f64]) -> Result<f64> {
    mk.evaluate(x, h)
}

/// Zero-tolerance bound and symmetry check of a mollified kernel on a grid.
pub fn bound_inheritance_check(mk: &MollifiedKernel, x_grid: &[Vec<f64>], h_grid: &[Vec<f64>]) -> Result<BoundsReport> {
    let mut rep = validate_bounds(mk, x_grid, h_grid)?;
    // exact symmetry, not just to relative round-off
    rep.symmetric = rep.max_asymmetry == 0.0;
    rep.pass = rep.lower_ok && rep.upper_ok && rep.symmetric;
    Ok(rep)
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub estimate: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub combined_se: f64,
    pub support_failure_fraction: f64,
}

/// Number of mollifier offsets used for the convolution at `x0`.
pub const CONVOLUTION_OFFSETS: usize = 128;

/// Offsets `z_k ~ φ` (unit scale) shared by every `ε`.
pub fn convolution_offsets(d: usize, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let m = Mollifier::new(d, 1.0).expect("unit mollifier");
    (0..count as u64)
        .map(|k| {
            let mut rng = PathRng::new(seed, Lane::Offsets, k);
            let mut z = vec![0.0; d];
            m.sample_unit(&mut rng, &mut z);
            z
        })
        .collect()
}

/// `(f ⋆ φ_ε)(x0)` by averaging `f(x0 − ε z_k)` over the shared offsets.
pub fn convolve_at(f: &dyn ScalarField, x0: &[f64], eps: f64, offsets: &[Vec<f64>]) -> f64 {
    let mut y = x0.to_vec();
    offsets
        .iter()
        .map(|z| {
            y.iter_mut().zip(x0.iter().zip(z)).for_each(|(yv, (a, b))| *yv = a - eps * b);
            f.eval(&y)
        })
        .sum::<f64>()
        / offsets.len() as f64
}

/// Settings shared by the convergence diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub lambda: f64,
    /// Paths per resolvent.
    pub n: usize,
    /// Paths behind `μ̂`.
    pub m: usize,
}

/// Builds `μ̂` with a seed derived from `cfg.master_seed`, so it never shares
/// streams with the resolvent runs.
pub fn pipeline_measure(
    base: &dyn JumpKernel,
    x0: &[f64],
    cfg: &SimConfig,
    pc: &PipelineConfig,
) -> Result<OccupationMeasure> {
    let mu_cfg = cfg.with_seed(derive_seed(cfg.master_seed, 0x6d75));
    estimate_mu(base, x0, pc.lambda, &mu_cfg, pc.m)
}

/// For each `ε`: `|(S^ε_λ f ⋆ φ_ε)(x0) − S_λ f(x0)|` with the mollified
/// process started at `x0 − ε z` (offsets cycled by path index). Both sides
/// use the same path streams, and `combined_se` is the standard error of
/// the paired per-path difference.
pub fn resolvent_convergence_check(
    base: Arc<dyn JumpKernel>,
    mu: Arc<OccupationMeasure>,
    x0: &[f64],
    f: &dyn ScalarField,
    eps_list: &[f64],
    cfg: &SimConfig,
    pc: &PipelineConfig,
) -> Result<Vec<ConvergenceRow>> {
    ensure!(pc.n >= 2, Domain, "need at least two paths");
    ensure!(eps_list.windows(2).all(|w| w[1] < w[0]), Domain, "eps_list must be decreasing");
    let d = base.bounds().d;
    let reference = resolvent_samples_from(base.as_ref(), |_| x0.to_vec(), &[f], pc.lambda, cfg, pc.n)?;
    let reference: Vec<f64> = reference.into_iter().map(|r| r[0]).collect();
    let ref_mean = reference.iter().sum::<f64>() / pc.n as f64;
    let offsets = convolution_offsets(d, derive_seed(cfg.master_seed, 0x6f6666), CONVOLUTION_OFFSETS);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mk = MollifiedKernel::new(base.clone(), mu.clone(), eps)?;
        let start = |i: u64| -> Vec<f64> {
            let z = &offsets[i as usize % offsets.len()];
            x0.iter().zip(z).map(|(a, b)| a - eps * b).collect()
        };
        let vals = resolvent_samples_from(&mk, start, &[f], pc.lambda, cfg, pc.n)?;
        let diffs: Vec<f64> = vals.iter().zip(&reference).map(|(v, r)| v[0] - r).collect();
        let est = vals.iter().map(|v| v[0]).sum::<f64>() / pc.n as f64;
        let de = EstimateWithCI::from_samples(&diffs, 0.0);
        rows.push(ConvergenceRow {
            eps,
            estimate: est,
            reference: ref_mean,
            abs_error: de.mean.abs(),
            combined_se: de.std_error,
            support_failure_fraction: mk.failure_fraction(),
        });
    }
    Ok(rows)
}

/// Largest tolerated fraction of support failures on the kernel grid.
pub const MAX_SUPPORT_FAILURE: f64 = 0.01;

/// For each `ε`: `sup_grid |n^ε(x,h) − n(x,h)|·|h|^{d+α}`, with the ratio
/// standard error at the maximizing grid point as `combined_se`.
pub fn kernel_convergence_check(
    base: Arc<dyn JumpKernel>,
    mu: Arc<OccupationMeasure>,
    eps_list: &[f64],
    x_grid: &[Vec<f64>],
    h_grid: &[Vec<f64>],
) -> Result<Vec<ConvergenceRow>> {
    ensure!(!x_grid.is_empty() && !h_grid.is_empty(), Domain, "grids must be nonempty");
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mk = MollifiedKernel::new(base.clone(), mu.clone(), eps)?;
        let mut worst = (0.0f64, 0usize, 0usize, 0.0f64);
        for (i, x) in x_grid.iter().enumerate() {
            for (j, h) in h_grid.iter().enumerate() {
                ensure!(norm(h) > 0.0, Domain, "zero displacement in h grid");
                let b = base.profile(x, h);
                let e = mk.mollified_profile(x, h);
                let err = (e - b).abs();
                if err > worst.0 || (i == 0 && j == 0) {
                    worst = (err, i, j, b);
                }
            }
        }
        let frac = mk.failure_fraction();
        if frac >= MAX_SUPPORT_FAILURE {
            return Err(Error::Diagnostic(format!(
                "support failures at {:.2}% of grid points for eps = {eps}; use more paths for mu or a smaller grid extent",
                100.0 * frac
            )));
        }
        let (_, se) = mk.profile_with_se(&x_grid[worst.1], &h_grid[worst.2]);
        rows.push(ConvergenceRow {
            eps,
            estimate: worst.3 + worst.0,
            reference: worst.3,
            abs_error: worst.0,
            combined_se: se,
            support_failure_fraction: frac,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{resolvent, Field};
    use crate::kernels::{grid_h, ConstantStable, Modulated};
    use approx::assert_relative_eq;

    fn modulated() -> Arc<dyn JumpKernel> {
        Arc::new(Modulated::checked(KernelBounds::new(1, 1.0, 0.5, Some(1.0)).unwrap(), 0.3, 0.25).unwrap())
    }

    #[test]
    fn mollifier_normalization() {
        let m = Mollifier::new(1, 1.0).unwrap();
        assert_relative_eq!(m.c_d, 35.0 / 32.0, epsilon = 1e-14);
        for d in 1..=3 {
            let m = Mollifier::new(d, 0.3).unwrap();
            // radial midpoint quadrature of s_d ∫ r^{d-1} φ_ε(r) dr
            let n = 100_000;
            let dr = 0.3 / n as f64;
            let mass: f64 = (0..n)
                .map(|i| {
                    let r = (i as f64 + 0.5) * dr;
                    let mut p = vec![0.0; d];
                    p[0] = r;
                    sphere_area(d) * r.powi(d as i32 - 1) * m.eval(&p) * dr
                })
                .sum();
            assert!((mass - 1.0).abs() < 1e-6, "d={d}: {mass}");
            assert_relative_eq!(m.eval(&vec![0.0; d]), m.c_d / 0.3f64.powi(d as i32), max_relative = 1e-14);
            let mut edge = vec![0.0; d];
            edge[0] = 0.3;
            assert_eq!(m.eval(&edge), 0.0);
            edge[0] = 0.299;
            assert!(m.eval(&edge) > 0.0);
        }
        assert!(Mollifier::new(1, 0.0).is_err());
    }

    #[test]
    fn mu_mass_and_queries() {
        let k = ConstantStable::standard(1, 1.0).unwrap();
        let cfg = SimConfig::drop(1e-2, 20.0, 4);
        let mu = estimate_mu(&k, &[0.0], 1.0, &cfg, 200).unwrap();
        assert!((mu.total_mass - 1.0).abs() <= (-20.0f64).exp() + 1e-12);
        assert_eq!(mu.measure(&Region::ball(&[1e12], 0.5)), 0.0);
        let whole = mu.measure(&Region::ball(&[0.0], 1e9));
        assert_relative_eq!(whole, mu.total_mass, max_relative = 1e-12);
        // identical to the resolvent of the indicator on the same seeds
        let c = Region::ball(&[0.0], 1.0);
        let r = resolvent(&k, &[0.0], &Field::Indicator { region: c.clone() }, 1.0, &cfg, 200).unwrap();
        assert_relative_eq!(mu.measure(&c), r.mean, max_relative = 1e-12);
        for i in 0..mu.atoms() {
            assert!(mu.atom(i).1 > 0.0);
        }
    }

    #[test]
    fn constant_base_is_reproduced_exactly() {
        let base: Arc<dyn JumpKernel> = Arc::new(ConstantStable::standard(1, 1.0).unwrap());
        let cfg = SimConfig::drop(5e-2, 10.0, 9);
        let mu = Arc::new(estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, 100).unwrap());
        let mk = MollifiedKernel::new(base.clone(), mu, 0.2).unwrap();
        for &x in &[-0.5, 0.0, 0.3, 50.0] {
            for &h in &[0.01, -1.0, 7.0] {
                assert_eq!(mk.evaluate(&[x], &[h]).unwrap(), base.evaluate(&[x], &[h]).unwrap());
            }
        }
    }

    #[test]
    fn empty_window_falls_back_to_base() {
        let base = modulated();
        let cfg = SimConfig::drop(5e-2, 10.0, 9);
        let mu = Arc::new(estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, 50).unwrap());
        let mk = MollifiedKernel::new(base.clone(), mu, 0.2).unwrap();
        let far = [1e6];
        assert_eq!(mk.evaluate(&far, &[1.0]).unwrap(), base.evaluate(&far, &[1.0]).unwrap());
        assert_eq!(mk.counters(), (1, 1));
    }

    #[test]
    fn modulated_value_lies_in_local_envelope() {
        let base = modulated();
        let cfg = SimConfig::drop(5e-2, 10.0, 12);
        let mu = Arc::new(estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, 400).unwrap());
        let mk = MollifiedKernel::new(base.clone(), mu.clone(), 0.2).unwrap();
        let v = mk.evaluate(&[0.0], &[1.0]).unwrap();
        // direct enumeration of every atom
        let m = Mollifier::new(1, 0.2).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..mu.atoms() {
            let (y, w) = mu.atom(i);
            let a = w * m.eval(&[0.0 - y[0]]);
            if a > 0.0 {
                let p = base.profile(y, &[1.0]);
                num += a * p;
                den += a;
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
        assert_relative_eq!(v, num / den, max_relative = 1e-10);
        assert!(v >= lo && v <= hi);
        assert!((0.5..=2.0).contains(&v));
    }

    #[test]
    fn mixture_sampler_has_the_mollified_mean() {
        let base = modulated();
        let cfg = SimConfig::drop(5e-2, 10.0, 13);
        let mu = Arc::new(estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, 300).unwrap());
        let mk = MollifiedKernel::new(base, mu, 0.2).unwrap();
        for &x in &[0.0, 0.15, -0.3] {
            let exact = mk.mollified_profile(&[x], &[1.0]);
            let mut rng = PathRng::new(1, Lane::Auxiliary, 0);
            let n = 50_000;
            let draws: Vec<f64> = (0..n).map(|_| mk.sample_profile(&[x], &[1.0], &mut rng)).collect();
            let e = EstimateWithCI::from_samples(&draws, 0.0);
            assert!((e.mean - exact).abs() < 4.0 * e.std_error + 1e-12, "x={x}: {} vs {exact}", e.mean);
        }
    }

    #[test]
    fn convolution_rate_is_lipschitz() {
        let f = Field::Gaussian { center: vec![0.3], width: 0.5, height: 1.0 };
        let lip = (-0.5f64).exp() / 0.5;
        let offsets = convolution_offsets(1, 3, 4096);
        for &eps in &[0.4, 0.2, 0.1, 0.05] {
            let c = convolve_at(&f, &[0.0], eps, &offsets);
            assert!((c - f.eval(&[0.0])).abs() <= lip * eps);
        }
    }

    #[test]
    fn bound_inheritance_on_grid() {
        let base = modulated();
        let cfg = SimConfig::drop(5e-2, 10.0, 14);
        let mu = Arc::new(estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, 100).unwrap());
        let xs: Vec<Vec<f64>> = (0..16).map(|i| vec![-1.0 + 2.0 * i as f64 / 15.0]).collect();
        let hs = grid_h(1, 1e-3, 10.0, 8, 2);
        for &eps in &[0.4, 0.1] {
            let mk = MollifiedKernel::new(base.clone(), mu.clone(), eps).unwrap();
            let rep = bound_inheritance_check(&mk, &xs, &hs).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }
}
