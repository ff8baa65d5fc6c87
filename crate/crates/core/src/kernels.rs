//! Jump kernels `n(x, h)` with two-sided stable bounds.
//!
//! Kernels are evaluated through their *profile* `n(x, h)·|h|^{d+α}`, which
//! stays in `[κ, 1/κ]` and avoids the singular factor in the sampler's hot
//! loop. [`JumpKernel::evaluate`] restores the intensity itself.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::PathRng;
use crate::special::{sphere_area, stable_normalization};

/// Largest spatial dimension supported by the simulation stack.
pub const MAX_DIM: usize = 3;

/// Declared constants `(d, α, κ, η)` of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub d: usize,
    pub alpha: f64,
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl KernelBounds {
    pub fn new(d: usize, alpha: f64, kappa: f64, eta: Option<f64>) -> Result<Self> {
        let b = Self { d, alpha, kappa, eta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!((1..=MAX_DIM).contains(&self.d), Config, "dimension d = {} not in 1..={MAX_DIM}", self.d);
        ensure!(self.alpha > 0.0 && self.alpha < 2.0, Config, "alpha = {} must lie in (0, 2)", self.alpha);
        ensure!(self.kappa > 0.0 && self.kappa < 1.0, Config, "kappa = {} must lie in (0, 1)", self.kappa);
        if let Some(eta) = self.eta {
            ensure!(eta > 0.0 && eta.is_finite(), Config, "eta = {eta} must be positive");
        }
        Ok(())
    }

    /// The singular exponent `d + α`.
    #[inline]
    pub fn exponent(&self) -> f64 {
        self.d as f64 + self.alpha
    }
}

/// Family tag and parameters, for reporting and digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    ConstantStable { c: f64 },
    Modulated { amplitude: f64, width: f64 },
    Anisotropic { strength: f64 },
    Mollified { eps: f64, atoms: usize },
    UserDefined { name: String },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::ConstantStable { .. } => "constant-stable",
            KernelFamily::Modulated { .. } => "modulated",
            KernelFamily::Anisotropic { .. } => "anisotropic",
            KernelFamily::Mollified { .. } => "mollified",
            KernelFamily::UserDefined { .. } => "user-defined",
        }
    }
}

/// A symmetric jump intensity with declared stable bounds.
///
/// Implementors must satisfy `profile(x, h) == profile(x, -h)` and
/// `κ ≤ profile(x, h) ≤ profile_sup() ≤ 1/κ`.
pub trait JumpKernel: Send + Sync {
    fn bounds(&self) -> &KernelBounds;

    fn family(&self) -> KernelFamily;

    /// `n(x, h)·|h|^{d+α}` for `h ≠ 0`.
    fn profile(&self, x: &[f64], h: &[f64]) -> f64;

    /// An upper bound on [`profile`](Self::profile) over all `(x, h)`.
    fn profile_sup(&self) -> f64 {
        1.0 / self.bounds().kappa
    }

    /// Randomized profile used by the thinning sampler. Must have conditional
    /// expectation `profile(x, h)` and stay within `[κ, profile_sup]`.
    /// Deterministic kernels return the profile itself.
    fn sample_profile(&self, x: &[f64], h: &[f64], _aux: &mut PathRng) -> f64 {
        self.profile(x, h)
    }

    /// Row-major `d×d` covariance `∫_{|h|<eps} h hᵀ n(x,h) dh` written into `out`.
    fn small_jump_covariance(&self, x: &[f64], eps: f64, out: &mut [f64]) {
        quadrature_covariance(self, x, eps, out);
    }

    /// The intensity `n(x, h)`.
    fn evaluate(&self, x: &[f64], h: &[f64]) -> Result<f64> {
        let b = self.bounds();
        ensure!(x.len() == b.d && h.len() == b.d, Domain, "expected {}-dimensional arguments", b.d);
        let r = norm(h);
        ensure!(r > 0.0, Domain, "zero displacement");
        Ok(self.profile(x, h) / r.powf(b.exponent()))
    }
}

impl<K: JumpKernel + ?Sized> JumpKernel for Arc<K> {
    fn bounds(&self) -> &KernelBounds {
        (**self).bounds()
    }
    fn family(&self) -> KernelFamily {
        (**self).family()
    }
    #[inline]
    fn profile(&self, x: &[f64], h: &[f64]) -> f64 {
        (**self).profile(x, h)
    }
    fn profile_sup(&self) -> f64 {
        (**self).profile_sup()
    }
    #[inline]
    fn sample_profile(&self, x: &[f64], h: &[f64], aux: &mut PathRng) -> f64 {
        (**self).sample_profile(x, h, aux)
    }
    fn small_jump_covariance(&self, x: &[f64], eps: f64, out: &mut [f64]) {
        (**self).small_jump_covariance(x, eps, out)
    }
}

/// Free-function form of [`JumpKernel::evaluate`].
pub fn evaluate_kernel<K: JumpKernel + ?Sized>(kernel: &K, x: &[f64], h: &[f64]) -> Result<f64> {
    kernel.evaluate(x, h)
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `n(x,h) = c / |h|^{d+α}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStable {
    bounds: KernelBounds,
    c: f64,
}

impl ConstantStable {
    pub fn new(bounds: KernelBounds, c: f64) -> Result<Self> {
        bounds.validate()?;
        ensure!(
            c >= bounds.kappa && c <= 1.0 / bounds.kappa,
            Config,
            "constant c = {c} violates kappa = {} bounds",
            bounds.kappa
        );
        Ok(Self { bounds, c })
    }

    /// The kernel of the isotropic α-stable process with symbol `|ξ|^α`,
    /// declared with the tightest admissible κ.
    pub fn standard(d: usize, alpha: f64) -> Result<Self> {
        ensure!(alpha > 0.0 && alpha < 2.0, Config, "alpha = {alpha} must lie in (0, 2)");
        let c = stable_normalization(d, alpha);
        let mut kappa = c.min(1.0 / c);
        if kappa >= 1.0 {
            kappa = 1.0 - 1e-12;
        }
        Self::new(KernelBounds::new(d, alpha, kappa, Some(1.0))?, c)
    }

    pub fn constant(&self) -> f64 {
        self.c
    }
}

impl JumpKernel for ConstantStable {
    fn bounds(&self) -> &KernelBounds {
        &self.bounds
    }
    fn family(&self) -> KernelFamily {
        KernelFamily::ConstantStable { c: self.c }
    }
    #[inline]
    fn profile(&self, _x: &[f64], _h: &[f64]) -> f64 {
        self.c
    }
    fn profile_sup(&self) -> f64 {
        self.c
    }
    fn small_jump_covariance(&self, _x: &[f64], eps: f64, out: &mut [f64]) {
        isotropic_covariance(&self.bounds, self.c, eps, out);
    }
}

/// `n(x,h) = m(x) / |h|^{d+α}` with `m(x) = 1 + a·s(x₁)` and
/// `s(u) = 2·exp(-u²/(2w²)) - 1`, so `m` ranges over `(1-|a|, 1+|a|]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated {
    bounds: KernelBounds,
    amplitude: f64,
    width: f64,
}

impl Modulated {
    /// Built without checking `m` against κ; see [`validate_bounds`].
    pub fn new(bounds: KernelBounds, amplitude: f64, width: f64) -> Result<Self> {
        bounds.validate()?;
        ensure!(amplitude.abs() < 1.0, Config, "amplitude |a| = {} must be < 1", amplitude.abs());
        ensure!(width > 0.0 && width.is_finite(), Config, "bump width must be positive");
        Ok(Self { bounds, amplitude, width })
    }

    /// Like [`new`](Self::new) but rejects `|a| > 1 - κ`.
    pub fn checked(bounds: KernelBounds, amplitude: f64, width: f64) -> Result<Self> {
        ensure!(
            amplitude.abs() <= 1.0 - bounds.kappa,
            Config,
            "amplitude {amplitude} leaves m outside [kappa, 1/kappa] for kappa = {}",
            bounds.kappa
        );
        Self::new(bounds, amplitude, width)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// The bump `s(u) ∈ (-1, 1]`.
    #[inline]
    pub fn bump(&self, u: f64) -> f64 {
        2.0 * (-0.5 * (u / self.width).powi(2)).exp() - 1.0
    }

    /// Lipschitz constant of the bump, `2 e^{-1/2} / w`.
    pub fn bump_lipschitz(&self) -> f64 {
        2.0 * (-0.5f64).exp() / self.width
    }

    #[inline]
    pub fn modulation(&self, x: &[f64]) -> f64 {
        1.0 + self.amplitude * self.bump(x[0])
    }
}

impl JumpKernel for Modulated {
    fn bounds(&self) -> &KernelBounds {
        &self.bounds
    }
    fn family(&self) -> KernelFamily {
        KernelFamily::Modulated { amplitude: self.amplitude, width: self.width }
    }
    #[inline]
    fn profile(&self, x: &[f64], _h: &[f64]) -> f64 {
        self.modulation(x)
    }
    fn profile_sup(&self) -> f64 {
        (1.0 + self.amplitude.abs()).min(1.0 / self.bounds.kappa)
    }
    fn small_jump_covariance(&self, x: &[f64], eps: f64, out: &mut [f64]) {
        isotropic_covariance(&self.bounds, self.modulation(x), eps, out);
    }
}

/// `n(x,h) = g(x, h/|h|) / |h|^{d+α}` with
/// `g(x, θ) = 1 + b·(2θ₁² - 1)·cos(x₁)`, symmetric in `θ`. In one dimension
/// this is `1 + b·cos(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Anisotropic {
    bounds: KernelBounds,
    strength: f64,
}

impl Anisotropic {
    pub fn new(bounds: KernelBounds, strength: f64) -> Result<Self> {
        bounds.validate()?;
        ensure!(strength.abs() < 1.0, Config, "strength |b| must be < 1");
        Ok(Self { bounds, strength })
    }

    #[inline]
    fn angular(&self, x: &[f64], h: &[f64]) -> f64 {
        let r2: f64 = h.iter().map(|v| v * v).sum();
        let c2 = h[0] * h[0] / r2;
        1.0 + self.strength * (2.0 * c2 - 1.0) * x[0].cos()
    }
}

impl JumpKernel for Anisotropic {
    fn bounds(&self) -> &KernelBounds {
        &self.bounds
    }
    fn family(&self) -> KernelFamily {
        KernelFamily::Anisotropic { strength: self.strength }
    }
    #[inline]
    fn profile(&self, x: &[f64], h: &[f64]) -> f64 {
        self.angular(x, h)
    }
    fn profile_sup(&self) -> f64 {
        (1.0 + self.strength.abs()).min(1.0 / self.bounds.kappa)
    }
    fn small_jump_covariance(&self, x: &[f64], eps: f64, out: &mut [f64]) {
        let d = self.bounds.d;
        let df = d as f64;
        let radial = eps.powf(2.0 - self.bounds.alpha) / (2.0 - self.bounds.alpha);
        let s = sphere_area(d);
        let bc = self.strength * x[0].cos();
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
        if d == 1 {
            out[0] = radial * 2.0 * (1.0 + bc);
            return;
        }
        // ∫θ₁⁴ = 3s/(d(d+2)), ∫θ₁²θ_k² = s/(d(d+2)), ∫θ_k² = s/d
        let base = s / df;
        let quartic = 3.0 * s / (df * (df + 2.0));
        let mixed = s / (df * (df + 2.0));
        out[0] = radial * (base + bc * (2.0 * quartic - base));
        for k in 1..d {
            out[k * d + k] = radial * (base + bc * (2.0 * mixed - base));
        }
    }
}

type IntensityFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// A caller-supplied intensity `n(x, h)` with declared bounds.
#[derive(Clone)]
pub struct UserKernel {
    bounds: KernelBounds,
    name: String,
    intensity: Arc<IntensityFn>,
}

impl fmt::Debug for UserKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserKernel").field("bounds", &self.bounds).field("name", &self.name).finish()
    }
}

impl UserKernel {
    /// Wraps `intensity` after probing symmetry on the default grid around
    /// the origin; asymmetric kernels are rejected since the sampler applies
    /// no drift compensation.
    pub fn new<F>(bounds: KernelBounds, name: impl Into<String>, intensity: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        bounds.validate()?;
        let k = Self { bounds, name: name.into(), intensity: Arc::new(intensity) };
        let xs: Vec<Vec<f64>> = [-1.0, 0.0, 0.5].iter().map(|&v| vec![v; bounds.d]).collect();
        let hs = default_h_grid(bounds.d);
        let mut neg = vec![0.0; bounds.d];
        for x in &xs {
            for h in &hs {
                neg.iter_mut().zip(h).for_each(|(n, v)| *n = -v);
                let (a, b) = ((k.intensity)(x, h), (k.intensity)(x, &neg));
                ensure!(
                    (a - b).abs() <= SYMMETRY_TOL * a.abs().max(b.abs()),
                    Config,
                    "kernel '{}' is not symmetric in h at x = {x:?}, h = {h:?}",
                    k.name
                );
            }
        }
        Ok(k)
    }
}

impl JumpKernel for UserKernel {
    fn bounds(&self) -> &KernelBounds {
        &self.bounds
    }
    fn family(&self) -> KernelFamily {
        KernelFamily::UserDefined { name: self.name.clone() }
    }
    fn profile(&self, x: &[f64], h: &[f64]) -> f64 {
        (self.intensity)(x, h) * norm(h).powf(self.bounds.exponent())
    }
}

fn isotropic_covariance(bounds: &KernelBounds, level: f64, eps: f64, out: &mut [f64]) {
    let d = bounds.d;
    let per_axis = level * sphere_area(d) * eps.powf(2.0 - bounds.alpha) / (d as f64 * (2.0 - bounds.alpha));
    out[..d * d].iter_mut().for_each(|v| *v = 0.0);
    for k in 0..d {
        out[k * d + k] = per_axis;
    }
}

/// Quadrature-weighted unit directions covering the sphere in `R^d`.
pub fn sphere_quadrature(d: usize, count: usize) -> Vec<(Vec<f64>, f64)> {
    match d {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                (vec![a.cos(), a.sin()], 2.0 * PI / count as f64)
            })
            .collect(),
        _ => {
            // Fibonacci lattice
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    (vec![r * a.cos(), r * a.sin(), z], 4.0 * PI / count as f64)
                })
                .collect()
        }
    }
}

fn quadrature_covariance<K: JumpKernel + ?Sized>(kernel: &K, x: &[f64], eps: f64, out: &mut [f64]) {
    let b = *kernel.bounds();
    let d = b.d;
    let p = 2.0 - b.alpha;
    // r^{1-α} dr = du / (2-α) with u = r^{2-α}
    let nodes = 16;
    let umax = eps.powf(p);
    let dirs = sphere_quadrature(d, if d == 2 { 64 } else { 256 });
    out[..d * d].iter_mut().for_each(|v| *v = 0.0);
    let mut h = vec![0.0; d];
    for i in 0..nodes {
        let u = umax * (i as f64 + 0.5) / nodes as f64;
        let r = u.powf(1.0 / p);
        let w_r = umax / nodes as f64 / p;
        for (theta, w_t) in &dirs {
            h.iter_mut().zip(theta).for_each(|(hv, t)| *hv = r * t);
            let g = kernel.profile(x, &h) * w_r * w_t;
            for a in 0..d {
                for c in 0..d {
                    out[a * d + c] += g * theta[a] * theta[c];
                }
            }
        }
    }
}

/// Relative tolerance for the `h ↔ -h` symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Outcome of [`validate_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// The sampled ratio farthest outside `[κ, 1/κ]` (or closest to an edge).
    pub worst_ratio: f64,
    pub max_asymmetry: f64,
    pub samples: usize,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub symmetric: bool,
    pub pass: bool,
}

/// Checks `κ ≤ n(x,h)|h|^{d+α} ≤ 1/κ` and `n(x,h) = n(x,-h)` on a grid.
pub fn validate_bounds<K: JumpKernel + ?Sized>(
    kernel: &K,
    x_grid: &[Vec<f64>],
    h_grid: &[Vec<f64>],
) -> Result<BoundsReport> {
    ensure!(!x_grid.is_empty() && !h_grid.is_empty(), Domain, "validation grids must be nonempty");
    let b = *kernel.bounds();
    let (lo, hi) = (b.kappa, 1.0 / b.kappa);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut max_asym: f64 = 0.0;
    let mut neg = vec![0.0; b.d];
    for x in x_grid {
        ensure!(x.len() == b.d, Domain, "x grid point has wrong dimension");
        for h in h_grid {
            ensure!(h.len() == b.d, Domain, "h grid point has wrong dimension");
            ensure!(norm(h) > 0.0, Domain, "zero displacement in h grid");
            neg.iter_mut().zip(h).for_each(|(n, v)| *n = -v);
            let r = kernel.profile(x, h);
            let s = kernel.profile(x, &neg);
            min_ratio = min_ratio.min(r);
            max_ratio = max_ratio.max(r);
            let asym = (r - s).abs() / r.abs().max(s.abs()).max(f64::MIN_POSITIVE);
            max_asym = max_asym.max(asym);
        }
    }
    let lower_ok = min_ratio >= lo;
    let upper_ok = max_ratio <= hi;
    let symmetric = max_asym <= SYMMETRY_TOL;
    let worst_ratio = if (lo - min_ratio) / lo >= (max_ratio - hi) / hi { min_ratio } else { max_ratio };
    Ok(BoundsReport {
        min_ratio,
        max_ratio,
        worst_ratio,
        max_asymmetry: max_asym,
        samples: x_grid.len() * h_grid.len(),
        lower_ok,
        upper_ok,
        symmetric,
        pass: lower_ok && upper_ok && symmetric,
    })
}

/// `ψ_η(r) = (1 + log⁺(1/r))^{1+η}`.
pub fn psi_eta(eta: f64, r: f64) -> f64 {
    (1.0 + (1.0 / r).ln().max(0.0)).powf(1.0 + eta)
}

/// `sup_{h ∈ grid, |h| ≤ b} |n̄(x,h) - n̄(y,h)|` in bound-normalized form
/// `n̄ = n·|h|^{d+α}·ψ_η(|h|)`.
pub fn continuity_modulus<K: JumpKernel + ?Sized>(
    kernel: &K,
    x: &[f64],
    y: &[f64],
    b: f64,
    h_grid: &[Vec<f64>],
) -> Result<f64> {
    let bounds = kernel.bounds();
    let eta = bounds.eta.ok_or_else(|| Error::Config("continuity modulus needs eta in the kernel bounds".into()))?;
    ensure!(b > 0.0, Domain, "radius b must be positive");
    let mut sup: f64 = 0.0;
    for h in h_grid {
        let r = norm(h);
        ensure!(r > 0.0, Domain, "zero displacement in h grid");
        if r > b {
            continue;
        }
        let diff = (kernel.profile(x, h) - kernel.profile(y, h)).abs();
        sup = sup.max(diff * psi_eta(eta, r));
    }
    Ok(sup)
}

/// Total jump rate of the envelope `κ⁻¹|h|^{-d-α}` over `|h| ≥ eps_cut`:
/// `κ⁻¹ s_d eps_cut^{-α} / α`.
pub fn envelope_intensity(bounds: &KernelBounds, eps_cut: f64) -> Result<f64> {
    ensure!(eps_cut > 0.0 && eps_cut.is_finite(), Domain, "eps_cut must be positive, got {eps_cut}");
    Ok(sphere_area(bounds.d) * eps_cut.powf(-bounds.alpha) / (bounds.kappa * bounds.alpha))
}

/// Log-spaced radii on `[r_min, r_max]`.
pub fn log_radii(r_min: f64, r_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![r_min];
    }
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Default displacement grid: 64 log-spaced radii on `[1e-4, 1e2]` times 16
/// directions (both signs in one dimension).
pub fn default_h_grid(d: usize) -> Vec<Vec<f64>> {
    grid_h(d, 1e-4, 1e2, 64, 16)
}

/// Displacement grid of `radii` log-spaced radii times `dirs` directions.
pub fn grid_h(d: usize, r_min: f64, r_max: f64, radii: usize, dirs: usize) -> Vec<Vec<f64>> {
    let directions: Vec<Vec<f64>> = sphere_quadrature(d, dirs).into_iter().map(|(t, _)| t).collect();
    let mut out = Vec::with_capacity(radii * directions.len());
    for r in log_radii(r_min, r_max, radii) {
        for t in &directions {
            out.push(t.iter().map(|v| v * r).collect());
        }
    }
    out
}
