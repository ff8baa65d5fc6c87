//! Exact references for the constant-kernel (isotropic α-stable) case.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{ensure, Result};
use crate::estimators::{EstimateWithCI, ScalarField};
use crate::rng::{Lane, PathRng};
use crate::special::getoor_constant;

/// Getoor's formula: `E^x τ_{B(0,r)} = C(d,α)(r² − |x|²)^{α/2}` for the
/// standard isotropic α-stable process.
pub fn getoor_exit_mean(d: usize, alpha: f64, r: f64, x: &[f64]) -> Result<f64> {
    ensure!(alpha > 0.0 && alpha < 2.0, Domain, "alpha = {alpha} must lie in (0, 2)");
    ensure!(d >= 1 && x.len() == d, Domain, "point must have {d} coordinates");
    ensure!(r > 0.0, Domain, "radius must be positive");
    let x2: f64 = x.iter().map(|v| v * v).sum();
    ensure!(x2 <= r * r, Domain, "|x| = {} exceeds r = {r}", x2.sqrt());
    Ok(getoor_constant(d, alpha) * (r * r - x2).powf(0.5 * alpha))
}

/// Standard symmetric α-stable variate with characteristic function
/// `exp(-|ξ|^α)` (Chambers–Mallows–Stuck).
pub fn symmetric_stable(alpha: f64, rng: &mut PathRng) -> f64 {
    let v = PI * (rng.uniform() - 0.5);
    let w = rng.exponential();
    if alpha == 1.0 {
        return v.tan();
    }
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * v).cos() / w;
    a * b.powf((1.0 - alpha) / alpha)
}

/// Positive β-stable variate with Laplace transform `exp(-s^β)`, `0 < β < 1`
/// (Kanter's representation).
pub fn positive_stable(beta: f64, rng: &mut PathRng) -> f64 {
    let u = PI * rng.uniform();
    let w = rng.exponential();
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    let b = ((1.0 - beta) * u).sin() / w;
    a * b.powf((1.0 - beta) / beta)
}

/// One increment over time `t` of the standard isotropic α-stable process in
/// `out.len()` dimensions (symbol `|ξ|^α`). Dimension one uses
/// [`symmetric_stable`]; higher dimensions subordinate a Gaussian,
/// `sqrt(2A)·G` with `A` positive `α/2`-stable.
pub fn stable_increment(alpha: f64, t: f64, rng: &mut PathRng, out: &mut [f64]) -> Result<()> {
    ensure!(alpha > 0.0 && alpha < 2.0, Domain, "alpha = {alpha} must lie in (0, 2)");
    ensure!(t > 0.0, Domain, "time must be positive");
    ensure!(!out.is_empty(), Domain, "output has no coordinates");
    let scale = t.powf(1.0 / alpha);
    if out.len() == 1 {
        out[0] = scale * symmetric_stable(alpha, rng);
        return Ok(());
    }
    let a = positive_stable(0.5 * alpha, rng);
    let s = scale * (2.0 * a).sqrt();
    for v in out.iter_mut() {
        *v = s * rng.normal();
    }
    Ok(())
}

/// `S_λ f(x0) = (1/λ) E f(x0 + X_T)` with `T ~ Exp(λ)` independent of the
/// standard stable process, sampled exactly without thinning or a time grid.
pub fn resolvent_oracle(
    alpha: f64,
    x0: &[f64],
    f: &dyn ScalarField,
    lambda: f64,
    n: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    ensure!(lambda > 0.0 && lambda.is_finite(), Domain, "lambda must be positive");
    ensure!(n >= 2, Domain, "need at least two samples");
    let mut x = vec![0.0; x0.len()];
    let mut vals = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let mut rng = PathRng::new(seed, Lane::Oracle, i);
        let t = rng.exponential() / lambda;
        stable_increment(alpha, t, &mut rng, &mut x)?;
        x.iter_mut().zip(x0).for_each(|(v, a)| *v += a);
        vals.push(f.eval(&x) / lambda);
    }
    Ok(EstimateWithCI::from_samples(&vals, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub pass: bool,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS test at the given significance level:
/// critical value `sqrt(-ln(α/2)/2)·sqrt((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], significance: f64) -> Result<OracleReport> {
    ensure!(a.len() >= 25 && b.len() >= 25, Domain, "KS test needs at least 25 samples per side");
    ensure!(significance > 0.0 && significance < 1.0, Domain, "significance must lie in (0, 1)");
    ensure!(a.iter().chain(b).all(|v| !v.is_nan()), Domain, "samples contain NaN");
    let (n, m) = (a.len() as f64, b.len() as f64);
    let statistic = ks_statistic(a, b);
    let critical_value = (-0.5 * (0.5 * significance).ln()).sqrt() * ((n + m) / (n * m)).sqrt();
    Ok(OracleReport { statistic, critical_value, pass: statistic < critical_value, n_a: a.len(), n_b: b.len() })
}
