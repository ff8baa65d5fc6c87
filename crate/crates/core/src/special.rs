//! Closed-form constants shared by the kernels and the oracles.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere in `R^d`, `2 π^{d/2} / Γ(d/2)`.
pub fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

/// Constant `c(d, α)` for which `c / |h|^{d+α}` is the Lévy density of the
/// isotropic α-stable process with symbol `|ξ|^α`:
/// `α 2^{α-1} Γ((d+α)/2) / (π^{d/2} Γ(1 - α/2))`.
///
/// Used both by the standard constant kernel and by the exact samplers in
/// [`crate::oracles`], so the two normalizations cannot drift apart.
pub fn stable_normalization(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (df + alpha)) / (PI.powf(0.5 * df) * gamma(1.0 - 0.5 * alpha))
}

/// Getoor's constant: `E^0 τ_{B(0,1)}` for the standard isotropic α-stable process.
pub fn getoor_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    gamma(0.5 * df) / (2f64.powf(alpha) * gamma(1.0 + 0.5 * alpha) * gamma(0.5 * (df + alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0, epsilon = 1e-12);
        assert_relative_eq!(sphere_area(2), 2.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cauchy_normalization_is_one_over_pi() {
        assert_relative_eq!(stable_normalization(1, 1.0), 1.0 / PI, epsilon = 1e-13);
    }

    // Independent route: the symbol ∫ (1 - cos h) c / |h|^{1+α} dh must equal 1 at ξ = 1.
    #[test]
    fn normalization_matches_symbol_by_quadrature() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let c = stable_normalization(1, alpha);
            // substitute h = e^s; integrand (1 - cos e^s) e^{-α s} over s, doubled for symmetry
            let (a, b, n) = (-40.0f64, 8.0f64, 400_000usize);
            let dh = (b - a) / n as f64;
            let mut sum = 0.0;
            for i in 0..n {
                let s = a + (i as f64 + 0.5) * dh;
                let h = s.exp();
                sum += (1.0 - h.cos()) * (-alpha * s).exp();
            }
            // tail beyond e^8 where cos averages out: ∫ h^{-1-α} dh
            let tail = (8.0f64).exp().powf(-alpha) / alpha;
            let symbol = 2.0 * c * (sum * dh + tail);
            assert!((symbol - 1.0).abs() < 2e-3, "alpha {alpha}: {symbol}");
        }
    }

    #[test]
    fn getoor_cauchy_line() {
        assert_relative_eq!(getoor_constant(1, 1.0), 1.0, epsilon = 1e-13);
    }
}
