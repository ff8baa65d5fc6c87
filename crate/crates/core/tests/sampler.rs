//! Statistical checks of the thinning sampler against exact laws.

use stablemc_core::kernels::{envelope_intensity, ConstantStable, JumpKernel, KernelBounds, Modulated};
use stablemc_core::parallel::map_paths;
use stablemc_core::sampler::{run_path, simulate_path, Flow, PathObserver};
use stablemc_core::SimConfig;

/// Asymptotic one-sample Kolmogorov-Smirnov critical value at 1%.
const KS_1PCT: f64 = 1.628;

fn ks_one_sample(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

struct JumpSizes {
    prev: Vec<f64>,
    sizes: Vec<f64>,
}

impl PathObserver for JumpSizes {
    fn start(&mut self, x0: &[f64]) -> Flow {
        self.prev = x0.to_vec();
        Flow::Continue
    }
    fn event(&mut self, _t: f64, x: &[f64]) -> Flow {
        let r2: f64 = x.iter().zip(&self.prev).map(|(a, b)| (a - b).powi(2)).sum();
        self.sizes.push(r2.sqrt());
        self.prev.copy_from_slice(x);
        Flow::Continue
    }
}

// With c = 1/κ every candidate is accepted, so the path is compound Poisson
// with Pareto(α, eps_cut) jump sizes.
#[test]
fn constant_kernel_jumps_are_pareto() {
    for (d, alpha) in [(1, 1.0), (2, 0.7), (3, 1.5)] {
        let kappa = 0.5;
        let k = ConstantStable::new(KernelBounds::new(d, alpha, kappa, None).unwrap(), 1.0 / kappa).unwrap();
        let eps = 0.1;
        let cfg = SimConfig::drop(eps, 1.0, 17);
        let mut obs = JumpSizes { prev: Vec::new(), sizes: Vec::new() };
        let mut i = 0;
        while obs.sizes.len() < 100_000 {
            let stats = run_path(&k, &vec![0.0; d], &cfg, i, &mut obs).unwrap();
            assert_eq!(stats.accepted, stats.candidates);
            i += 1;
        }
        let n = obs.sizes.len() as f64;
        let dist = ks_one_sample(obs.sizes, |r| 1.0 - (eps / r).powf(alpha));
        assert!(dist * n.sqrt() < KS_1PCT, "d={d} alpha={alpha}: KS {dist}");
    }
}

// The candidate stream is Poisson with rate Λ·κ·sup profile.
#[test]
fn candidate_count_matches_envelope_rate() {
    let b = KernelBounds::new(1, 1.2, 0.5, Some(1.0)).unwrap();
    let kernels: Vec<Box<dyn JumpKernel>> =
        vec![Box::new(ConstantStable::new(b, 2.0).unwrap()), Box::new(Modulated::checked(b, 0.3, 0.25).unwrap())];
    for k in &kernels {
        let cfg = SimConfig::drop(0.05, 2.0, 23);
        let n = 4000;
        let counts = map_paths(n, |i| {
            run_path(k.as_ref(), &[0.0], &cfg, i, &mut JumpSizes { prev: Vec::new(), sizes: Vec::new() })
                .map(|s| s.candidates as f64)
        })
        .unwrap();
        let rate = envelope_intensity(k.bounds(), cfg.eps_cut).unwrap() * k.bounds().kappa * k.profile_sup();
        let expected = rate * cfg.t_max;
        let mean = counts.iter().sum::<f64>() / n as f64;
        let se = (expected / n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "{}: {mean} vs {expected}", k.family().name());
    }
}

// x0 = 0 and a kernel even in x and h: the law of X_t is symmetric. α = 1
// has no mean, so compare bounded odd statistics instead.
#[test]
fn law_is_symmetric_from_the_origin() {
    let k = Modulated::checked(KernelBounds::new(1, 1.0, 0.5, Some(1.0)).unwrap(), 0.3, 0.25).unwrap();
    let cfg = SimConfig::drop(0.01, 1.0, 29);
    let n = 20_000;
    let ends = map_paths(n, |i| simulate_path(&k, &[0.0], &cfg, i).map(|s| s.end_position()[0])).unwrap();
    for (name, g) in [("sign", f64::signum as fn(f64) -> f64), ("tanh", f64::tanh)] {
        let v: Vec<f64> = ends.iter().map(|&x| g(x)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "{name}: {mean} ± {se}");
    }
}

#[test]
fn paths_do_not_depend_on_the_thread_pool() {
    let k = Modulated::checked(KernelBounds::new(2, 1.3, 0.5, Some(1.0)).unwrap(), 0.3, 0.25).unwrap();
    let cfg = SimConfig::gauss(0.05, 1.0, 1e-2, 31);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| map_paths(64, |i| simulate_path(&k, &[0.1, -0.2], &cfg, i)).unwrap())
    };
    assert_eq!(run(1), run(4));
}
