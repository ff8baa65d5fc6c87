//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use stablemc_core::kernels::{ConstantStable, KernelBounds, Modulated};
use stablemc_core::mollify::estimate_mu;
use stablemc_core::{JumpKernel, MollifiedKernel, SimConfig};

pub fn cauchy() -> ConstantStable {
    ConstantStable::standard(1, 1.0).expect("valid standard kernel")
}

pub fn modulated(d: usize) -> Modulated {
    let b = KernelBounds::new(d, 1.0, 0.5, Some(1.0)).expect("valid bounds");
    Modulated::checked(b, 0.3, 0.25).expect("valid modulation")
}

/// A mollified modulated kernel over `m` paths.
pub fn mollified(m: usize, eps: f64) -> MollifiedKernel {
    let base: Arc<dyn JumpKernel> = Arc::new(modulated(1));
    let cfg = SimConfig::drop(0.05, 10.0, 1);
    let mu = estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, m).expect("measure");
    MollifiedKernel::new(base, Arc::new(mu), eps).expect("mollified kernel")
}
