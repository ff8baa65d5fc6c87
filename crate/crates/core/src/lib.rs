//! Simulation and statistical verification of stable-like pure-jump Markov
//! processes with state-dependent jump kernels.
//!
//! * [`kernels`]: jump kernels with two-sided stable bounds.
//! * [`sampler`]: exact Poisson-thinning path simulation.
//! * [`estimators`]: exit times, hitting, occupation, tube and resolvent functionals.
//! * [`mollify`]: occupation measures and mollified kernels.
//! * [`oracles`]: closed forms and exact samplers for the constant-kernel case.
//! * [`verify`]: falsifiable statistical checks bundled per statement.

mod error;
pub mod estimators;
pub mod kernels;
pub mod mollify;
pub mod oracles;
pub mod parallel;
pub mod region;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use estimators::{CiMethod, EstimateWithCI, Field, Polyline, ScalarField};
pub use kernels::{Anisotropic, ConstantStable, JumpKernel, KernelBounds, KernelFamily, Modulated, UserKernel};
pub use mollify::{Mollifier, MollifiedKernel, OccupationMeasure};
pub use region::Region;
pub use sampler::{ExitRecord, PathSkeleton, SimConfig, SmallJumpMode};
pub use verify::VerificationResult;
