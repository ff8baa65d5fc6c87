use thiserror::Error;

/// Errors raised by the simulation and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument is outside the domain the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),
    /// Declared kernel bounds or simulation settings are inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller-side precondition does not hold (start point outside a set, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// The kernel produced a value incompatible with its declared bounds.
    #[error("kernel bound violation: {0}")]
    KernelBound(String),
    /// A diagnostic check ran but its inputs made the result meaningless.
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

// `!(a < b)` on purpose: NaN fails every check.
macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err($crate::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
