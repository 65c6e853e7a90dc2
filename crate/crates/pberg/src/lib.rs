//! p-Bergman kernels of bounded domains in ℂⁿ as constrained Lᵖ extremal
//! problems, reconstruction of biholomorphisms from linear isometries between
//! Aᵖ spaces, and plurisubharmonic-variation diagnostics for families of
//! weighted domains.
//!
//! The crate is organized around five subsystems plus a command-line front end:
//!
//! - [`domains`]: bounded domains in ℂⁿ (n ≤ 3) and deterministic quadrature
//!   rules approximating Lebesgue integration against `dλ_n`.
//! - [`basis`]: truncated monomial bases for Aᵖ(Ω), evaluation with complex
//!   gradients, and least-squares projection onto a basis.
//! - [`extremal`]: p-norms, the p=2 kernel in closed form via the Gram matrix,
//!   and the p-Bergman kernel `B_{Ω,p}(z)` for general `p > 0` by constrained
//!   Lᵖ minimization (damped IRLS with an ε-smoothing ladder).
//! - [`isometry`]: pullback isometries induced by biholomorphisms, intrinsic
//!   reconstruction of the map from an operator, and verification of the
//!   Jacobian relation `|Tφ∘F|·|J_F|^{2/p} = |φ|`.
//! - [`variation`]: families of weighted domains over a parameter disk;
//!   fiberwise m-Bergman kernels, sub-mean-value probes, dual Finsler norms of
//!   atomic functionals, and minimal extensions with the constant-π bound.
//! - [`cli`]: JSON job specifications, CSV/JSON artifacts, exit-status policy.
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/`
//! directory; `cargo run --release --example kernel_point` is a good start.

pub mod basis;
pub mod checks;
pub mod cli;
pub mod domains;
pub mod extremal;
pub mod isometry;
mod linalg;
pub mod variation;

/// Complex scalar used throughout: a pair of 64-bit floats.
pub type C64 = num_complex::Complex<f64>;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-status policy: validation failures exit 2,
/// refused preconditions (branch ambiguity, conditioning caps, equidimension)
/// exit 4. Solver non-convergence is not an error: results carry a
/// `converged` flag so partial artifacts can still be written (exit 3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("numerically singular system (condition estimate {cond:.3e}): {context}")]
    Singular { cond: f64, context: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status the CLI maps this error onto.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Json(_) => 2,
            Error::Refused(_) | Error::Singular { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}

pub use basis::{HoloFunction, TruncatedBasis};
pub use domains::{build_quadrature, Domain, QuadratureRule};
pub use extremal::{gram_kernel, kernel_profile, p_extremal, pnorm, ExtremalResult, SolverOptions, Weight};
