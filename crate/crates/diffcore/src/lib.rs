//! Reverse-mode automatic differentiation over small dense `f64` tensors.
//!
//! The crate provides the numerical substrate for everything else in this
//! workspace: a define-by-run [`Tape`] that records scalar/vector/matrix ops,
//! a [`ParameterStore`] with a deterministic flat layout, diagonal-Gaussian
//! log-density helpers, finite-difference checking utilities, and a simple
//! binary checkpoint format.
//!
//! Design constraints, in rough priority order:
//!
//! * correctness over speed — every op validates shapes and scans its output
//!   for NaN/Inf, returning an error instead of propagating garbage;
//! * determinism — identical graph construction yields bitwise-identical
//!   values and gradients (no threading, no hash-order iteration on the
//!   backward path);
//! * `f64` everywhere; tensors are rank 0–2 (scalars are length-1 vectors).
//!
//! Tapes are cheap to create and are rebuilt for every forward pass. A tape
//! is single-threaded; parallel workers each own a tape.

mod checkpoint;
mod error;
mod gaussian;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, restore_checkpoint, save_checkpoint};
pub use error::DiffError;
pub use gaussian::{gaussian_logpdf, gaussian_logpdf_rows, LN_2PI};
pub use gradcheck::{
    finite_diff_gradient, jacobian_frobenius, jacobian_rows, max_rel_err, relative_error,
    GradCheckReport,
};
pub use params::{Gradients, ParamId, ParameterStore};
pub use tape::Tape;
pub use tensor::Tensor;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, DiffError>;
