use crate::error::DiffError;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::Result;

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log-density of a diagonal Gaussian, `x, mean, diag_var` all length-`d`
/// rank-1 tensors, returned as a scalar:
///
/// `log N(x; μ, diag(v)) = −½ Σᵢ [ (xᵢ−μᵢ)²/vᵢ + ln vᵢ + ln 2π ]`
///
/// Differentiable in every argument that is attached to `tape`. `diag_var`
/// must be strictly positive.
pub fn gaussian_logpdf(tape: &Tape, x: &Tensor, mean: &Tensor, diag_var: &Tensor) -> Result<Tensor> {
    check_var(diag_var, x.len(), "gaussian_logpdf")?;
    if x.shape() != mean.shape() || x.shape().len() != 1 {
        return Err(DiffError::DimensionMismatch {
            op: "gaussian_logpdf",
            detail: format!("x {:?}, mean {:?}", x.shape(), mean.shape()),
        });
    }
    let diff = tape.sub(x, mean)?;
    let quad = tape.div(&tape.square(&diff)?, diag_var)?;
    let log_var = tape.log(diag_var)?;
    let terms = tape.add_const(&tape.add(&quad, &log_var)?, LN_2PI)?;
    tape.scale(&tape.sum(&terms)?, -0.5)
}

/// Row-batched version: `x, mean` are `[B,d]`, `diag_var` is `[d]`; returns
/// the `[B]` vector of per-row log-densities.
pub fn gaussian_logpdf_rows(
    tape: &Tape,
    x: &Tensor,
    mean: &Tensor,
    diag_var: &Tensor,
) -> Result<Tensor> {
    if x.shape().len() != 2 || x.shape() != mean.shape() {
        return Err(DiffError::DimensionMismatch {
            op: "gaussian_logpdf_rows",
            detail: format!("x {:?}, mean {:?}", x.shape(), mean.shape()),
        });
    }
    let d = x.shape()[1];
    check_var(diag_var, d, "gaussian_logpdf_rows")?;
    let diff = tape.sub(x, mean)?;
    let quad = tape.div_row(&tape.square(&diff)?, diag_var)?;
    // Per-row quadratic part, then the shared log-det + normalization terms.
    let row_quad = tape.sum_axis(&quad, 1)?;
    let log_det = tape.sum(&tape.log(diag_var)?)?;
    let shifted = tape.add_scalar(&row_quad, &log_det)?;
    let full = tape.add_const(&shifted, d as f64 * LN_2PI)?;
    tape.scale(&full, -0.5)
}

fn check_var(diag_var: &Tensor, d: usize, op: &'static str) -> Result<()> {
    if diag_var.shape().len() != 1 || diag_var.len() != d {
        return Err(DiffError::DimensionMismatch {
            op,
            detail: format!("diag_var {:?} for dimension {d}", diag_var.shape()),
        });
    }
    if !diag_var.values().iter().all(|&v| v > 0.0) {
        return Err(DiffError::InvalidValue { op, detail: "diag_var must be strictly positive".into() });
    }
    Ok(())
}
