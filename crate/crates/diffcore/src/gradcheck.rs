use crate::params::ParameterStore;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::Result;

/// Relative error with a floor of 1 on the denominator, so values near zero
/// are compared absolutely: `|a − b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1.0)
}

/// Largest [`relative_error`] across two equally-long slices.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "max_rel_err: length mismatch");
    a.iter().zip(b).map(|(x, y)| relative_error(*x, *y)).fold(0.0, f64::max)
}

/// Central finite differences of a scalar function of a flat vector.
pub fn finite_diff_gradient(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + eps;
        let hi = f(&xp)?;
        xp[i] = orig - eps;
        let lo = f(&xp)?;
        xp[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    Ok(grad)
}

/// Outcome of comparing an analytic gradient against finite differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub dims: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Rows of the Jacobian `∂f/∂x` of a tensor-valued function at `at`,
/// computed with one backward pass per output component.
///
/// `f` receives a fresh tape and the input already attached as a leaf;
/// it must return a rank-1 output.
pub fn jacobian_rows(
    f: &dyn Fn(&Tape, &Tensor) -> Result<Tensor>,
    at: &Tensor,
) -> Result<Vec<Vec<f64>>> {
    let store = ParameterStore::new();
    let probe = {
        let tape = Tape::new();
        let leaf = tape.input(at);
        f(&tape, &leaf)?
    };
    let out_dim = probe.len();
    let mut rows = Vec::with_capacity(out_dim);
    for i in 0..out_dim {
        let tape = Tape::new();
        let leaf = tape.input(at);
        let out = f(&tape, &leaf)?;
        let component = tape.slice(&out, i, 1)?;
        let grads = tape.backward(&component, &store)?;
        rows.push(grads.input_grad(&leaf).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; at.len()]));
    }
    Ok(rows)
}

/// Frobenius norm of the Jacobian `∂f/∂x` at `at`.
pub fn jacobian_frobenius(
    f: &dyn Fn(&Tape, &Tensor) -> Result<Tensor>,
    at: &Tensor,
) -> Result<f64> {
    let rows = jacobian_rows(f, at)?;
    let ss: f64 = rows.iter().flat_map(|r| r.iter()).map(|v| v * v).sum();
    Ok(ss.sqrt())
}
