//! Empirical Jacobian-norm constants for the variance bounds.
//!
//! The analytic bounds assume uniform Frobenius-norm bounds on four
//! Jacobians of the mean networks — written `F, H, K, Z` throughout:
//!
//! * `F` — `‖∂f/∂θ‖_F`, action mean w.r.t. the chosen parameters,
//! * `H` — `‖∂η/∂θ‖_F`, state mean w.r.t. the chosen parameters,
//! * `K` — `‖∂f/∂z‖_F`, action mean w.r.t. the internal state,
//! * `Z` — `‖∂η/∂z‖_F`, state mean w.r.t. the internal state,
//!
//! plus the per-row variants `F_d = max_i ‖∂f_i/∂θ‖₂` and
//! `H_d = max_i ‖∂η_i/∂θ‖₂` used by the tighter diagonal bound. This module
//! measures all six as maxima over a sample of `(obs, z)` inputs — the
//! assumptions are uniform bounds, so empirical maxima over visited inputs
//! make the bounds checkable.

use diffcore::{DiffError, ParamId, ParameterStore, Result, Tape, Tensor};

use crate::mean_nets::MeanNets;

/// Empirical maxima of the Jacobian norms over a sample set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianConstants {
    pub f: f64,
    pub h: f64,
    pub k: f64,
    pub z: f64,
    pub f_row: f64,
    pub h_row: f64,
}

/// Squared Frobenius norm of one network output's Jacobians, plus the max
/// squared row norm, w.r.t. `theta` and the `z` input leaf.
struct OutputJacobian {
    theta_sq: f64,
    theta_row_sq: f64,
    z_sq: f64,
}

fn output_jacobian(
    nets: &MeanNets,
    store: &ParameterStore,
    theta: &[ParamId],
    obs: &[f64],
    z: &[f64],
    action_head: bool,
) -> Result<OutputJacobian> {
    let out_dim = if action_head { nets.action_dim() } else { nets.d_z() };
    let mut theta_sq = 0.0;
    let mut theta_row_sq: f64 = 0.0;
    let mut z_sq = 0.0;
    // One reverse sweep per output component: each backward starts from a
    // scalar, so component rows are extracted with fresh tapes.
    for i in 0..out_dim {
        let tape = Tape::new();
        let obs_t = Tensor::vector(obs)?;
        let z_leaf = match nets.d_z() {
            0 => None,
            _ => Some(tape.input(&Tensor::vector(z)?)),
        };
        let out = if action_head {
            nets.action_mean(&tape, store, &obs_t, z_leaf.as_ref())?
        } else {
            nets.state_mean(&tape, store, &obs_t, z_leaf.as_ref().expect("d_z ≥ 1"))?
        };
        let component = tape.slice(&out, i, 1)?;
        let scalar = tape.sum(&component)?;
        let grads = tape.backward(&scalar, store)?;
        let mut row_sq = 0.0;
        for &id in theta {
            if let Some(g) = grads.get(id) {
                row_sq += g.iter().map(|v| v * v).sum::<f64>();
            }
        }
        theta_sq += row_sq;
        theta_row_sq = theta_row_sq.max(row_sq);
        if let Some(gz) = z_leaf.as_ref().and_then(|leaf| grads.input_grad(leaf)) {
            z_sq += gz.iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(OutputJacobian { theta_sq, theta_row_sq, z_sq })
}

/// Measures `(F, H, K, Z, F_d, H_d)` as maxima over `samples` of the exact
/// Jacobians at each `(obs, z)`, differentiating w.r.t. the parameter subset
/// `theta` (typically the mean-network parameters; log-stds and any frozen
/// couplings are excluded by not listing them).
pub fn estimate_constants(
    nets: &MeanNets,
    store: &ParameterStore,
    theta: &[ParamId],
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<JacobianConstants> {
    if samples.is_empty() {
        return Err(DiffError::InvalidValue {
            op: "estimate_constants",
            detail: "empty sample set".into(),
        });
    }
    let mut c = JacobianConstants { f: 0.0, h: 0.0, k: 0.0, z: 0.0, f_row: 0.0, h_row: 0.0 };
    for (obs, z) in samples {
        let fj = output_jacobian(nets, store, theta, obs, z, true)?;
        c.f = c.f.max(fj.theta_sq.sqrt());
        c.f_row = c.f_row.max(fj.theta_row_sq.sqrt());
        c.k = c.k.max(fj.z_sq.sqrt());
        if nets.d_z() > 0 {
            let hj = output_jacobian(nets, store, theta, obs, z, false)?;
            c.h = c.h.max(hj.theta_sq.sqrt());
            c.h_row = c.h_row.max(hj.theta_row_sq.sqrt());
            c.z = c.z.max(hj.z_sq.sqrt());
        }
    }
    Ok(c)
}
