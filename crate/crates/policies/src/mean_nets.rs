//! The shared "mean network" pair `(f, η)` behind every policy class:
//! `f(obs, z) → action mean` and `η(obs, z) → next-internal-state mean`.
//!
//! Two families are provided. `MlpGru` is the workhorse: an MLP head for `f`
//! over the concatenated `(obs, z)` and either a gated recurrent cell or a
//! single affine map for `η`. `LinearDiag` is a transparent scalar family for
//! variance diagnostics: both maps are affine in `(obs, z)` with the
//! *z-couplings fixed* (not learnable), so the state-feedback gain — the
//! quantity the variance analysis sweeps — is set exactly by construction
//! while the learnable part stays four scalars.

use diffcore::{DiffError, ParamId, ParameterStore, Result, Tape, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::nets::{GruCell, Mlp};

/// State-transition network choice for the `MlpGru` family.
#[derive(Clone)]
pub enum EtaNet {
    Gru(GruCell),
    /// Single affine map `(obs, z) → z′` (no hidden layers).
    Linear(Mlp),
}

impl EtaNet {
    fn forward(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: &Tensor,
        joint: &Tensor,
        rows: bool,
    ) -> Result<Tensor> {
        match self {
            EtaNet::Gru(cell) => {
                if rows {
                    cell.forward_rows(tape, store, obs, z)
                } else {
                    cell.forward(tape, store, obs, z)
                }
            }
            EtaNet::Linear(net) => {
                if rows {
                    net.forward_rows(tape, store, joint)
                } else {
                    net.forward(tape, store, joint)
                }
            }
        }
    }

    fn param_ids(&self) -> Vec<ParamId> {
        match self {
            EtaNet::Gru(cell) => cell.param_ids(),
            EtaNet::Linear(net) => net.param_ids(),
        }
    }
}

/// Fixed-gain scalar family (`obs`, `action`, and `z` all one-dimensional):
///
/// ```text
/// f(s, z) = w_f·s + k_gain·z + b_f        η(s, z) = w_η·s + z_gain·z + b_η
/// ```
///
/// `w_f, b_f, w_η, b_η` are the learnable parameters; `k_gain` and `z_gain`
/// are constants, so ∂f/∂z ≡ k_gain and ∂η/∂z ≡ z_gain exactly.
#[derive(Clone)]
pub struct LinearDiagNets {
    pub w_f: ParamId,
    pub b_f: ParamId,
    pub w_eta: ParamId,
    pub b_eta: ParamId,
    pub k_gain: f64,
    pub z_gain: f64,
}

/// The `(f, η)` pair, closed over its parameter ids. Cloneable in the sense
/// that several policy wrappers may hold nets referring to the same
/// parameters; the struct itself is cheap to construct via `register`/`bind`.
#[derive(Clone)]
pub enum MeanNets {
    MlpGru {
        f: Mlp,
        eta: Option<EtaNet>,
        obs_dim: usize,
        action_dim: usize,
        d_z: usize,
    },
    LinearDiag(LinearDiagNets),
}

impl MeanNets {
    pub fn obs_dim(&self) -> usize {
        match self {
            MeanNets::MlpGru { obs_dim, .. } => *obs_dim,
            MeanNets::LinearDiag(_) => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            MeanNets::MlpGru { action_dim, .. } => *action_dim,
            MeanNets::LinearDiag(_) => 1,
        }
    }

    pub fn d_z(&self) -> usize {
        match self {
            MeanNets::MlpGru { d_z, .. } => *d_z,
            MeanNets::LinearDiag(_) => 1,
        }
    }

    /// Joint `(obs, z)` input for the MLP head; `z = None` iff `d_z = 0`.
    fn joint_input(&self, tape: &Tape, obs: &Tensor, z: Option<&Tensor>, rows: bool) -> Result<Tensor> {
        match z {
            Some(z) => tape.concat(obs, z, if rows { 1 } else { 0 }),
            None => Ok(obs.clone()),
        }
    }

    fn check_z(&self, z: Option<&Tensor>, op: &'static str) -> Result<()> {
        match (self.d_z(), z) {
            (0, None) | (1.., Some(_)) => Ok(()),
            (0, Some(_)) => Err(DiffError::DimensionMismatch {
                op,
                detail: "stateless nets (d_z = 0) take no internal state".into(),
            }),
            (_, None) => Err(DiffError::DimensionMismatch {
                op,
                detail: "stateful nets require an internal state input".into(),
            }),
        }
    }

    /// Action mean `f(obs, z)`; rank-1 path.
    pub fn action_mean(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: Option<&Tensor>,
    ) -> Result<Tensor> {
        self.check_z(z, "action_mean")?;
        match self {
            MeanNets::MlpGru { f, .. } => {
                let joint = self.joint_input(tape, obs, z, false)?;
                f.forward(tape, store, &joint)
            }
            MeanNets::LinearDiag(nets) => {
                let z = z.expect("checked");
                let scaled = tape.mul(&tape.param(store, nets.w_f), obs)?;
                let with_gain = tape.add(&scaled, &tape.scale(z, nets.k_gain)?)?;
                tape.add(&with_gain, &tape.param(store, nets.b_f))
            }
        }
    }

    /// Next-internal-state mean `η(obs, z)`; rank-1 path. Requires `d_z ≥ 1`.
    pub fn state_mean(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: &Tensor,
    ) -> Result<Tensor> {
        match self {
            MeanNets::MlpGru { eta, .. } => {
                let eta = eta.as_ref().ok_or(DiffError::DimensionMismatch {
                    op: "state_mean",
                    detail: "stateless nets have no state transition".into(),
                })?;
                let joint = self.joint_input(tape, obs, Some(z), false)?;
                eta.forward(tape, store, obs, z, &joint, false)
            }
            MeanNets::LinearDiag(nets) => {
                let scaled = tape.mul(&tape.param(store, nets.w_eta), obs)?;
                let with_gain = tape.add(&scaled, &tape.scale(z, nets.z_gain)?)?;
                tape.add(&with_gain, &tape.param(store, nets.b_eta))
            }
        }
    }

    /// Row-batched action mean: obs `[B,n]`, z `[B,d_z]` → `[B,d_a]`.
    pub fn action_mean_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: Option<&Tensor>,
    ) -> Result<Tensor> {
        self.check_z(z, "action_mean_rows")?;
        match self {
            MeanNets::MlpGru { f, .. } => {
                let joint = self.joint_input(tape, obs, z, true)?;
                f.forward_rows(tape, store, &joint)
            }
            MeanNets::LinearDiag(nets) => {
                let z = z.expect("checked");
                let scaled = tape.mul_row(obs, &tape.param(store, nets.w_f))?;
                let with_gain = tape.add(&scaled, &tape.scale(z, nets.k_gain)?)?;
                tape.add_bias(&with_gain, &tape.param(store, nets.b_f))
            }
        }
    }

    /// Row-batched next-state mean: obs `[B,n]`, z `[B,d_z]` → `[B,d_z]`.
    pub fn state_mean_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: &Tensor,
    ) -> Result<Tensor> {
        match self {
            MeanNets::MlpGru { eta, .. } => {
                let eta = eta.as_ref().ok_or(DiffError::DimensionMismatch {
                    op: "state_mean_rows",
                    detail: "stateless nets have no state transition".into(),
                })?;
                let joint = self.joint_input(tape, obs, Some(z), true)?;
                eta.forward(tape, store, obs, z, &joint, true)
            }
            MeanNets::LinearDiag(nets) => {
                let scaled = tape.mul_row(obs, &tape.param(store, nets.w_eta))?;
                let with_gain = tape.add(&scaled, &tape.scale(z, nets.z_gain)?)?;
                tape.add_bias(&with_gain, &tape.param(store, nets.b_eta))
            }
        }
    }

    /// Ids of all learnable mean parameters (never includes log-stds).
    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            MeanNets::MlpGru { f, eta, .. } => {
                let mut ids = f.param_ids();
                if let Some(eta) = eta {
                    ids.extend(eta.param_ids());
                }
                ids
            }
            MeanNets::LinearDiag(n) => vec![n.w_f, n.b_f, n.w_eta, n.b_eta],
        }
    }

    /// Builds the default family: MLP head for `f` on `(obs, z)`, gated
    /// recurrent cell for `η` (omitted when `d_z = 0`).
    pub fn register_mlp_gru(
        store: &mut ParameterStore,
        prefix: &str,
        obs_dim: usize,
        action_dim: usize,
        d_z: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let f = Mlp::register(store, &format!("{prefix}.f"), obs_dim + d_z, hidden, action_dim, rng)?;
        let eta = if d_z > 0 {
            Some(EtaNet::Gru(GruCell::register(store, &format!("{prefix}.eta"), obs_dim, d_z, rng)?))
        } else {
            None
        };
        Ok(MeanNets::MlpGru { f, eta, obs_dim, action_dim, d_z })
    }

    /// Same as [`register_mlp_gru`](Self::register_mlp_gru) but with a single
    /// affine `η(obs, z)` instead of a gated cell.
    pub fn register_mlp_linear_eta(
        store: &mut ParameterStore,
        prefix: &str,
        obs_dim: usize,
        action_dim: usize,
        d_z: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let f = Mlp::register(store, &format!("{prefix}.f"), obs_dim + d_z, hidden, action_dim, rng)?;
        let eta = if d_z > 0 {
            Some(EtaNet::Linear(Mlp::register(
                store,
                &format!("{prefix}.eta"),
                obs_dim + d_z,
                &[],
                d_z,
                rng,
            )?))
        } else {
            None
        };
        Ok(MeanNets::MlpGru { f, eta, obs_dim, action_dim, d_z })
    }

    /// Scalar fixed-gain diagnostic family; learnables start at zero.
    pub fn register_linear_diag(
        store: &mut ParameterStore,
        prefix: &str,
        k_gain: f64,
        z_gain: f64,
    ) -> Result<Self> {
        Ok(MeanNets::LinearDiag(LinearDiagNets {
            w_f: store.register(&format!("{prefix}.w_f"), &[1], vec![0.0])?,
            b_f: store.register(&format!("{prefix}.b_f"), &[1], vec![0.0])?,
            w_eta: store.register(&format!("{prefix}.w_eta"), &[1], vec![0.0])?,
            b_eta: store.register(&format!("{prefix}.b_eta"), &[1], vec![0.0])?,
            k_gain,
            z_gain,
        }))
    }
}
