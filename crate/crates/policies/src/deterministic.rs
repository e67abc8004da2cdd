//! Fully deterministic stateful policy for value-gradient methods: both the
//! action and the next internal state are network means, clipped to declared
//! bounds at the environment boundary while staying differentiable before
//! the clip.

use diffcore::{DiffError, ParamId, ParameterStore, Result, Tape, Tensor};

use crate::mean_nets::MeanNets;

#[derive(Clone)]
pub struct DeterministicStatefulPolicy {
    pub nets: MeanNets,
    pub action_lo: Vec<f64>,
    pub action_hi: Vec<f64>,
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
}

fn clip_to(v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)).collect()
}

impl DeterministicStatefulPolicy {
    pub fn new(
        nets: MeanNets,
        action_lo: Vec<f64>,
        action_hi: Vec<f64>,
        state_lo: Vec<f64>,
        state_hi: Vec<f64>,
    ) -> Result<Self> {
        if action_lo.len() != nets.action_dim()
            || action_hi.len() != nets.action_dim()
            || state_lo.len() != nets.d_z()
            || state_hi.len() != nets.d_z()
        {
            return Err(DiffError::DimensionMismatch {
                op: "DeterministicStatefulPolicy",
                detail: "bound vectors must match action/state dims".into(),
            });
        }
        Ok(Self { nets, action_lo, action_hi, state_lo, state_hi })
    }

    /// Symmetric unit state bounds `[−1, 1]^d_z`.
    pub fn with_unit_state_bounds(
        nets: MeanNets,
        action_lo: Vec<f64>,
        action_hi: Vec<f64>,
    ) -> Result<Self> {
        let d = nets.d_z();
        Self::new(nets, action_lo, action_hi, vec![-1.0; d], vec![1.0; d])
    }

    pub fn obs_dim(&self) -> usize {
        self.nets.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.nets.action_dim()
    }

    pub fn d_z(&self) -> usize {
        self.nets.d_z()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.d_z()]
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.nets.param_ids()
    }

    /// Clipped `(a, z′)` for acting in the environment.
    pub fn act(&self, store: &ParameterStore, obs: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = Tape::no_grad();
        let (a, nz) = self.mean_exprs(&tape, store, &Tensor::vector(obs)?, &Tensor::vector(z)?)?;
        Ok((
            clip_to(a.values(), &self.action_lo, &self.action_hi),
            clip_to(nz.values(), &self.state_lo, &self.state_hi),
        ))
    }

    /// Clips an externally perturbed `(a, z′)` — e.g. after target smoothing
    /// noise — to the declared bounds.
    pub fn clip_pair(&self, action: &[f64], z_next: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            clip_to(action, &self.action_lo, &self.action_hi),
            clip_to(z_next, &self.state_lo, &self.state_hi),
        )
    }

    /// Unclipped mean expressions `(μ^a, μ^z)` for policy losses; rank-1.
    pub fn mean_exprs(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let a = self.nets.action_mean(tape, store, obs, Some(z))?;
        let nz = self.nets.state_mean(tape, store, obs, z)?;
        Ok((a, nz))
    }

    /// Row-batched mean expressions: obs `[B,n]`, z `[B,d_z]`.
    pub fn mean_exprs_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let a = self.nets.action_mean_rows(tape, store, obs, Some(z))?;
        let nz = self.nets.state_mean_rows(tape, store, obs, z)?;
        Ok((a, nz))
    }
}
