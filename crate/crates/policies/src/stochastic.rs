//! Stochastic stateful policy: a joint diagonal Gaussian over the action and
//! the next internal state,
//!
//! ```text
//! (a, z′) ~ N( [f(obs, z), η(obs, z)],  diag(σ_a², σ_z²) )
//! ```
//!
//! The two blocks are conditionally independent given `(obs, z)`, so the
//! joint log-density is the sum of the action marginal and the state
//! marginal — an identity tests assert to machine precision.

use diffcore::{gaussian_logpdf, gaussian_logpdf_rows, DiffError, ParamId, ParameterStore, Result, Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mean_nets::MeanNets;

/// Per-dimension log-standard-deviation: either a learnable parameter or a
/// fixed constant vector (frozen, e.g. for variance diagnostics where the
/// learnable set must be exactly the mean parameters).
#[derive(Clone)]
pub enum LogSigma {
    Learned(ParamId),
    Fixed(Vec<f64>),
}

impl LogSigma {
    pub fn values(&self, store: &ParameterStore) -> Vec<f64> {
        match self {
            LogSigma::Learned(id) => store.values(*id).to_vec(),
            LogSigma::Fixed(v) => v.clone(),
        }
    }

    pub fn sigmas(&self, store: &ParameterStore) -> Vec<f64> {
        self.values(store).iter().map(|l| l.exp()).collect()
    }

    /// Diagonal variance `exp(2·logσ)` as a tape expression (tracked only
    /// when learnable).
    pub fn var_expr(&self, tape: &Tape, store: &ParameterStore) -> Result<Tensor> {
        match self {
            LogSigma::Learned(id) => {
                let ls = tape.param(store, *id);
                tape.exp(&tape.scale(&ls, 2.0)?)
            }
            LogSigma::Fixed(v) => {
                Tensor::vector(&v.iter().map(|l| (2.0 * l).exp()).collect::<Vec<_>>())
            }
        }
    }

    /// Standard deviation `exp(logσ)` as a tape expression.
    pub fn sigma_expr(&self, tape: &Tape, store: &ParameterStore) -> Result<Tensor> {
        match self {
            LogSigma::Learned(id) => tape.exp(&tape.param(store, *id)),
            LogSigma::Fixed(v) => Tensor::vector(&v.iter().map(|l| l.exp()).collect::<Vec<_>>()),
        }
    }

    pub fn param_id(&self) -> Option<ParamId> {
        match self {
            LogSigma::Learned(id) => Some(*id),
            LogSigma::Fixed(_) => None,
        }
    }
}

/// One draw from the policy. `action_noise`/`state_noise` are the additive
/// terms `σ ⊙ ε` actually added to the means; storing them lets a replay
/// buffer rebuild `z′ = η(obs, z) + state_noise` bitwise when the policy is
/// unchanged, and lets common-random-number oracles replay the draw.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub action: Vec<f64>,
    pub next_z: Vec<f64>,
    pub logp: f64,
    pub action_noise: Vec<f64>,
    pub state_noise: Vec<f64>,
}

/// Differentiable (reparameterized) draw: the returned tensors are tape
/// expressions through which gradients flow into the mean networks and any
/// learnable log-std.
pub struct ReparamSample {
    pub action: Tensor,
    pub next_z: Option<Tensor>,
    pub logp_action: Tensor,
    pub logp_state: Option<Tensor>,
}

/// Row-batched counterpart of [`ReparamSample`]: `action` is `[B,d_a]`,
/// `next_z` is `[B,d_z]`, the log-densities are length-`B` vectors.
pub struct ReparamRows {
    pub action: Tensor,
    pub next_z: Option<Tensor>,
    pub logp_action: Tensor,
    pub logp_state: Option<Tensor>,
}

#[derive(Clone)]
pub struct StatefulGaussianPolicy {
    pub nets: MeanNets,
    pub log_sigma_a: LogSigma,
    /// `None` iff the policy is stateless (`d_z = 0`).
    pub log_sigma_z: Option<LogSigma>,
}

impl StatefulGaussianPolicy {
    pub fn obs_dim(&self) -> usize {
        self.nets.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.nets.action_dim()
    }

    pub fn d_z(&self) -> usize {
        self.nets.d_z()
    }

    /// Zero initial internal state.
    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.d_z()]
    }

    /// All learnable parameter ids: mean networks plus any learnable
    /// log-stds.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.nets.param_ids();
        ids.extend(self.log_sigma_a.param_id());
        if let Some(ls) = &self.log_sigma_z {
            ids.extend(ls.param_id());
        }
        ids
    }

    fn z_tensors(&self, z: &[f64]) -> Result<Option<Tensor>> {
        if self.d_z() == 0 {
            if !z.is_empty() {
                return Err(DiffError::DimensionMismatch {
                    op: "policy",
                    detail: "stateless policy given a nonempty internal state".into(),
                });
            }
            Ok(None)
        } else {
            Ok(Some(Tensor::vector(z)?))
        }
    }

    /// Draws `(a, z′)` and evaluates its own log-density. Noise order is
    /// fixed — action dimensions first, then state dimensions — so a seeded
    /// RNG reproduces draws exactly.
    pub fn sample(
        &self,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<PolicySample> {
        let tape = Tape::no_grad();
        let obs_t = Tensor::vector(obs)?;
        let z_t = self.z_tensors(z)?;
        let a_mean = self.nets.action_mean(&tape, store, &obs_t, z_t.as_ref())?;

        let sig_a = self.log_sigma_a.sigmas(store);
        let action_noise: Vec<f64> =
            sig_a.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let action: Vec<f64> =
            a_mean.values().iter().zip(&action_noise).map(|(m, n)| m + n).collect();

        let (next_z, state_noise) = if let Some(z_t) = &z_t {
            let z_mean = self.nets.state_mean(&tape, store, &obs_t, z_t)?;
            let sig_z = self.log_sigma_z.as_ref().expect("stateful policy has σ_z").sigmas(store);
            let noise: Vec<f64> =
                sig_z.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
            let nz: Vec<f64> = z_mean.values().iter().zip(&noise).map(|(m, n)| m + n).collect();
            (nz, noise)
        } else {
            (Vec::new(), Vec::new())
        };

        // Same code path as log_prob — the round-trip is bitwise exact.
        let logp = self.log_prob(&tape, store, obs, z, &action, &next_z)?.item()?;
        Ok(PolicySample { action, next_z, logp, action_noise, state_noise })
    }

    /// Mean action and mean next state (deterministic evaluation mode).
    pub fn act_mean(
        &self,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = Tape::no_grad();
        let obs_t = Tensor::vector(obs)?;
        let z_t = self.z_tensors(z)?;
        let a = self.nets.action_mean(&tape, store, &obs_t, z_t.as_ref())?.values().to_vec();
        let nz = match &z_t {
            Some(z_t) => self.nets.state_mean(&tape, store, &obs_t, z_t)?.values().to_vec(),
            None => Vec::new(),
        };
        Ok((a, nz))
    }

    /// Rebuilds `z′` from a stored additive noise term under the *current*
    /// parameters: `η(obs, z) + state_noise`. With unchanged parameters this
    /// reproduces the originally sampled `z′` bitwise.
    pub fn refresh_state(
        &self,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
        state_noise: &[f64],
    ) -> Result<Vec<f64>> {
        let tape = Tape::no_grad();
        let obs_t = Tensor::vector(obs)?;
        let z_t = Tensor::vector(z)?;
        let mean = self.nets.state_mean(&tape, store, &obs_t, &z_t)?;
        Ok(mean.values().iter().zip(state_noise).map(|(m, n)| m + n).collect())
    }

    /// Joint log-density `log π(a, z′ | obs, z)` as a differentiable scalar.
    /// For stateless policies (`d_z = 0`) `z` and `z_next` must be empty and
    /// the result is the action marginal alone.
    pub fn log_prob(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
        action: &[f64],
        z_next: &[f64],
    ) -> Result<Tensor> {
        let (lp_a, lp_z) = self.log_prob_parts(tape, store, obs, z, action, z_next)?;
        match lp_z {
            Some(lp_z) => tape.add(&lp_a, &lp_z),
            None => Ok(lp_a),
        }
    }

    /// The two marginal log-densities (action, state) separately — the joint
    /// is their sum. Used where the two channels carry different temperature
    /// weights.
    pub fn log_prob_parts(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
        action: &[f64],
        z_next: &[f64],
    ) -> Result<(Tensor, Option<Tensor>)> {
        let obs_t = Tensor::vector(obs)?;
        let z_t = self.z_tensors(z)?;
        let a_mean = self.nets.action_mean(tape, store, &obs_t, z_t.as_ref())?;
        let var_a = self.log_sigma_a.var_expr(tape, store)?;
        let lp_a = gaussian_logpdf(tape, &Tensor::vector(action)?, &a_mean, &var_a)?;
        let lp_z = match &z_t {
            Some(z_t) => {
                let z_mean = self.nets.state_mean(tape, store, &obs_t, z_t)?;
                let var_z = self
                    .log_sigma_z
                    .as_ref()
                    .expect("stateful policy has σ_z")
                    .var_expr(tape, store)?;
                Some(gaussian_logpdf(tape, &Tensor::vector(z_next)?, &z_mean, &var_z)?)
            }
            None => {
                if !z_next.is_empty() {
                    return Err(DiffError::DimensionMismatch {
                        op: "log_prob",
                        detail: "stateless policy given a nonempty next state".into(),
                    });
                }
                None
            }
        };
        Ok((lp_a, lp_z))
    }

    /// Row-batched joint log-density: obs `[B,n]`, z `[B,d_z]`, action
    /// `[B,d_a]`, z_next `[B,d_z]` → `[B]`. Pass `z = z_next = None` for
    /// stateless policies.
    pub fn log_prob_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: Option<&Tensor>,
        action: &Tensor,
        z_next: Option<&Tensor>,
    ) -> Result<Tensor> {
        let a_mean = self.nets.action_mean_rows(tape, store, obs, z)?;
        let var_a = self.log_sigma_a.var_expr(tape, store)?;
        let mut lp = gaussian_logpdf_rows(tape, action, &a_mean, &var_a)?;
        if let Some(z) = z {
            let z_next = z_next.ok_or(DiffError::DimensionMismatch {
                op: "log_prob_rows",
                detail: "stateful policy requires z_next rows".into(),
            })?;
            let z_mean = self.nets.state_mean_rows(tape, store, obs, z)?;
            let var_z = self
                .log_sigma_z
                .as_ref()
                .expect("stateful policy has σ_z")
                .var_expr(tape, store)?;
            let lp_z = gaussian_logpdf_rows(tape, z_next, &z_mean, &var_z)?;
            lp = tape.add(&lp, &lp_z)?;
        }
        Ok(lp)
    }

    /// Reparameterized draw `a = f + σ_a ⊙ ε_a`, `z′ = η + σ_z ⊙ ε_z` as tape
    /// expressions, together with their own log-densities (also tape
    /// expressions, differentiable through the sample point and the stds).
    pub fn rsample(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
        eps_a: &[f64],
        eps_z: &[f64],
    ) -> Result<ReparamSample> {
        let obs_t = Tensor::vector(obs)?;
        let z_t = self.z_tensors(z)?;
        let a_mean = self.nets.action_mean(tape, store, &obs_t, z_t.as_ref())?;
        let var_a = self.log_sigma_a.var_expr(tape, store)?;
        let sig_a = self.log_sigma_a.sigma_expr(tape, store)?;
        let action = tape.add(&a_mean, &tape.mul(&sig_a, &Tensor::vector(eps_a)?)?)?;
        let logp_action = gaussian_logpdf(tape, &action, &a_mean, &var_a)?;

        let (next_z, logp_state) = match &z_t {
            Some(z_t) => {
                let z_mean = self.nets.state_mean(tape, store, &obs_t, z_t)?;
                let ls_z = self.log_sigma_z.as_ref().expect("stateful policy has σ_z");
                let var_z = ls_z.var_expr(tape, store)?;
                let sig_z = ls_z.sigma_expr(tape, store)?;
                let nz = tape.add(&z_mean, &tape.mul(&sig_z, &Tensor::vector(eps_z)?)?)?;
                let lp = gaussian_logpdf(tape, &nz, &z_mean, &var_z)?;
                (Some(nz), Some(lp))
            }
            None => (None, None),
        };
        Ok(ReparamSample { action, next_z, logp_action, logp_state })
    }

    /// Row-batched reparameterized draw over `B` rows at once: obs `[B,n]`,
    /// z `[B,d_z]` (or `None` when stateless), noise matrices the same shape
    /// as the corresponding outputs. Gradients flow through means and stds,
    /// never into the noise.
    pub fn rsample_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        obs: &Tensor,
        z: Option<&Tensor>,
        eps_a: &Tensor,
        eps_z: Option<&Tensor>,
    ) -> Result<ReparamRows> {
        let a_mean = self.nets.action_mean_rows(tape, store, obs, z)?;
        let var_a = self.log_sigma_a.var_expr(tape, store)?;
        let sig_a = self.log_sigma_a.sigma_expr(tape, store)?;
        let action = tape.add(&a_mean, &tape.mul_row(eps_a, &sig_a)?)?;
        let logp_action = gaussian_logpdf_rows(tape, &action, &a_mean, &var_a)?;

        let (next_z, logp_state) = match z {
            Some(z) => {
                let eps_z = eps_z.ok_or(DiffError::DimensionMismatch {
                    op: "rsample_rows",
                    detail: "stateful policy requires state-noise rows".into(),
                })?;
                let z_mean = self.nets.state_mean_rows(tape, store, obs, z)?;
                let ls_z = self.log_sigma_z.as_ref().expect("stateful policy has σ_z");
                let var_z = ls_z.var_expr(tape, store)?;
                let sig_z = ls_z.sigma_expr(tape, store)?;
                let nz = tape.add(&z_mean, &tape.mul_row(eps_z, &sig_z)?)?;
                let lp = gaussian_logpdf_rows(tape, &nz, &z_mean, &var_z)?;
                (Some(nz), Some(lp))
            }
            None => (None, None),
        };
        Ok(ReparamRows { action, next_z, logp_action, logp_state })
    }
}
