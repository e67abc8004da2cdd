//! Deterministic-state recurrent policy: Gaussian action head on top of an
//! exact internal-state recurrence `z_{t+1} = η(obs_t, z_t)`. Gradients of
//! per-step action log-densities chain backward through the recurrence —
//! fully, or truncated to a fixed window.

use diffcore::{gaussian_logpdf, DiffError, ParamId, ParameterStore, Result, Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mean_nets::MeanNets;
use crate::stochastic::LogSigma;

/// One environment step taken by the recurrent policy.
#[derive(Clone, Debug)]
pub struct RecurrentStep {
    pub action: Vec<f64>,
    pub next_z: Vec<f64>,
    pub logp: f64,
    pub action_noise: Vec<f64>,
}

#[derive(Clone)]
pub struct RecurrentDeterministicPolicy {
    pub nets: MeanNets,
    pub log_sigma_a: LogSigma,
}

impl RecurrentDeterministicPolicy {
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
        let mut ids = self.nets.param_ids();
        ids.extend(self.log_sigma_a.param_id());
        ids
    }

    /// Stochastic action, exact state transition.
    pub fn step(
        &self,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<RecurrentStep> {
        let tape = Tape::no_grad();
        let obs_t = Tensor::vector(obs)?;
        let z_t = Tensor::vector(z)?;
        let a_mean = self.nets.action_mean(&tape, store, &obs_t, Some(&z_t))?;
        let sig = self.log_sigma_a.sigmas(store);
        let action_noise: Vec<f64> =
            sig.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        let action: Vec<f64> =
            a_mean.values().iter().zip(&action_noise).map(|(m, n)| m + n).collect();
        let next_z = self.nets.state_mean(&tape, store, &obs_t, &z_t)?.values().to_vec();
        let var = self.log_sigma_a.var_expr(&tape, store)?;
        let logp =
            gaussian_logpdf(&tape, &Tensor::vector(&action)?, &a_mean, &var)?.item()?;
        Ok(RecurrentStep { action, next_z, logp, action_noise })
    }

    /// Mean action, exact state transition (deterministic evaluation).
    pub fn act_mean(
        &self,
        store: &ParameterStore,
        obs: &[f64],
        z: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = Tape::no_grad();
        let obs_t = Tensor::vector(obs)?;
        let z_t = Tensor::vector(z)?;
        let a = self.nets.action_mean(&tape, store, &obs_t, Some(&z_t))?.values().to_vec();
        let nz = self.nets.state_mean(&tape, store, &obs_t, &z_t)?.values().to_vec();
        Ok((a, nz))
    }

    /// The deterministic state orbit `z_0, …, z_T` for an observation
    /// sequence (`z_0` given; one extra entry past the last observation).
    /// Uses the same arithmetic as the differentiable unroll, so values match
    /// it bitwise.
    pub fn state_orbit(
        &self,
        store: &ParameterStore,
        observations: &[Vec<f64>],
        z0: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let tape = Tape::no_grad();
        let mut orbit = vec![z0.to_vec()];
        let mut z = Tensor::vector(z0)?;
        for obs in observations {
            let obs_t = Tensor::vector(obs)?;
            z = self.nets.state_mean(&tape, store, &obs_t, &z)?;
            orbit.push(z.values().to_vec());
        }
        Ok(orbit)
    }

    /// Per-step differentiable action log-densities `log ν(a_t | obs_{≤t})`
    /// for a recorded episode.
    ///
    /// `truncation = 0` unrolls the full history: one state chain is built on
    /// the tape and every log-density differentiates through all preceding
    /// transitions. `truncation = w ≥ 1` gives each step its own window: the
    /// state `w−1` transitions back is treated as a constant, so gradients
    /// flow through at most `w−1` applications of the recurrence (`w = 1`
    /// treats `z_t` itself as constant). Work scales with `T·w` — the honest
    /// cost of windowed backpropagation.
    pub fn unroll_logps(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        observations: &[Vec<f64>],
        actions: &[Vec<f64>],
        z0: &[f64],
        truncation: usize,
    ) -> Result<Vec<Tensor>> {
        if observations.is_empty() || observations.len() != actions.len() {
            return Err(DiffError::InvalidValue {
                op: "unroll_logps",
                detail: format!(
                    "need equal nonempty sequences, got {} observations / {} actions",
                    observations.len(),
                    actions.len()
                ),
            });
        }
        let var = self.log_sigma_a.var_expr(tape, store)?;
        let obs_t: Vec<Tensor> =
            observations.iter().map(|o| Tensor::vector(o)).collect::<Result<_>>()?;
        let mut logps = Vec::with_capacity(actions.len());

        if truncation == 0 {
            let mut z = Tensor::vector(z0)?;
            for (t, action) in actions.iter().enumerate() {
                let a_mean = self.nets.action_mean(tape, store, &obs_t[t], Some(&z))?;
                logps.push(gaussian_logpdf(tape, &Tensor::vector(action)?, &a_mean, &var)?);
                if t + 1 < actions.len() {
                    z = self.nets.state_mean(tape, store, &obs_t[t], &z)?;
                }
            }
        } else {
            // Forward orbit as plain values; window starts detach into it.
            let orbit = self.state_orbit(store, observations, z0)?;
            for (t, action) in actions.iter().enumerate() {
                let start = (t + 1).saturating_sub(truncation);
                let mut z = Tensor::vector(&orbit[start])?;
                for obs in &obs_t[start..t] {
                    z = self.nets.state_mean(tape, store, obs, &z)?;
                }
                let a_mean = self.nets.action_mean(tape, store, &obs_t[t], Some(&z))?;
                logps.push(gaussian_logpdf(tape, &Tensor::vector(action)?, &a_mean, &var)?);
            }
        }
        Ok(logps)
    }
}
