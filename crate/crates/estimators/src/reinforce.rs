use diffcore::{DiffError, ParameterStore, Result, Tape, Tensor};
use policies::{RecurrentDeterministicPolicy, StatefulGaussianPolicy};

use crate::trajectory::{ExtendedTrajectory, GradientSample};

/// Variance-reduction target multiplying each score term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Baseline {
    /// Total discounted return `J(τ̄)` — the weighting the variance analysis
    /// assumes, and therefore the default in variance experiments.
    #[default]
    None,
    /// Discounted reward-to-go from the step (absolute `γᵗ` discounting, so
    /// the terms still decompose the full return).
    RewardToGo,
    /// Total return minus the batch-mean return.
    MeanReturn,
}

/// How score terms are weighted when forming the estimate.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScoreWeighting {
    pub baseline: Baseline,
    /// Multiply the step-`t` score by `γᵗ`. The plain undiscounted score sum
    /// is the default; this is the alternative convention in which the score
    /// terms are discounted like the rewards they precede.
    pub discount_scores: bool,
}

/// Per-trajectory, per-step weights `c_t` such that the estimate is
/// `(1/N) Σ_τ Σ_t c_t ∇ log π_t`.
fn step_weights(trajectories: &[ExtendedTrajectory], w: ScoreWeighting) -> Vec<Vec<f64>> {
    let returns: Vec<f64> = trajectories.iter().map(|t| t.discounted_return()).collect();
    let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
    trajectories
        .iter()
        .zip(&returns)
        .map(|(traj, ret)| {
            let base: Vec<f64> = match w.baseline {
                Baseline::None => vec![*ret; traj.len()],
                Baseline::RewardToGo => traj.reward_to_go(),
                Baseline::MeanReturn => vec![ret - mean_return; traj.len()],
            };
            if w.discount_scores {
                base.iter()
                    .enumerate()
                    .map(|(t, c)| traj.gamma.powi(t as i32) * c)
                    .collect()
            } else {
                base
            }
        })
        .collect()
}

fn check_batch(
    trajectories: &[ExtendedTrajectory],
    obs_dim: usize,
    action_dim: usize,
    d_z: usize,
) -> Result<()> {
    if trajectories.is_empty() {
        return Err(DiffError::InvalidValue {
            op: "reinforce",
            detail: "empty trajectory batch".into(),
        });
    }
    for traj in trajectories {
        traj.validate()?;
        let s = &traj.steps[0];
        if s.obs.len() != obs_dim || s.action.len() != action_dim || s.z.len() != d_z {
            return Err(DiffError::DimensionMismatch {
                op: "reinforce",
                detail: format!(
                    "trajectory dims ({}, {}, {}) vs policy ({obs_dim}, {action_dim}, {d_z})",
                    s.obs.len(),
                    s.action.len(),
                    s.z.len()
                ),
            });
        }
    }
    Ok(())
}

/// Accumulates `Σ_t c_t · logp_t` and backpropagates once per trajectory.
fn weighted_score_gradient(
    store: &ParameterStore,
    logps: &[Tensor],
    weights: &[f64],
    tape: &Tape,
    accum: &mut [f64],
) -> Result<()> {
    let mut loss: Option<Tensor> = None;
    for (lp, c) in logps.iter().zip(weights) {
        if *c == 0.0 {
            continue;
        }
        let term = tape.scale(lp, *c)?;
        loss = Some(match loss {
            Some(acc) => tape.add(&acc, &term)?,
            None => term,
        });
    }
    if let Some(loss) = loss {
        let grads = tape.backward(&loss, store)?;
        for (a, g) in accum.iter_mut().zip(grads.flat(store)) {
            *a += g;
        }
    }
    Ok(())
}

/// Score-function gradient for the jointly stochastic policy: every step
/// contributes the gradient of its own joint log-density
/// `log π(a_t, z_{t+1} | o_t, z_t)` — no flow through time.
pub fn reinforce_s2pg(
    policy: &StatefulGaussianPolicy,
    store: &ParameterStore,
    trajectories: &[ExtendedTrajectory],
    weighting: ScoreWeighting,
) -> Result<GradientSample> {
    check_batch(trajectories, policy.obs_dim(), policy.action_dim(), policy.d_z())?;
    let weights = step_weights(trajectories, weighting);
    let mut accum = vec![0.0; store.flat_len()];
    for (traj, w) in trajectories.iter().zip(&weights) {
        let tape = Tape::new();
        let mut logps = Vec::with_capacity(traj.len());
        for step in &traj.steps {
            logps.push(policy.log_prob(
                &tape, store, &step.obs, &step.z, &step.action, &step.z_next,
            )?);
        }
        weighted_score_gradient(store, &logps, w, &tape, &mut accum)?;
    }
    let n = trajectories.len() as f64;
    for a in &mut accum {
        *a /= n;
    }
    let sample = GradientSample { grad: accum, batch_size: trajectories.len() };
    sample.check_finite()?;
    Ok(sample)
}

/// Score-function gradient for the recurrent policy: per-step action
/// log-densities are differentiated through the exact state recurrence, with
/// gradient flow limited to `truncation` (0 = the full history).
pub fn reinforce_bptt(
    policy: &RecurrentDeterministicPolicy,
    store: &ParameterStore,
    trajectories: &[ExtendedTrajectory],
    truncation: usize,
    weighting: ScoreWeighting,
) -> Result<GradientSample> {
    check_batch(trajectories, policy.obs_dim(), policy.action_dim(), policy.d_z())?;
    let weights = step_weights(trajectories, weighting);
    let mut accum = vec![0.0; store.flat_len()];
    for (traj, w) in trajectories.iter().zip(&weights) {
        let tape = Tape::new();
        let obs: Vec<Vec<f64>> = traj.steps.iter().map(|s| s.obs.clone()).collect();
        let actions: Vec<Vec<f64>> = traj.steps.iter().map(|s| s.action.clone()).collect();
        let logps =
            policy.unroll_logps(&tape, store, &obs, &actions, &traj.steps[0].z, truncation)?;
        weighted_score_gradient(store, &logps, w, &tape, &mut accum)?;
    }
    let n = trajectories.len() as f64;
    for a in &mut accum {
        *a /= n;
    }
    let sample = GradientSample { grad: accum, batch_size: trajectories.len() };
    sample.check_finite()?;
    Ok(sample)
}
