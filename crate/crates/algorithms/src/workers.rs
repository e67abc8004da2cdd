//! Episode collectors and evaluators.
//!
//! One learner owns the parameters; collectors borrow a read-only store
//! snapshot and either fill a replay buffer with transitions or hand whole
//! trajectories over a channel. Within an episode the internal state is
//! carried across steps and reset to zero at the start.

use crate::buffer::{ReplayBuffer, Transition};
use diffcore::{ParameterStore, Result, Tape, Tensor};
use envs::Env;
use estimators::ExtendedTrajectory;
use policies::{DeterministicStatefulPolicy, RecurrentDeterministicPolicy, StatefulGaussianPolicy};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::mpsc::{channel, Receiver, Sender};

/// Ordered hand-off of finished trajectories from collectors to the
/// learner. Episodes arrive whole, in push order.
pub fn trajectory_channel() -> (Sender<ExtendedTrajectory>, Receiver<ExtendedTrajectory>) {
    channel()
}

/// Rolls one episode with the jointly stochastic policy and pushes its
/// transitions (with stored state noise) into the buffer. Returns the
/// undiscounted return and the number of environment steps taken.
pub fn collect_gaussian_episode(
    env: &mut dyn Env,
    policy: &StatefulGaussianPolicy,
    store: &ParameterStore,
    seed: u64,
    rng: &mut ChaCha8Rng,
    buffer: &mut ReplayBuffer,
    episode_id: u64,
) -> Result<(f64, usize)> {
    let mut cur = env.reset(seed);
    let mut z = policy.initial_state();
    let mut total = 0.0;
    let mut step_index = 0;
    loop {
        let draw = policy.sample(store, &cur.obs, &z, rng)?;
        let next = env.step(&draw.action);
        total += next.reward;
        buffer.push(Transition {
            obs: cur.obs.clone(),
            privileged: cur.privileged.clone(),
            z: z.clone(),
            action: draw.action,
            z_next: draw.next_z.clone(),
            state_noise: draw.state_noise,
            reward: next.reward,
            next_obs: next.obs.clone(),
            next_privileged: next.privileged.clone(),
            absorbing: next.absorbing,
            episode_id,
            step_index,
        });
        step_index += 1;
        z = draw.next_z;
        if next.last {
            return Ok((total, step_index));
        }
        cur = next;
    }
}

/// Same episode loop for the deterministic actor: Gaussian exploration
/// noise of scale `sigma` on both the action and the next internal state,
/// then both clipped to the policy's bounds. The stored state noise is the
/// pre-clip additive term, so a refresh replays `clip(η + noise)`.
#[allow(clippy::too_many_arguments)]
pub fn collect_deterministic_episode(
    env: &mut dyn Env,
    policy: &DeterministicStatefulPolicy,
    store: &ParameterStore,
    sigma: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
    buffer: &mut ReplayBuffer,
    episode_id: u64,
) -> Result<(f64, usize)> {
    let gauss = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let mut cur = env.reset(seed);
    let mut z = policy.initial_state();
    let mut total = 0.0;
    let mut step_index = 0;
    loop {
        // Unclipped means + noise, clipped once: `clip(μ + ε)`, so a state
        // refresh replaying the same formula reproduces the stored values.
        let tape = Tape::no_grad();
        let (a_expr, z_expr) =
            policy.mean_exprs(&tape, store, &Tensor::vector(&cur.obs)?, &Tensor::vector(&z)?)?;
        let a_noise = gauss(a_expr.len(), rng);
        let z_noise = gauss(z_expr.len(), rng);
        let a_raw: Vec<f64> =
            a_expr.values().iter().zip(&a_noise).map(|(m, n)| m + n).collect();
        let z_raw: Vec<f64> =
            z_expr.values().iter().zip(&z_noise).map(|(m, n)| m + n).collect();
        let (action, z_next) = policy.clip_pair(&a_raw, &z_raw);
        let next = env.step(&action);
        total += next.reward;
        buffer.push(Transition {
            obs: cur.obs.clone(),
            privileged: cur.privileged.clone(),
            z: z.clone(),
            action,
            z_next: z_next.clone(),
            state_noise: z_noise,
            reward: next.reward,
            next_obs: next.obs.clone(),
            next_privileged: next.privileged.clone(),
            absorbing: next.absorbing,
            episode_id,
            step_index,
        });
        step_index += 1;
        z = z_next;
        if next.last {
            return Ok((total, step_index));
        }
        cur = next;
    }
}

/// Evaluation outcome over a set of seeds.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub mean_return: f64,
    pub std_return: f64,
    /// Fraction of episodes the environment marked successful; `NaN` when
    /// the environment has no success notion.
    pub success_rate: f64,
}

pub fn summarize(returns: &[f64], successes: &[Option<bool>]) -> EvalReport {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let known: Vec<bool> = successes.iter().filter_map(|s| *s).collect();
    let success_rate = if known.is_empty() {
        f64::NAN
    } else {
        known.iter().filter(|s| **s).count() as f64 / known.len() as f64
    };
    EvalReport { mean_return: mean, std_return: var.sqrt(), success_rate }
}

/// Deterministic evaluation of the jointly stochastic policy: actions and
/// state transitions follow the means only.
pub fn evaluate_mean_policy(
    env: &mut dyn Env,
    policy: &StatefulGaussianPolicy,
    store: &ParameterStore,
    seeds: &[u64],
) -> Result<EvalReport> {
    let mut returns = Vec::with_capacity(seeds.len());
    let mut successes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cur = env.reset(seed);
        let mut z = policy.initial_state();
        let mut total = 0.0;
        loop {
            let (a, nz) = policy.act_mean(store, &cur.obs, &z)?;
            let next = env.step(&a);
            total += next.reward;
            z = nz;
            if next.last {
                break;
            }
            cur = next;
        }
        returns.push(total);
        successes.push(env.success());
    }
    Ok(summarize(&returns, &successes))
}

/// Deterministic evaluation of the recurrent (deterministic-state) policy.
pub fn evaluate_recurrent_policy(
    env: &mut dyn Env,
    policy: &RecurrentDeterministicPolicy,
    store: &ParameterStore,
    seeds: &[u64],
) -> Result<EvalReport> {
    let mut returns = Vec::with_capacity(seeds.len());
    let mut successes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cur = env.reset(seed);
        let mut z = vec![0.0; policy.nets.d_z()];
        let mut total = 0.0;
        loop {
            let (a, nz) = policy.act_mean(store, &cur.obs, &z)?;
            let next = env.step(&a);
            total += next.reward;
            z = nz;
            if next.last {
                break;
            }
            cur = next;
        }
        returns.push(total);
        successes.push(env.success());
    }
    Ok(summarize(&returns, &successes))
}

/// Deterministic evaluation of the deterministic actor (no exploration).
pub fn evaluate_deterministic_policy(
    env: &mut dyn Env,
    policy: &DeterministicStatefulPolicy,
    store: &ParameterStore,
    seeds: &[u64],
) -> Result<EvalReport> {
    let mut returns = Vec::with_capacity(seeds.len());
    let mut successes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cur = env.reset(seed);
        let mut z = policy.initial_state();
        let mut total = 0.0;
        loop {
            let (a_raw, z_raw) = policy.act(store, &cur.obs, &z)?;
            let (a, nz) = policy.clip_pair(&a_raw, &z_raw);
            let next = env.step(&a);
            total += next.reward;
            z = nz;
            if next.last {
                break;
            }
            cur = next;
        }
        returns.push(total);
        successes.push(env.success());
    }
    Ok(summarize(&returns, &successes))
}
