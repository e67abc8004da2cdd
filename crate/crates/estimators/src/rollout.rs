use diffcore::{ParameterStore, Result};
use envs::Env;
use policies::{RecurrentDeterministicPolicy, StatefulGaussianPolicy};
use rand_chacha::ChaCha8Rng;

use crate::trajectory::{ExtendedTrajectory, TrajStep};

/// Rolls one episode with the jointly stochastic policy: both the action and
/// the next internal state are sampled. The raw (unclipped) action is stored
/// — it is the value the recorded log-density refers to; the environment
/// clips internally.
pub fn rollout_stochastic(
    env: &mut dyn Env,
    policy: &StatefulGaussianPolicy,
    store: &ParameterStore,
    gamma: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ExtendedTrajectory> {
    let mut cur = env.reset(seed);
    let mut z = policy.initial_state();
    let mut steps = Vec::new();
    loop {
        let s = policy.sample(store, &cur.obs, &z, rng)?;
        let next = env.step(&s.action);
        steps.push(TrajStep {
            obs: cur.obs,
            privileged: cur.privileged,
            z: z.clone(),
            action: s.action,
            z_next: s.next_z.clone(),
            reward: next.reward,
            absorbing: next.absorbing,
            last: next.last,
        });
        z = s.next_z;
        cur = next;
        if steps.last().expect("pushed").last {
            break;
        }
    }
    let (final_obs, final_privileged) = if cur.absorbing {
        (Vec::new(), Vec::new())
    } else {
        (cur.obs, cur.privileged)
    };
    Ok(ExtendedTrajectory { steps, gamma, final_obs, final_privileged })
}

/// Rolls one episode with the recurrent policy: stochastic action head over
/// the exact deterministic state recurrence.
pub fn rollout_recurrent(
    env: &mut dyn Env,
    policy: &RecurrentDeterministicPolicy,
    store: &ParameterStore,
    gamma: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ExtendedTrajectory> {
    let mut cur = env.reset(seed);
    let mut z = policy.initial_state();
    let mut steps = Vec::new();
    loop {
        let s = policy.step(store, &cur.obs, &z, rng)?;
        let next = env.step(&s.action);
        steps.push(TrajStep {
            obs: cur.obs,
            privileged: cur.privileged,
            z: z.clone(),
            action: s.action,
            z_next: s.next_z.clone(),
            reward: next.reward,
            absorbing: next.absorbing,
            last: next.last,
        });
        z = s.next_z;
        cur = next;
        if steps.last().expect("pushed").last {
            break;
        }
    }
    let (final_obs, final_privileged) = if cur.absorbing {
        (Vec::new(), Vec::new())
    } else {
        (cur.obs, cur.privileged)
    };
    Ok(ExtendedTrajectory { steps, gamma, final_obs, final_privileged })
}
