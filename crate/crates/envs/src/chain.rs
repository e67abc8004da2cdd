//! Scalar integrator chain used as the oracle substrate: short horizons,
//! closed-form expected returns, fully deterministic transitions.

use rand_distr::{Distribution, Normal};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Env, EnvStep};

/// Configuration for [`ChainDiagnostic`].
#[derive(Clone, Debug)]
pub struct ChainConfig {
    /// Episode length (typically 1–3 for oracle work).
    pub horizon: usize,
    /// Initial state mean and standard deviation: `s₀ ~ N(mean, std²)`.
    pub init_mean: f64,
    pub init_std: f64,
    /// When set, states are clipped to `[−c, c]` after every transition,
    /// which bounds the reward by `c²` (required by the variance bounds).
    pub state_clip: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { horizon: 2, init_mean: 0.0, init_std: 1.0, state_clip: None }
    }
}

/// Scalar random-walk control problem:
///
/// `s₀ ~ N(init_mean, init_std²)`, `s_{t+1} = s_t + a_t`, reward
/// `r_t = −s_{t+1}²` (the square of the *successor* state, so even a 1-step
/// episode has an action-dependent return with a closed form under a
/// Gaussian policy).
///
/// Observation and privileged state are both `[s_t]` — the chain is fully
/// observed; its job is analytic tractability, not partial observability.
pub struct ChainDiagnostic {
    cfg: ChainConfig,
    s: f64,
    t: usize,
    done: bool,
}

impl ChainDiagnostic {
    pub fn new(cfg: ChainConfig) -> Self {
        Self { cfg, s: 0.0, t: 0, done: true }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    fn clip_state(&self, s: f64) -> f64 {
        match self.cfg.state_clip {
            Some(c) => s.clamp(-c, c),
            None => s,
        }
    }
}

impl Env for ChainDiagnostic {
    fn obs_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn privileged_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.cfg.horizon
    }
    fn reward_bound(&self) -> Option<f64> {
        self.cfg.state_clip.map(|c| c * c)
    }
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY], vec![f64::INFINITY])
    }
    fn return_range(&self) -> (f64, f64) {
        (-10.0, 0.0)
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(self.cfg.init_mean, self.cfg.init_std).expect("valid init std");
        self.s = self.clip_state(normal.sample(&mut rng));
        self.t = 0;
        self.done = false;
        EnvStep {
            obs: vec![self.s],
            privileged: vec![self.s],
            reward: 0.0,
            absorbing: false,
            last: false,
        }
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        assert!(!self.done, "step() after episode end");
        assert_eq!(action.len(), 1, "action dimension");
        self.s = self.clip_state(self.s + action[0]);
        self.t += 1;
        let reward = -self.s * self.s;
        let last = self.t >= self.cfg.horizon;
        self.done = last;
        EnvStep {
            obs: vec![self.s],
            privileged: vec![self.s],
            reward,
            absorbing: false,
            last,
        }
    }

    fn success(&self) -> Option<bool> {
        None
    }

    fn name(&self) -> &'static str {
        "chain_diagnostic"
    }
}
