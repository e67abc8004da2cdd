//! Small partially observable control environments.
//!
//! Each environment exposes two views of its state: the *observation* the
//! policy sees (with information deliberately masked) and the *privileged
//! state* that critics may consume during training. All dynamics are
//! deterministic given the state and action; the only randomness is the
//! seeded initial condition, which makes common-random-number experiments
//! possible on top of these environments.
//!
//! Episode protocol: `reset(seed)` returns the first [`EnvStep`] (reward 0),
//! then `step(action)` until the step reports `last`. `absorbing` marks a
//! genuine terminal state (bootstrap value 0); an episode that merely hits
//! the horizon ends with `last = true, absorbing = false` and may be
//! bootstrapped.

mod chain;
mod masked_pendulum;
mod point_mass;

pub use chain::{ChainConfig, ChainDiagnostic};
pub use masked_pendulum::MaskedPendulum;
pub use point_mass::{PointMassDoor, PointMassMemory};

/// One step of interaction.
#[derive(Clone, Debug)]
pub struct EnvStep {
    /// What the policy is allowed to see.
    pub obs: Vec<f64>,
    /// Full state view for privileged critics.
    pub privileged: Vec<f64>,
    /// Reward for the transition that produced this step (0 on reset).
    pub reward: f64,
    /// The new state is terminal: no further reward is reachable.
    pub absorbing: bool,
    /// The episode is over (absorbing or horizon exhausted).
    pub last: bool,
}

/// Common interface for every environment in the workspace.
pub trait Env {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn privileged_dim(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Per-step reward magnitude bound, when one exists by construction.
    fn reward_bound(&self) -> Option<f64>;

    /// Componentwise action bounds; actions are clipped to these before the
    /// dynamics run. Infinite bounds mean "unclipped".
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);

    /// Reference return levels `(low, high)` for normalized learning curves.
    fn return_range(&self) -> (f64, f64);

    /// Starts a new episode. Identical seeds give identical episodes for
    /// identical action sequences.
    fn reset(&mut self, seed: u64) -> EnvStep;

    /// Advances one step. Calling after `last` is a contract violation and
    /// panics.
    fn step(&mut self, action: &[f64]) -> EnvStep;

    /// Whether the finished episode counts as a success, for environments
    /// where "success" is meaningful (goal reaching).
    fn success(&self) -> Option<bool>;

    /// Short stable name used in metrics files.
    fn name(&self) -> &'static str;
}

pub(crate) fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

pub(crate) fn clip_action(action: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    action
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(a, (l, h))| if l.is_finite() || h.is_finite() { a.clamp(*l, *h) } else { *a })
        .collect()
}
