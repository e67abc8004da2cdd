//! Shared hyperparameter bundle for the training loops.

use diffcore::{DiffError, Result};
use serde::{Deserialize, Serialize};

/// Hyperparameters for the actor-critic loops. One struct serves all three
/// algorithm families; fields irrelevant to a family are simply unused
/// (e.g. the clip radius by the off-policy loops).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    /// Discount γ ∈ (0,1).
    pub gamma: f64,
    /// Polyak coefficient τ for target-network tracking.
    pub tau: f64,
    /// Minibatch size for replay sampling and surrogate minibatches.
    pub batch_size: usize,
    /// Replay-buffer fill level below which updates are a no-op.
    pub s_min: usize,
    /// Environment steps of pure exploration before the first update.
    pub s_warm: usize,
    /// Delayed policy update period (policy stepped when `it % d == 0`).
    pub policy_delay: usize,
    /// Target-smoothing noise scale σ_ε.
    pub target_noise: f64,
    /// Target-smoothing noise clip δ_ε.
    pub target_noise_clip: f64,
    /// Exploration noise scale for the deterministic-actor loop.
    pub expl_noise: f64,
    /// Initial entropy temperature for the action channel.
    pub alpha_a: f64,
    /// Initial entropy temperature for the internal-state channel.
    pub alpha_z: f64,
    /// Target entropy for the action channel (`None` → −d_a).
    pub target_entropy_a: Option<f64>,
    /// Target entropy for the internal-state channel (`None` → −d_z).
    pub target_entropy_z: Option<f64>,
    /// Clipped-surrogate radius ε ≥ 0.
    pub clip_eps: f64,
    /// Surrogate passes over each on-policy dataset.
    pub epochs: usize,
    /// Minibatches per epoch.
    pub minibatches: usize,
    /// Advantage-estimation decay λ ∈ [0,1].
    pub lambda: f64,
    /// Adam step size for all networks.
    pub learning_rate: f64,
    /// Whether to standardize advantages per dataset.
    pub normalize_advantages: bool,
    /// Global gradient-norm ceiling (`None` → unclipped).
    pub max_grad_norm: Option<f64>,
    /// Total environment steps for a training run.
    pub total_steps: usize,
    /// Master seed.
    pub seed: u64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 5e-3,
            batch_size: 256,
            s_min: 1000,
            s_warm: 1000,
            policy_delay: 2,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            expl_noise: 0.1,
            alpha_a: 0.2,
            alpha_z: 0.2,
            target_entropy_a: None,
            target_entropy_z: None,
            clip_eps: 0.2,
            epochs: 10,
            minibatches: 4,
            lambda: 0.95,
            learning_rate: 3e-4,
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
            total_steps: 100_000,
            seed: 0,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| DiffError::InvalidValue { op: "AlgoConfig", detail };
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad(format!("gamma {} outside (0,1)", self.gamma)));
        }
        if self.clip_eps < 0.0 {
            return Err(bad(format!("clip radius {} negative", self.clip_eps)));
        }
        if self.policy_delay < 1 {
            return Err(bad("policy delay must be ≥ 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(bad(format!("tau {} outside (0,1]", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(bad(format!("lambda {} outside [0,1]", self.lambda)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.minibatches == 0 {
            return Err(bad("batch size, epochs and minibatches must be positive".into()));
        }
        Ok(())
    }

    pub fn entropy_target_a(&self, d_a: usize) -> f64 {
        self.target_entropy_a.unwrap_or(-(d_a as f64))
    }

    pub fn entropy_target_z(&self, d_z: usize) -> f64 {
        self.target_entropy_z.unwrap_or(-(d_z as f64))
    }
}
