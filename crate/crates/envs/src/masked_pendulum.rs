//! Torque-limited pendulum swing-up with the angular velocity masked out of
//! the observation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{clip_action, Env, EnvStep};

const GRAVITY: f64 = 9.81;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_TORQUE: f64 = 2.0;
const MAX_SPEED: f64 = 8.0;
const HORIZON: usize = 200;

/// Classic pendulum (m = l = 1, g = 9.81, |u| ≤ 2, dt = 0.05) whose
/// observation zeroes the velocity channel:
///
/// * observation `(cos ϑ, sin ϑ, 0)` — velocity hidden;
/// * privileged state `(cos ϑ, sin ϑ, ϑ̇)`.
///
/// Reward `−(ϑ² + 0.1·ϑ̇² + 0.001·u²)` with ϑ wrapped to `[−π, π)`. No
/// terminal states; horizon 200. A memoryless policy on the observation
/// cannot damp the pendulum reliably; one step of memory recovers the
/// velocity from consecutive angles.
pub struct MaskedPendulum {
    theta: f64,
    theta_dot: f64,
    t: usize,
    done: bool,
}

impl MaskedPendulum {
    pub fn new() -> Self {
        Self { theta: 0.0, theta_dot: 0.0, t: 0, done: true }
    }

    fn observe(&self) -> (Vec<f64>, Vec<f64>) {
        let (s, c) = self.theta.sin_cos();
        (vec![c, s, 0.0], vec![c, s, self.theta_dot])
    }
}

/// Wrap an angle to `[−π, π)`.
fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = (theta + std::f64::consts::PI) % two_pi;
    if a < 0.0 {
        a += two_pi;
    }
    a - std::f64::consts::PI
}

impl Default for MaskedPendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for MaskedPendulum {
    fn obs_dim(&self) -> usize {
        3
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn privileged_dim(&self) -> usize {
        3
    }
    fn horizon(&self) -> usize {
        HORIZON
    }
    fn reward_bound(&self) -> Option<f64> {
        let pi = std::f64::consts::PI;
        Some(pi * pi + 0.1 * MAX_SPEED * MAX_SPEED + 0.001 * MAX_TORQUE * MAX_TORQUE)
    }
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-MAX_TORQUE], vec![MAX_TORQUE])
    }
    fn return_range(&self) -> (f64, f64) {
        (-1600.0, -100.0)
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        self.theta_dot = rng.gen_range(-1.0..1.0);
        self.t = 0;
        self.done = false;
        let (obs, privileged) = self.observe();
        EnvStep { obs, privileged, reward: 0.0, absorbing: false, last: false }
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        assert!(!self.done, "step() after episode end");
        assert_eq!(action.len(), 1, "action dimension");
        let (lo, hi) = self.action_bounds();
        let u = clip_action(action, &lo, &hi)[0];

        // Reward is charged on the state the torque was applied in.
        let reward = -(self.theta * self.theta
            + 0.1 * self.theta_dot * self.theta_dot
            + 0.001 * u * u);

        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + DT * accel).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta = wrap_angle(self.theta + DT * self.theta_dot);
        self.t += 1;

        let last = self.t >= HORIZON;
        self.done = last;
        let (obs, privileged) = self.observe();
        EnvStep { obs, privileged, reward, absorbing: false, last }
    }

    fn success(&self) -> Option<bool> {
        None
    }

    fn name(&self) -> &'static str {
        "masked_pendulum"
    }
}
