//! Planar point-mass tasks with masked goal information.
//!
//! Shared dynamics: acceleration control `a ∈ [−1,1]²`, timestep `dt = 0.05`,
//! per-step velocity damping `0.95`, velocity and position clipped to
//! `[−1,1]` componentwise:
//!
//! ```text
//! vel ← clip(0.95 · vel + dt · a)      pos ← clip(pos + dt · vel)
//! ```
//!
//! The damped-velocity fixed point under full thrust is exactly speed 1, so
//! crossing the arena takes a few dozen steps.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{clip, clip_action, Env, EnvStep};

const DT: f64 = 0.05;
const DAMPING: f64 = 0.95;
/// Distance from the *initial* position within which hidden information
/// (goal or door layout) is visible.
const VISIBILITY_RADIUS: f64 = 0.25;
/// Goal capture radius.
const GOAL_RADIUS: f64 = 0.05;
/// Terminal bonus on reaching the goal.
const GOAL_BONUS: f64 = 10.0;

fn norm2(v: &[f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    norm2(&[a[0] - b[0], a[1] - b[1]])
}

/// Goal-reaching task where the goal coordinates disappear from the
/// observation once the agent leaves a small neighborhood of its start
/// position. Solving it requires writing the goal into memory while it is
/// visible, then navigating blind.
///
/// Observation: `(pos, vel, goal · 1[‖pos − pos₀‖ < 0.25])` (6 values).
/// Privileged state: `(pos, vel, goal)` — always unmasked.
/// Reward: `−‖pos − goal‖` per step, `+10` and absorbing inside the goal
/// radius. Horizon 200.
pub struct PointMassMemory {
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    start: [f64; 2],
    t: usize,
    done: bool,
    reached: bool,
}

impl PointMassMemory {
    pub fn new() -> Self {
        Self {
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            start: [0.0; 2],
            t: 0,
            done: true,
            reached: false,
        }
    }

    fn observe(&self) -> (Vec<f64>, Vec<f64>) {
        let visible = dist(&self.pos, &self.start) < VISIBILITY_RADIUS;
        let masked_goal = if visible { self.goal } else { [0.0, 0.0] };
        let obs = vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], masked_goal[0], masked_goal[1]];
        let privileged =
            vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.goal[0], self.goal[1]];
        (obs, privileged)
    }
}

impl Default for PointMassMemory {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointMassMemory {
    fn obs_dim(&self) -> usize {
        6
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn privileged_dim(&self) -> usize {
        6
    }
    fn horizon(&self) -> usize {
        200
    }
    fn reward_bound(&self) -> Option<f64> {
        // Max distance in the arena is 2√2; the goal bonus dominates it.
        Some(GOAL_BONUS)
    }
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; 2], vec![1.0; 2])
    }
    fn return_range(&self) -> (f64, f64) {
        (-300.0, 10.0)
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        self.vel = [0.0, 0.0];
        self.goal = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        self.start = self.pos;
        self.t = 0;
        self.done = false;
        self.reached = false;
        let (obs, privileged) = self.observe();
        EnvStep { obs, privileged, reward: 0.0, absorbing: false, last: false }
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        assert!(!self.done, "step() after episode end");
        assert_eq!(action.len(), 2, "action dimension");
        let (lo, hi) = self.action_bounds();
        let a = clip_action(action, &lo, &hi);
        for (i, &ai) in a.iter().enumerate() {
            self.vel[i] = clip(DAMPING * self.vel[i] + DT * ai, -1.0, 1.0);
            self.pos[i] = clip(self.pos[i] + DT * self.vel[i], -1.0, 1.0);
        }
        self.t += 1;

        let d = dist(&self.pos, &self.goal);
        let mut reward = -d;
        let mut absorbing = false;
        if d < GOAL_RADIUS {
            reward += GOAL_BONUS;
            absorbing = true;
            self.reached = true;
        }
        let last = absorbing || self.t >= self.horizon();
        self.done = last;
        let (obs, privileged) = self.observe();
        EnvStep { obs, privileged, reward, absorbing, last }
    }

    fn success(&self) -> Option<bool> {
        Some(self.reached)
    }

    fn name(&self) -> &'static str {
        "point_mass_memory"
    }
}

/// Navigation through a wall with two doors whose positions are only visible
/// near the start. The wall sits at `y = 0` across the arena; each door is a
/// gap of width 0.2. Touching the wall outside a door is terminal with
/// reward −10. The goal is fixed at `(0, 0.8)`; the agent starts below the
/// wall. Horizon 300.
///
/// Observation: `(pos, vel, doors · 1[‖pos − pos₀‖ < 0.25])` (6 values,
/// doors = the two gap centers). Privileged state: `(pos, vel, doors)`.
pub struct PointMassDoor {
    pos: [f64; 2],
    vel: [f64; 2],
    doors: [f64; 2],
    start: [f64; 2],
    t: usize,
    done: bool,
    reached: bool,
}

const DOOR_HALF_WIDTH: f64 = 0.1;
const WALL_PENALTY: f64 = -10.0;
const DOOR_GOAL: [f64; 2] = [0.0, 0.8];

impl PointMassDoor {
    pub fn new() -> Self {
        Self {
            pos: [0.0; 2],
            vel: [0.0; 2],
            doors: [0.0; 2],
            start: [0.0; 2],
            t: 0,
            done: true,
            reached: false,
        }
    }

    fn observe(&self) -> (Vec<f64>, Vec<f64>) {
        let visible = dist(&self.pos, &self.start) < VISIBILITY_RADIUS;
        let masked = if visible { self.doors } else { [0.0, 0.0] };
        let obs = vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], masked[0], masked[1]];
        let privileged =
            vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1], self.doors[0], self.doors[1]];
        (obs, privileged)
    }

    /// True if moving from `y0` to `y1` crosses the wall outside both doors.
    fn hits_wall(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
        if (y0 > 0.0) == (y1 > 0.0) && y1 != 0.0 {
            return false;
        }
        // Linear interpolation of the crossing x-coordinate.
        let frac = if (y1 - y0).abs() < 1e-12 { 0.0 } else { (0.0 - y0) / (y1 - y0) };
        let xc = x0 + frac.clamp(0.0, 1.0) * (x1 - x0);
        let through_door = self
            .doors
            .iter()
            .any(|c| (xc - c).abs() < DOOR_HALF_WIDTH);
        !through_door
    }
}

impl Default for PointMassDoor {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointMassDoor {
    fn obs_dim(&self) -> usize {
        6
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn privileged_dim(&self) -> usize {
        6
    }
    fn horizon(&self) -> usize {
        300
    }
    fn reward_bound(&self) -> Option<f64> {
        Some(GOAL_BONUS)
    }
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; 2], vec![1.0; 2])
    }
    fn return_range(&self) -> (f64, f64) {
        (-450.0, 10.0)
    }

    fn reset(&mut self, seed: u64) -> EnvStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Two disjoint door centers, one on each side of x = 0.
        self.doors = [rng.gen_range(-0.8..-0.2), rng.gen_range(0.2..0.8)];
        self.pos = [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..-0.3)];
        self.vel = [0.0, 0.0];
        self.start = self.pos;
        self.t = 0;
        self.done = false;
        self.reached = false;
        let (obs, privileged) = self.observe();
        EnvStep { obs, privileged, reward: 0.0, absorbing: false, last: false }
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        assert!(!self.done, "step() after episode end");
        assert_eq!(action.len(), 2, "action dimension");
        let (lo, hi) = self.action_bounds();
        let a = clip_action(action, &lo, &hi);
        let (x0, y0) = (self.pos[0], self.pos[1]);
        for (i, &ai) in a.iter().enumerate() {
            self.vel[i] = clip(DAMPING * self.vel[i] + DT * ai, -1.0, 1.0);
            self.pos[i] = clip(self.pos[i] + DT * self.vel[i], -1.0, 1.0);
        }
        self.t += 1;

        let mut reward;
        let mut absorbing = false;
        if self.hits_wall(x0, y0, self.pos[0], self.pos[1]) {
            reward = WALL_PENALTY;
            absorbing = true;
        } else {
            let d = dist(&self.pos, &DOOR_GOAL);
            reward = -d;
            if d < GOAL_RADIUS {
                reward += GOAL_BONUS;
                absorbing = true;
                self.reached = true;
            }
        }
        let last = absorbing || self.t >= self.horizon();
        self.done = last;
        let (obs, privileged) = self.observe();
        EnvStep { obs, privileged, reward, absorbing, last }
    }

    fn success(&self) -> Option<bool> {
        Some(self.reached)
    }

    fn name(&self) -> &'static str {
        "point_mass_door"
    }
}
