//! FIFO replay of extended transitions with optional internal-state refresh.
//!
//! Each transition stores the additive state noise that produced its sampled
//! `z′`, so a refresh can rerun the *current* policy's state recurrence over
//! the stored episode prefix and re-add the noise: under unchanged
//! parameters the refreshed states reproduce the stored ones bitwise, and
//! after a parameter change they track the new recurrence the way a full
//! re-unroll would.

use diffcore::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Replays one internal-state transition: `(obs, z, state_noise) → z_next`.
pub type StateStepFn<'a> = dyn FnMut(&[f64], &[f64], &[f64]) -> Result<Vec<f64>> + 'a;

/// One extended transition. `state_noise` is the additive term that turned
/// the state mean into the stored `z_next` at collection time.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub privileged: Vec<f64>,
    pub z: Vec<f64>,
    pub action: Vec<f64>,
    pub z_next: Vec<f64>,
    pub state_noise: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub next_privileged: Vec<f64>,
    pub absorbing: bool,
    pub episode_id: u64,
    pub step_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefreshMode {
    Off,
    OnSample,
}

/// Ring buffer over transitions, FIFO once full.
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    head: usize,
    refresh: RefreshMode,
    refresh_cap: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self::with_refresh(capacity, RefreshMode::Off, 64)
    }

    /// `refresh_cap` bounds how many stored transitions a refresh walks
    /// back through before trusting the stored internal state.
    pub fn with_refresh(capacity: usize, refresh: RefreshMode, refresh_cap: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { data: Vec::with_capacity(capacity), capacity, head: 0, refresh, refresh_cap }
    }

    pub fn refresh_mode(&self) -> RefreshMode {
        self.refresh
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, batch: usize) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.data.len())).collect()
    }

    /// Physical index of the stored predecessor of `idx` within the same
    /// episode, if it has not been evicted.
    fn predecessor(&self, idx: usize) -> Option<usize> {
        let t = &self.data[idx];
        if t.step_index == 0 {
            return None;
        }
        let prev = (idx + self.capacity - 1) % self.capacity;
        if prev >= self.data.len() {
            return None;
        }
        let p = &self.data[prev];
        (p.episode_id == t.episode_id && p.step_index + 1 == t.step_index).then_some(prev)
    }

    /// Recomputes `(z, z_next)` for the transition at `idx` by walking the
    /// stored episode prefix (bounded by the refresh cap and by eviction)
    /// and replaying `step_fn(obs, z, state_noise) → z_next` forward from
    /// the oldest reachable stored state.
    pub fn refreshed_pair(
        &self,
        idx: usize,
        step_fn: &mut StateStepFn<'_>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut chain = vec![idx];
        let mut cur = idx;
        while chain.len() < self.refresh_cap {
            match self.predecessor(cur) {
                Some(p) => {
                    chain.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        // Oldest reachable step seeds the walk with its stored z; when the
        // prefix is complete this is the episode's zero initial state.
        let mut z = self.data[*chain.last().unwrap()].z.clone();
        for &i in chain.iter().rev() {
            let t = &self.data[i];
            let z_next = step_fn(&t.obs, &z, &t.state_noise)?;
            if i == idx {
                return Ok((z, z_next));
            }
            z = z_next;
        }
        unreachable!("walk always ends at idx");
    }
}

/// A sampled minibatch flattened into row-major arrays ready for tensor
/// construction. `batch` rows each.
#[derive(Clone, Debug)]
pub struct BatchRows {
    pub obs: Vec<f64>,
    pub privileged: Vec<f64>,
    pub z: Vec<f64>,
    pub action: Vec<f64>,
    pub z_next: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub next_privileged: Vec<f64>,
    pub absorbing: Vec<bool>,
    pub batch: usize,
}

/// Flattens the indexed transitions into [`BatchRows`]. When a refresh step
/// function is supplied, the internal-state pair of every row is recomputed
/// through it instead of trusting the stored values.
pub fn gather_batch(
    buffer: &ReplayBuffer,
    indices: &[usize],
    mut refresh: Option<&mut StateStepFn<'_>>,
) -> Result<BatchRows> {
    let mut rows = BatchRows {
        obs: Vec::new(),
        privileged: Vec::new(),
        z: Vec::new(),
        action: Vec::new(),
        z_next: Vec::new(),
        reward: Vec::new(),
        next_obs: Vec::new(),
        next_privileged: Vec::new(),
        absorbing: Vec::new(),
        batch: indices.len(),
    };
    for &i in indices {
        let t = buffer.get(i);
        let (z, z_next) = match refresh.as_mut() {
            Some(step_fn) => buffer.refreshed_pair(i, *step_fn)?,
            None => (t.z.clone(), t.z_next.clone()),
        };
        rows.obs.extend_from_slice(&t.obs);
        rows.privileged.extend_from_slice(&t.privileged);
        rows.z.extend_from_slice(&z);
        rows.action.extend_from_slice(&t.action);
        rows.z_next.extend_from_slice(&z_next);
        rows.reward.push(t.reward);
        rows.next_obs.extend_from_slice(&t.next_obs);
        rows.next_privileged.extend_from_slice(&t.next_privileged);
        rows.absorbing.push(t.absorbing);
    }
    Ok(rows)
}
