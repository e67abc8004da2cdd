use diffcore::{DiffError, Result};

/// One recorded step of an extended trajectory: the policy's inputs, its
/// joint output `(action, z′)`, and the environment's response.
#[derive(Clone, Debug)]
pub struct TrajStep {
    pub obs: Vec<f64>,
    pub privileged: Vec<f64>,
    /// Internal state the policy acted from.
    pub z: Vec<f64>,
    pub action: Vec<f64>,
    /// Internal state handed to the next step.
    pub z_next: Vec<f64>,
    pub reward: f64,
    pub absorbing: bool,
    pub last: bool,
}

/// An episode recorded with its internal-state chain, plus the successor
/// observation of the final step for bootstrapped value targets.
#[derive(Clone, Debug)]
pub struct ExtendedTrajectory {
    pub steps: Vec<TrajStep>,
    pub gamma: f64,
    /// Observation after the last step (empty when the episode absorbed).
    pub final_obs: Vec<f64>,
    /// Privileged view after the last step (empty when absorbed).
    pub final_privileged: Vec<f64>,
}

impl ExtendedTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Structural invariants: nonempty, sane discount, the internal-state
    /// chain is continuous, `last` marks exactly the final step, and
    /// absorbing steps are final.
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| {
            Err(DiffError::InvalidValue { op: "trajectory", detail })
        };
        if self.steps.is_empty() {
            return fail("empty trajectory".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("discount {} outside (0, 1]", self.gamma));
        }
        for (t, pair) in self.steps.windows(2).enumerate() {
            if pair[1].z != pair[0].z_next {
                return fail(format!("internal-state chain broken at step {}", t + 1));
            }
            if pair[0].last || pair[0].absorbing {
                return fail(format!("step {t} ends the episode but has a successor"));
            }
        }
        let final_step = self.steps.last().expect("nonempty");
        if !final_step.last {
            return fail("final step not marked last".into());
        }
        Ok(())
    }

    /// `Σ_t γᵗ r_t`, stopping at an absorbing step.
    pub fn discounted_return(&self) -> f64 {
        let mut total = 0.0;
        let mut disc = 1.0;
        for step in &self.steps {
            total += disc * step.reward;
            if step.absorbing {
                break;
            }
            disc *= self.gamma;
        }
        total
    }

    /// Discounted reward-to-go from each step, keeping the *absolute*
    /// discount `γᵗ` so that the per-step targets decompose the full return:
    /// `tail[0]` equals [`Self::discounted_return`] and
    /// `tail[t] = γᵗ r_t + tail[t+1]`.
    pub fn reward_to_go(&self) -> Vec<f64> {
        let mut tails = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (t, step) in self.steps.iter().enumerate().rev() {
            acc += self.gamma.powi(t as i32) * step.reward;
            tails[t] = acc;
        }
        tails
    }
}

/// Free-function form of the trajectory return.
pub fn discounted_return(traj: &ExtendedTrajectory) -> f64 {
    traj.discounted_return()
}

/// A gradient estimate: flat over the parameter store it was computed
/// against, with the batch size that was averaged over.
#[derive(Clone, Debug)]
pub struct GradientSample {
    pub grad: Vec<f64>,
    pub batch_size: usize,
}

impl GradientSample {
    pub fn check_finite(&self) -> Result<()> {
        if self.grad.iter().all(|g| g.is_finite()) {
            Ok(())
        } else {
            Err(DiffError::InvalidValue {
                op: "gradient_sample",
                detail: "non-finite gradient entry".into(),
            })
        }
    }
}
