use diffcore::{DiffError, Result};

/// How the final step of the segment ends.
#[derive(Clone, Copy, Debug)]
pub enum GaeTerminal {
    /// Genuine terminal state — no value beyond the last reward.
    Absorbing,
    /// Cut off by the horizon; bootstrap with the successor state's value.
    Truncated { v_next: f64 },
}

#[derive(Clone, Debug)]
pub struct GaeOutput {
    pub advantages: Vec<f64>,
    /// Regression targets for the value function: `A + v`.
    pub value_targets: Vec<f64>,
}

/// Generalized advantage estimation by the standard reverse recursion:
/// the final step takes `A = r − v` (absorbing) or `A = r + γ·v_next − v`
/// (truncated); every earlier step takes
/// `A = r + γ·v[k+1] − v[k] + γ·λ·A[k+1]`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminal: GaeTerminal,
    gamma: f64,
    lambda: f64,
) -> Result<GaeOutput> {
    if rewards.is_empty() || rewards.len() != values.len() {
        return Err(DiffError::DimensionMismatch {
            op: "compute_gae",
            detail: format!("{} rewards vs {} values", rewards.len(), values.len()),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DiffError::InvalidValue {
            op: "compute_gae",
            detail: format!("lambda {lambda} outside [0, 1]"),
        });
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    advantages[n - 1] = match terminal {
        GaeTerminal::Absorbing => rewards[n - 1] - values[n - 1],
        GaeTerminal::Truncated { v_next } => rewards[n - 1] + gamma * v_next - values[n - 1],
    };
    for k in (0..n - 1).rev() {
        advantages[k] = rewards[k] + gamma * values[k + 1] - values[k]
            + gamma * lambda * advantages[k + 1];
    }
    let value_targets = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(GaeOutput { advantages, value_targets })
}
