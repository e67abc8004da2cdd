//! Value and action-value networks with explicit input wiring, twin heads,
//! and exact Polyak target tracking.
//!
//! The wiring choice is load-bearing: an off-policy critic may see the full
//! environment state (`Privileged`) while the policy sees only the masked
//! observation channel, and nothing in the update loops may cross those
//! streams. Each critic therefore selects its own input out of a
//! `(obs, privileged)` pair instead of trusting callers to pass the right
//! one.

use diffcore::{DiffError, ParamId, ParameterStore, Result, Tape, Tensor};
use policies::Mlp;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which channel of the environment feed a critic consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticInput {
    /// Full environment state (off-policy algorithms, oracle baselines).
    Privileged,
    /// The policy's own masked observation (on-policy value functions).
    Observation,
}

impl CriticInput {
    pub fn select<'a>(&self, obs: &'a [f64], privileged: &'a [f64]) -> &'a [f64] {
        match self {
            CriticInput::Privileged => privileged,
            CriticInput::Observation => obs,
        }
    }
}

/// Action-value head `Q(input, z, a, z′) → ℝ`.
pub struct QCritic {
    mlp: Mlp,
    input_mode: CriticInput,
    input_dim: usize,
    d_z: usize,
    d_a: usize,
}

impl QCritic {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParameterStore,
        prefix: &str,
        input_mode: CriticInput,
        input_dim: usize,
        d_z: usize,
        d_a: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let in_dim = input_dim + d_z + d_a + d_z;
        let mlp = Mlp::register(store, prefix, in_dim, hidden, 1, rng)?;
        Ok(Self { mlp, input_mode, input_dim, d_z, d_a })
    }

    pub fn input_mode(&self) -> CriticInput {
        self.input_mode
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.mlp.param_ids()
    }

    /// Single-transition value (inputs are constants; gradients reach only
    /// the network parameters).
    pub fn q(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        input: &[f64],
        z: &[f64],
        a: &[f64],
        z_next: &[f64],
    ) -> Result<Tensor> {
        self.check_dims(input.len(), z.len(), a.len(), z_next.len())?;
        let joint: Vec<f64> =
            input.iter().chain(z).chain(a).chain(z_next).copied().collect();
        self.mlp.forward(tape, store, &Tensor::vector(&joint)?)
    }

    /// Row-batched value with differentiable action/state inputs: `input`
    /// `[B,n]` and `z` `[B,d_z]` are constants, while `a` and `z_next` may be
    /// tape expressions (the deterministic-actor loss differentiates through
    /// them).
    pub fn q_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        input: &Tensor,
        z: &Tensor,
        a: &Tensor,
        z_next: &Tensor,
    ) -> Result<Tensor> {
        let joint = tape.concat(
            &tape.concat(&tape.concat(input, z, 1)?, a, 1)?,
            z_next,
            1,
        )?;
        let out = self.mlp.forward_rows(tape, store, &joint)?;
        tape.sum_axis(&out, 1)
    }

    fn check_dims(&self, input: usize, z: usize, a: usize, z_next: usize) -> Result<()> {
        if input != self.input_dim || z != self.d_z || a != self.d_a || z_next != self.d_z {
            return Err(DiffError::DimensionMismatch {
                op: "QCritic",
                detail: format!(
                    "got ({input}, {z}, {a}, {z_next}), expected ({}, {}, {}, {})",
                    self.input_dim, self.d_z, self.d_a, self.d_z
                ),
            });
        }
        Ok(())
    }
}

/// Twin action-value heads sharing nothing but their input wiring.
pub struct TwinQ {
    pub q1: QCritic,
    pub q2: QCritic,
}

impl TwinQ {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParameterStore,
        prefix: &str,
        input_mode: CriticInput,
        input_dim: usize,
        d_z: usize,
        d_a: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let q1 = QCritic::register(
            store,
            &format!("{prefix}.q1"),
            input_mode,
            input_dim,
            d_z,
            d_a,
            hidden,
            rng,
        )?;
        let q2 = QCritic::register(
            store,
            &format!("{prefix}.q2"),
            input_mode,
            input_dim,
            d_z,
            d_a,
            hidden,
            rng,
        )?;
        Ok(Self { q1, q2 })
    }

    /// Elementwise minimum of the twin heads over a row batch.
    pub fn min_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        input: &Tensor,
        z: &Tensor,
        a: &Tensor,
        z_next: &Tensor,
    ) -> Result<Tensor> {
        let v1 = self.q1.q_rows(tape, store, input, z, a, z_next)?;
        let v2 = self.q2.q_rows(tape, store, input, z, a, z_next)?;
        tape.minimum(&v1, &v2)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.q1.param_ids();
        ids.extend(self.q2.param_ids());
        ids
    }

    pub fn input_mode(&self) -> CriticInput {
        self.q1.input_mode
    }
}

/// State-value head `V(input, z) → ℝ`. With `d_z = 0` it is a plain
/// observation-value function.
pub struct VCritic {
    mlp: Mlp,
    input_mode: CriticInput,
    d_z: usize,
}

impl VCritic {
    pub fn register(
        store: &mut ParameterStore,
        prefix: &str,
        input_mode: CriticInput,
        input_dim: usize,
        d_z: usize,
        hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mlp = Mlp::register(store, prefix, input_dim + d_z, hidden, 1, rng)?;
        Ok(Self { mlp, input_mode, d_z })
    }

    pub fn input_mode(&self) -> CriticInput {
        self.input_mode
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.mlp.param_ids()
    }

    pub fn v(&self, tape: &Tape, store: &ParameterStore, input: &[f64], z: &[f64]) -> Result<Tensor> {
        let joint: Vec<f64> = input.iter().chain(z).copied().collect();
        self.mlp.forward(tape, store, &Tensor::vector(&joint)?)
    }

    /// `[B,input]` (+ `[B,d_z]` when stateful) → `[B]`.
    pub fn v_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        input: &Tensor,
        z: Option<&Tensor>,
    ) -> Result<Tensor> {
        let joint = match z {
            Some(z) if self.d_z > 0 => tape.concat(input, z, 1)?,
            _ => input.clone(),
        };
        let out = self.mlp.forward_rows(tape, store, &joint)?;
        tape.sum_axis(&out, 1)
    }
}

/// Overwrites `to` with the values of `from`, pairwise. The two id lists
/// must line up structurally (same registration order and shapes).
pub fn copy_params(store: &mut ParameterStore, from: &[ParamId], to: &[ParamId]) -> Result<()> {
    if from.len() != to.len() {
        return Err(DiffError::ParameterStore(format!(
            "copy over mismatched id lists ({} vs {})",
            from.len(),
            to.len()
        )));
    }
    for (f, t) in from.iter().zip(to) {
        let values = store.values(*f).to_vec();
        store.set_values(*t, &values)?;
    }
    Ok(())
}

/// Exact Polyak tracking: `target ← τ·main + (1−τ)·target`, elementwise, in
/// this literal arithmetic order so tests can reproduce it bitwise.
pub fn polyak_update(
    store: &mut ParameterStore,
    main: &[ParamId],
    target: &[ParamId],
    tau: f64,
) -> Result<()> {
    if main.len() != target.len() {
        return Err(DiffError::ParameterStore(format!(
            "polyak over mismatched id lists ({} vs {})",
            main.len(),
            target.len()
        )));
    }
    for (m, t) in main.iter().zip(target) {
        let mv = store.values(*m).to_vec();
        let tv = store.values(*t).to_vec();
        let blended: Vec<f64> =
            mv.iter().zip(&tv).map(|(m, t)| tau * m + (1.0 - tau) * t).collect();
        store.set_values(*t, &blended)?;
    }
    Ok(())
}
