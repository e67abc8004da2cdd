//! Policy representations for stateful reinforcement learning.
//!
//! Three policy classes share one pair of mean networks `(f, η)` — action
//! mean and next-internal-state mean over `(observation, z)`:
//!
//! * [`StatefulGaussianPolicy`] — joint diagonal Gaussian over `(a, z′)`;
//!   the next internal state is *sampled*, so log-density gradients are
//!   local per step and no backpropagation through time is needed.
//! * [`RecurrentDeterministicPolicy`] — Gaussian action head over an exact
//!   recurrence `z_{t+1} = η(obs_t, z_t)`; gradients chain through the
//!   recurrence, optionally truncated to a window.
//! * [`DeterministicStatefulPolicy`] — both heads deterministic, clipped to
//!   bounds, for value-gradient training.
//!
//! The internal state always starts at the zero vector. Policies are
//! immutable snapshots: parameters live in a [`diffcore::ParameterStore`],
//! structs hold ids, and updates produce a new store — snapshots can be
//! handed to rollout threads freely.
//!
//! [`estimate_constants`] measures the Jacobian-norm constants `F, H, K, Z`
//! (and per-row variants) that the analytic variance bounds consume.

pub mod arch;
pub mod constants;
pub mod deterministic;
pub mod mean_nets;
pub mod nets;
pub mod recurrent;
pub mod stochastic;

pub use arch::{
    bind_gaussian_policy, build_gaussian_policy, build_linear_diag_policy, load_policy,
    save_policy, ArchDescriptor, EtaKind, PolicyConfig, SigmaSpec,
};
pub use constants::{estimate_constants, JacobianConstants};
pub use deterministic::DeterministicStatefulPolicy;
pub use mean_nets::{EtaNet, LinearDiagNets, MeanNets};
pub use nets::{GruCell, Mlp};
pub use recurrent::{RecurrentDeterministicPolicy, RecurrentStep};
pub use stochastic::{LogSigma, PolicySample, ReparamRows, ReparamSample, StatefulGaussianPolicy};
