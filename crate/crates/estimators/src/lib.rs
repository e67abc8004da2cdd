//! Monte-Carlo policy-gradient estimators for stateful policies.
//!
//! Two score-function estimators share one weighting scheme: the jointly
//! stochastic estimator differentiates per-step log-densities of
//! `(action, next internal state)` — all gradients are local, no
//! backpropagation through time — while the recurrent estimator unrolls the
//! exact state chain (optionally truncated to a window) and differentiates
//! action log-densities through it. Both weight each score term by the
//! trajectory's discounted return or a variance-reduced target.
//!
//! [`compute_gae`] implements the standard generalized-advantage recursion
//! used by the on-policy algorithms.

mod gae;
mod reinforce;
mod rollout;
mod trajectory;

pub use gae::{compute_gae, GaeOutput, GaeTerminal};
pub use reinforce::{reinforce_bptt, reinforce_s2pg, Baseline, ScoreWeighting};
pub use rollout::{rollout_recurrent, rollout_stochastic};
pub use trajectory::{discounted_return, ExtendedTrajectory, GradientSample, TrajStep};
