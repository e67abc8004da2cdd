//! Actor-critic learners for jointly stochastic stateful policies.
//!
//! Three algorithm families share one structural idea: the policy emits a
//! *joint* distribution over `(action, next internal state)`, so policy
//! gradients never backpropagate through time — every update term is local
//! to its transition. The deterministic-critic learner ([`Td3Rs`]) and the
//! maximum-entropy learner ([`SacRs`]) work off-policy from a replay buffer
//! whose stored internal states can be refreshed as the policy drifts; the
//! clipped-surrogate learner ([`PpoRs`]) works on-policy from whole
//! episodes. [`PpoBptt`] is the recurrent control: identical surrogate,
//! but gradients flow through the state recurrence.
//!
//! Critics may read a privileged environment view (asymmetric training);
//! policies never do.

mod adam;
mod buffer;
mod config;
mod critic;
mod ppo;
mod sac;
mod td3;
mod workers;

pub use adam::Adam;
pub use buffer::{gather_batch, BatchRows, RefreshMode, ReplayBuffer, StateStepFn, Transition};
pub use config::AlgoConfig;
pub use critic::{copy_params, polyak_update, CriticInput, QCritic, TwinQ, VCritic};
pub use ppo::{clipped_surrogate, BpttTrajData, PpoBptt, PpoDataset, PpoReport, PpoRs};
pub use sac::{SacReport, SacRs};
pub use td3::{Td3Report, Td3Rs};
pub use workers::{
    collect_deterministic_episode, collect_gaussian_episode, evaluate_deterministic_policy,
    evaluate_mean_policy, evaluate_recurrent_policy, summarize, trajectory_channel, EvalReport,
};
