//! Architecture descriptors: a small JSON document that records everything
//! needed to rebuild a policy around a parameter checkpoint — dimensions,
//! layer sizes, the state-transition cell kind, fixed gains, and how each
//! log-std is stored. Saved alongside the binary parameter file.

use std::path::Path;

use diffcore::{load_checkpoint, save_checkpoint, DiffError, ParameterStore, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mean_nets::{EtaNet, LinearDiagNets, MeanNets};
use crate::nets::{GruCell, Mlp};
use crate::stochastic::{LogSigma, StatefulGaussianPolicy};

/// How a log-std vector is realized.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SigmaSpec {
    /// Learnable parameter, registered at this initial value per dimension.
    Learned { init: f64 },
    /// Fixed constant vector (not a parameter).
    Fixed { log_values: Vec<f64> },
}

/// State-transition cell families.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EtaKind {
    Gru,
    Linear,
}

/// Serializable description of a policy architecture.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchDescriptor {
    MlpGru {
        obs_dim: usize,
        action_dim: usize,
        d_z: usize,
        hidden: Vec<usize>,
        /// Hidden-layer activation; informational (always tanh here).
        activation: String,
        eta: EtaKind,
        sigma_a: SigmaSpec,
        #[serde(skip_serializing_if = "Option::is_none")]
        sigma_z: Option<SigmaSpec>,
    },
    LinearDiag {
        k_gain: f64,
        z_gain: f64,
        sigma_a: SigmaSpec,
        sigma_z: SigmaSpec,
    },
}

/// Construction knobs for the default stochastic policy family.
#[derive(Clone, Debug)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub d_z: usize,
    pub hidden: Vec<usize>,
    pub eta: EtaKind,
    pub sigma_a: SigmaSpec,
    pub sigma_z: SigmaSpec,
    pub init_seed: u64,
}

impl PolicyConfig {
    /// Defaults: two tanh hidden layers of 32, gated recurrent cell of width
    /// `d_z = 8`, learnable log-stds at ln 0.5 (action) and ln 0.3 (state).
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            d_z: 8,
            hidden: vec![32, 32],
            eta: EtaKind::Gru,
            sigma_a: SigmaSpec::Learned { init: 0.5f64.ln() },
            sigma_z: SigmaSpec::Learned { init: 0.3f64.ln() },
            init_seed: 0,
        }
    }

    pub fn with_d_z(mut self, d_z: usize) -> Self {
        self.d_z = d_z;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn with_eta(mut self, eta: EtaKind) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_sigma_a(mut self, s: SigmaSpec) -> Self {
        self.sigma_a = s;
        self
    }

    pub fn with_sigma_z(mut self, s: SigmaSpec) -> Self {
        self.sigma_z = s;
        self
    }

    pub fn descriptor(&self) -> ArchDescriptor {
        ArchDescriptor::MlpGru {
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            d_z: self.d_z,
            hidden: self.hidden.clone(),
            activation: "tanh".into(),
            eta: self.eta,
            sigma_a: self.sigma_a.clone(),
            sigma_z: if self.d_z > 0 { Some(self.sigma_z.clone()) } else { None },
        }
    }
}

fn build_sigma(
    store: &mut ParameterStore,
    name: &str,
    dim: usize,
    spec: &SigmaSpec,
) -> Result<LogSigma> {
    match spec {
        SigmaSpec::Learned { init } => {
            Ok(LogSigma::Learned(store.register(name, &[dim], vec![*init; dim])?))
        }
        SigmaSpec::Fixed { log_values } => {
            if log_values.len() != dim {
                return Err(DiffError::ParameterStore(format!(
                    "fixed log-std for {name} has {} entries, expected {dim}",
                    log_values.len()
                )));
            }
            Ok(LogSigma::Fixed(log_values.clone()))
        }
    }
}

fn bind_sigma(store: &ParameterStore, name: &str, dim: usize, spec: &SigmaSpec) -> Result<LogSigma> {
    match spec {
        SigmaSpec::Learned { .. } => {
            let id = store
                .id_of(name)
                .ok_or_else(|| DiffError::ParameterStore(format!("missing parameter {name}")))?;
            if store.shape(id) != [dim] {
                return Err(DiffError::ParameterStore(format!("bad shape for {name}")));
            }
            Ok(LogSigma::Learned(id))
        }
        SigmaSpec::Fixed { log_values } => Ok(LogSigma::Fixed(log_values.clone())),
    }
}

fn register_nets(
    store: &mut ParameterStore,
    prefix: &str,
    cfg: &PolicyConfig,
) -> Result<MeanNets> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    match cfg.eta {
        EtaKind::Gru => MeanNets::register_mlp_gru(
            store, prefix, cfg.obs_dim, cfg.action_dim, cfg.d_z, &cfg.hidden, &mut rng,
        ),
        EtaKind::Linear => MeanNets::register_mlp_linear_eta(
            store, prefix, cfg.obs_dim, cfg.action_dim, cfg.d_z, &cfg.hidden, &mut rng,
        ),
    }
}

/// Builds a fresh stochastic stateful policy, registering all parameters
/// under `prefix` in `store`.
pub fn build_gaussian_policy(
    store: &mut ParameterStore,
    prefix: &str,
    cfg: &PolicyConfig,
) -> Result<StatefulGaussianPolicy> {
    let nets = register_nets(store, prefix, cfg)?;
    let log_sigma_a =
        build_sigma(store, &format!("{prefix}.log_sigma_a"), cfg.action_dim, &cfg.sigma_a)?;
    let log_sigma_z = if cfg.d_z > 0 {
        Some(build_sigma(store, &format!("{prefix}.log_sigma_z"), cfg.d_z, &cfg.sigma_z)?)
    } else {
        None
    };
    Ok(StatefulGaussianPolicy { nets, log_sigma_a, log_sigma_z })
}

/// Builds the scalar fixed-gain diagnostic policy: learnables start at zero,
/// log-stds are fixed constants so the learnable set is exactly the four
/// mean parameters.
pub fn build_linear_diag_policy(
    store: &mut ParameterStore,
    prefix: &str,
    k_gain: f64,
    z_gain: f64,
    log_sigma_a: f64,
    log_sigma_z: f64,
) -> Result<StatefulGaussianPolicy> {
    let nets = MeanNets::register_linear_diag(store, prefix, k_gain, z_gain)?;
    Ok(StatefulGaussianPolicy {
        nets,
        log_sigma_a: LogSigma::Fixed(vec![log_sigma_a]),
        log_sigma_z: Some(LogSigma::Fixed(vec![log_sigma_z])),
    })
}

/// Rebinds a policy to an existing store using its descriptor (inverse of
/// the build functions, used after loading a checkpoint).
pub fn bind_gaussian_policy(
    store: &ParameterStore,
    prefix: &str,
    arch: &ArchDescriptor,
) -> Result<StatefulGaussianPolicy> {
    match arch {
        ArchDescriptor::MlpGru { obs_dim, action_dim, d_z, hidden, eta, sigma_a, sigma_z, .. } => {
            let f = Mlp::bind(store, &format!("{prefix}.f"), obs_dim + d_z, hidden, *action_dim)?;
            let eta_net = if *d_z > 0 {
                Some(match eta {
                    EtaKind::Gru => {
                        EtaNet::Gru(GruCell::bind(store, &format!("{prefix}.eta"), *obs_dim, *d_z)?)
                    }
                    EtaKind::Linear => EtaNet::Linear(Mlp::bind(
                        store,
                        &format!("{prefix}.eta"),
                        obs_dim + d_z,
                        &[],
                        *d_z,
                    )?),
                })
            } else {
                None
            };
            let nets = MeanNets::MlpGru {
                f,
                eta: eta_net,
                obs_dim: *obs_dim,
                action_dim: *action_dim,
                d_z: *d_z,
            };
            let log_sigma_a =
                bind_sigma(store, &format!("{prefix}.log_sigma_a"), *action_dim, sigma_a)?;
            let log_sigma_z = match (*d_z, sigma_z) {
                (0, _) | (_, None) => None,
                (d, Some(spec)) => {
                    Some(bind_sigma(store, &format!("{prefix}.log_sigma_z"), d, spec)?)
                }
            };
            Ok(StatefulGaussianPolicy { nets, log_sigma_a, log_sigma_z })
        }
        ArchDescriptor::LinearDiag { k_gain, z_gain, sigma_a, sigma_z } => {
            let lookup = |name: &str| -> Result<diffcore::ParamId> {
                store.id_of(&format!("{prefix}.{name}")).ok_or_else(|| {
                    DiffError::ParameterStore(format!("missing parameter {prefix}.{name}"))
                })
            };
            let nets = MeanNets::LinearDiag(LinearDiagNets {
                w_f: lookup("w_f")?,
                b_f: lookup("b_f")?,
                w_eta: lookup("w_eta")?,
                b_eta: lookup("b_eta")?,
                k_gain: *k_gain,
                z_gain: *z_gain,
            });
            Ok(StatefulGaussianPolicy {
                nets,
                log_sigma_a: bind_sigma(store, &format!("{prefix}.log_sigma_a"), 1, sigma_a)?,
                log_sigma_z: Some(bind_sigma(store, &format!("{prefix}.log_sigma_z"), 1, sigma_z)?),
            })
        }
    }
}

/// Writes `{path_prefix}.ckpt` (binary parameters) and `{path_prefix}.json`
/// (architecture descriptor).
pub fn save_policy(
    path_prefix: &Path,
    store: &ParameterStore,
    arch: &ArchDescriptor,
) -> Result<()> {
    save_checkpoint(store, &path_prefix.with_extension("ckpt"))?;
    let json = serde_json::to_string_pretty(arch)
        .map_err(|e| DiffError::Checkpoint(format!("descriptor serialization: {e}")))?;
    std::fs::write(path_prefix.with_extension("json"), json)?;
    Ok(())
}

/// Loads a store + descriptor pair written by [`save_policy`] and rebinds
/// the policy under `prefix`.
pub fn load_policy(
    path_prefix: &Path,
    prefix: &str,
) -> Result<(ParameterStore, ArchDescriptor, StatefulGaussianPolicy)> {
    let store = load_checkpoint(&path_prefix.with_extension("ckpt"))?;
    let text = std::fs::read_to_string(path_prefix.with_extension("json"))?;
    let arch: ArchDescriptor = serde_json::from_str(&text)
        .map_err(|e| DiffError::Checkpoint(format!("descriptor parse: {e}")))?;
    let policy = bind_gaussian_policy(&store, prefix, &arch)?;
    Ok((store, arch, policy))
}
