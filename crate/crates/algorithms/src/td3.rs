//! Twin-delayed deterministic actor-critic over extended state-action
//! tuples: the actor emits both an action and a next internal state, target
//! smoothing perturbs both channels, and the twin target critics take the
//! pessimistic minimum.

use crate::adam::Adam;
use crate::buffer::{gather_batch, BatchRows, RefreshMode, ReplayBuffer};
use crate::config::AlgoConfig;
use crate::critic::{copy_params, polyak_update, CriticInput, TwinQ};
use crate::workers::collect_deterministic_episode;
use diffcore::{DiffError, ParamId, ParameterStore, Result, Tape, Tensor};
use envs::Env;
use policies::{build_gaussian_policy, DeterministicStatefulPolicy, PolicyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct Td3Report {
    pub critic_loss: f64,
    /// `None` on iterations where the delayed policy update was skipped.
    pub actor_loss: Option<f64>,
}

pub struct Td3Rs {
    pub policy: DeterministicStatefulPolicy,
    pub target_policy: DeterministicStatefulPolicy,
    pub critics: TwinQ,
    pub targets: TwinQ,
    pub buffer: ReplayBuffer,
    pub cfg: AlgoConfig,
    pub rng: ChaCha8Rng,
    policy_ids: Vec<ParamId>,
    target_policy_ids: Vec<ParamId>,
    critic_ids: Vec<ParamId>,
    target_critic_ids: Vec<ParamId>,
    actor_opt: Adam,
    critic_opt: Adam,
    iterations: u64,
    episodes: u64,
    pub env_steps: usize,
}

impl Td3Rs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParameterStore,
        env: &dyn Env,
        policy_cfg: &PolicyConfig,
        critic_hidden: &[usize],
        critic_input: CriticInput,
        buffer_capacity: usize,
        refresh: RefreshMode,
        cfg: AlgoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if critic_input != CriticInput::Privileged {
            return Err(DiffError::InvalidValue {
                op: "Td3Rs",
                detail: "off-policy critics must consume the privileged channel".into(),
            });
        }
        let (lo, hi) = env.action_bounds();
        let nets = build_gaussian_policy(store, "pi", policy_cfg)?.nets;
        let policy =
            DeterministicStatefulPolicy::with_unit_state_bounds(nets, lo.clone(), hi.clone())?;
        let target_nets = build_gaussian_policy(store, "pi_t", policy_cfg)?.nets;
        let target_policy = DeterministicStatefulPolicy::with_unit_state_bounds(target_nets, lo, hi)?;

        let d_z = policy.d_z();
        let d_a = policy.action_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51ed_c0de);
        let critics = TwinQ::register(
            store,
            "q",
            critic_input,
            env.privileged_dim(),
            d_z,
            d_a,
            critic_hidden,
            &mut rng,
        )?;
        let targets = TwinQ::register(
            store,
            "q_t",
            critic_input,
            env.privileged_dim(),
            d_z,
            d_a,
            critic_hidden,
            &mut rng,
        )?;

        let policy_ids = policy.param_ids();
        let target_policy_ids = target_policy.param_ids();
        let critic_ids = critics.param_ids();
        let target_critic_ids = targets.param_ids();
        copy_params(store, &policy_ids, &target_policy_ids)?;
        copy_params(store, &critic_ids, &target_critic_ids)?;

        let actor_opt = Adam::new(policy_ids.clone(), cfg.learning_rate)
            .with_max_norm(cfg.max_grad_norm);
        let critic_opt = Adam::new(critic_ids.clone(), cfg.learning_rate)
            .with_max_norm(cfg.max_grad_norm);
        Ok(Self {
            policy,
            target_policy,
            critics,
            targets,
            buffer: ReplayBuffer::with_refresh(buffer_capacity, refresh, 64),
            cfg,
            rng,
            policy_ids,
            target_policy_ids,
            critic_ids,
            target_critic_ids,
            actor_opt,
            critic_opt,
            iterations: 0,
            episodes: 0,
            env_steps: 0,
        })
    }

    /// Rolls one exploratory episode into the buffer; returns its
    /// undiscounted return.
    pub fn collect(&mut self, env: &mut dyn Env, store: &ParameterStore) -> Result<f64> {
        let seed = self.cfg.seed.wrapping_mul(2_654_435_761).wrapping_add(self.episodes);
        let (ret, steps) = collect_deterministic_episode(
            env,
            &self.policy,
            store,
            self.cfg.expl_noise,
            seed,
            &mut self.rng,
            &mut self.buffer,
            self.episodes,
        )?;
        self.env_steps += steps;
        self.episodes += 1;
        Ok(ret)
    }

    /// Draws a minibatch, refreshing internal states through the current
    /// policy when the buffer is configured to.
    pub fn sample_batch(&mut self, store: &ParameterStore) -> Result<BatchRows> {
        let indices = self.buffer.sample_indices(&mut self.rng, self.cfg.batch_size);
        self.gather(store, &indices)
    }

    fn gather(&self, store: &ParameterStore, indices: &[usize]) -> Result<BatchRows> {
        if self.buffer.refresh_mode() == RefreshMode::OnSample {
            let policy = &self.policy;
            let mut step_fn = |obs: &[f64], z: &[f64], noise: &[f64]| -> Result<Vec<f64>> {
                let tape = Tape::no_grad();
                let (_, z_mean) =
                    policy.mean_exprs(&tape, store, &Tensor::vector(obs)?, &Tensor::vector(z)?)?;
                let raw: Vec<f64> =
                    z_mean.values().iter().zip(noise).map(|(m, n)| m + n).collect();
                Ok(policy.clip_pair(&vec![0.0; policy.action_dim()], &raw).1)
            };
            gather_batch(&self.buffer, indices, Some(&mut step_fn))
        } else {
            gather_batch(&self.buffer, indices, None)
        }
    }

    /// The smoothed twin-min TD targets for a batch: target-policy means on
    /// the next tuple, clipped Gaussian smoothing on both channels, both
    /// clipped to bounds, pessimistic min over the twin target critics, and
    /// zero bootstrap on absorbing transitions.
    pub fn compute_targets(&mut self, store: &ParameterStore, batch: &BatchRows) -> Result<Vec<f64>> {
        let b = batch.batch;
        let d_a = self.policy.action_dim();
        let d_z = self.policy.d_z();
        let tape = Tape::no_grad();
        let next_obs = Tensor::matrix(b, batch.next_obs.len() / b, &batch.next_obs)?;
        let z_next = Tensor::matrix(b, d_z, &batch.z_next)?;
        let (a_mean, z_mean) =
            self.target_policy.mean_exprs_rows(&tape, store, &next_obs, &z_next)?;

        let mut smooth = |mean: &[f64]| -> Vec<f64> {
            mean.iter()
                .map(|m| {
                    let eps: f64 = StandardNormal.sample(&mut self.rng);
                    let noise = (self.cfg.target_noise * eps)
                        .clamp(-self.cfg.target_noise_clip, self.cfg.target_noise_clip);
                    m + noise
                })
                .collect()
        };
        let a_raw = smooth(a_mean.values());
        let z_raw = smooth(z_mean.values());
        let mut a_smoothed = Vec::with_capacity(b * d_a);
        let mut z_smoothed = Vec::with_capacity(b * d_z);
        for i in 0..b {
            let (a, z) = self
                .policy
                .clip_pair(&a_raw[i * d_a..(i + 1) * d_a], &z_raw[i * d_z..(i + 1) * d_z]);
            a_smoothed.extend(a);
            z_smoothed.extend(z);
        }

        let next_priv = Tensor::matrix(b, batch.next_privileged.len() / b, &batch.next_privileged)?;
        let a_t = Tensor::matrix(b, d_a, &a_smoothed)?;
        let zn_t = Tensor::matrix(b, d_z, &z_smoothed)?;
        let q_min = self.targets.min_rows(&tape, store, &next_priv, &z_next, &a_t, &zn_t)?;

        Ok((0..b)
            .map(|i| {
                let v_next = if batch.absorbing[i] { 0.0 } else { q_min.values()[i] };
                batch.reward[i] + self.cfg.gamma * v_next
            })
            .collect())
    }

    /// One gradient iteration: critic regression every call, delayed policy
    /// update plus Polyak tracking every `policy_delay`-th call. Returns
    /// `None` while the buffer is underfull.
    pub fn update(&mut self, store: &mut ParameterStore) -> Result<Option<Td3Report>> {
        if self.buffer.len() <= self.cfg.s_min {
            return Ok(None);
        }
        let batch = self.sample_batch(store)?;
        let y = self.compute_targets(store, &batch)?;

        let b = batch.batch;
        let d_a = self.policy.action_dim();
        let d_z = self.policy.d_z();
        let obs = Tensor::matrix(b, batch.obs.len() / b, &batch.obs)?;
        let privileged = Tensor::matrix(b, batch.privileged.len() / b, &batch.privileged)?;
        let z = Tensor::matrix(b, d_z, &batch.z)?;
        let action = Tensor::matrix(b, d_a, &batch.action)?;
        let z_next = Tensor::matrix(b, d_z, &batch.z_next)?;
        let y_t = Tensor::vector(&y)?;

        let tape = Tape::new();
        let q1 = self.critics.q1.q_rows(&tape, store, &privileged, &z, &action, &z_next)?;
        let q2 = self.critics.q2.q_rows(&tape, store, &privileged, &z, &action, &z_next)?;
        let l1 = tape.mean(&tape.square(&tape.sub(&q1, &y_t)?)?)?;
        let l2 = tape.mean(&tape.square(&tape.sub(&q2, &y_t)?)?)?;
        let critic_loss = tape.add(&l1, &l2)?;
        let loss_val = critic_loss.item()?;
        let grads = tape.backward(&critic_loss, store)?;
        self.critic_opt.step(store, &grads)?;

        self.iterations += 1;
        let mut actor_loss = None;
        if self.iterations.is_multiple_of(self.cfg.policy_delay as u64) {
            let tape = Tape::new();
            let (a_mu, z_mu) = self.policy.mean_exprs_rows(&tape, store, &obs, &z)?;
            let q = self.critics.q1.q_rows(&tape, store, &privileged, &z, &a_mu, &z_mu)?;
            let loss = tape.neg(&tape.mean(&q)?)?;
            actor_loss = Some(loss.item()?);
            let grads = tape.backward(&loss, store)?;
            self.actor_opt.step(store, &grads)?;

            polyak_update(store, &self.policy_ids, &self.target_policy_ids, self.cfg.tau)?;
            polyak_update(store, &self.critic_ids, &self.target_critic_ids, self.cfg.tau)?;
        }
        Ok(Some(Td3Report { critic_loss: loss_val, actor_loss }))
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn policy_ids(&self) -> &[ParamId] {
        &self.policy_ids
    }

    pub fn target_policy_ids(&self) -> &[ParamId] {
        &self.target_policy_ids
    }

    pub fn critic_ids(&self) -> &[ParamId] {
        &self.critic_ids
    }

    pub fn target_critic_ids(&self) -> &[ParamId] {
        &self.target_critic_ids
    }
}
