//! Maximum-entropy actor-critic over the joint (action, next-internal-state)
//! distribution: soft TD targets carry separate entropy bonuses for the two
//! channels, the policy loss trades both log-densities against a twin-min
//! critic at reparameterized samples, and each channel owns an adaptive
//! temperature driven toward its own target entropy.

use crate::adam::Adam;
use crate::buffer::{gather_batch, BatchRows, RefreshMode, ReplayBuffer};
use crate::config::AlgoConfig;
use crate::critic::{copy_params, polyak_update, CriticInput, TwinQ};
use crate::workers::collect_gaussian_episode;
use diffcore::{DiffError, ParamId, ParameterStore, Result, Tape, Tensor};
use envs::Env;
use policies::{build_gaussian_policy, PolicyConfig, StatefulGaussianPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct SacReport {
    pub critic_loss: f64,
    /// `None` before the warm-up sample count is reached.
    pub policy_loss: Option<f64>,
    pub alpha_a: f64,
    pub alpha_z: f64,
    /// Batch-mean action log-density at the policy-step samples.
    pub mean_logp_a: Option<f64>,
}

pub struct SacRs {
    pub policy: StatefulGaussianPolicy,
    pub critics: TwinQ,
    pub targets: TwinQ,
    pub buffer: ReplayBuffer,
    pub cfg: AlgoConfig,
    pub rng: ChaCha8Rng,
    log_alpha_a: ParamId,
    log_alpha_z: ParamId,
    critic_ids: Vec<ParamId>,
    target_critic_ids: Vec<ParamId>,
    policy_opt: Adam,
    critic_opt: Adam,
    temp_opt: Adam,
    episodes: u64,
    pub env_steps: usize,
}

impl SacRs {
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
                op: "SacRs",
                detail: "off-policy critics must consume the privileged channel".into(),
            });
        }
        if !(cfg.alpha_a > 0.0 && cfg.alpha_z > 0.0) {
            return Err(DiffError::InvalidValue {
                op: "SacRs",
                detail: "initial temperatures must be positive".into(),
            });
        }
        let policy = build_gaussian_policy(store, "pi", policy_cfg)?;
        let d_z = policy.d_z();
        let d_a = policy.action_dim();
        if d_z == 0 {
            return Err(DiffError::InvalidValue {
                op: "SacRs",
                detail: "the stateful loop needs d_z ≥ 1".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ac0_c0de);
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
        let critic_ids = critics.param_ids();
        let target_critic_ids = targets.param_ids();
        copy_params(store, &critic_ids, &target_critic_ids)?;

        let log_alpha_a = store.register("alpha.a", &[1], vec![cfg.alpha_a.ln()])?;
        let log_alpha_z = store.register("alpha.z", &[1], vec![cfg.alpha_z.ln()])?;

        let policy_opt = Adam::new(policy.param_ids(), cfg.learning_rate)
            .with_max_norm(cfg.max_grad_norm);
        let critic_opt =
            Adam::new(critic_ids.clone(), cfg.learning_rate).with_max_norm(cfg.max_grad_norm);
        let temp_opt = Adam::new(vec![log_alpha_a, log_alpha_z], cfg.learning_rate);
        Ok(Self {
            policy,
            critics,
            targets,
            buffer: ReplayBuffer::with_refresh(buffer_capacity, refresh, 64),
            cfg,
            rng,
            log_alpha_a,
            log_alpha_z,
            critic_ids,
            target_critic_ids,
            policy_opt,
            critic_opt,
            temp_opt,
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn alpha_a(&self, store: &ParameterStore) -> f64 {
        store.values(self.log_alpha_a)[0].exp()
    }

    pub fn alpha_z(&self, store: &ParameterStore) -> f64 {
        store.values(self.log_alpha_z)[0].exp()
    }

    pub fn collect(&mut self, env: &mut dyn Env, store: &ParameterStore) -> Result<f64> {
        let seed = self.cfg.seed.wrapping_mul(2_654_435_761).wrapping_add(self.episodes);
        let (ret, steps) = collect_gaussian_episode(
            env,
            &self.policy,
            store,
            seed,
            &mut self.rng,
            &mut self.buffer,
            self.episodes,
        )?;
        self.env_steps += steps;
        self.episodes += 1;
        Ok(ret)
    }

    pub fn sample_batch(&mut self, store: &ParameterStore) -> Result<BatchRows> {
        let indices = self.buffer.sample_indices(&mut self.rng, self.cfg.batch_size);
        if self.buffer.refresh_mode() == RefreshMode::OnSample {
            let policy = &self.policy;
            let mut step_fn = |obs: &[f64], z: &[f64], noise: &[f64]| -> Result<Vec<f64>> {
                policy.refresh_state(store, obs, z, noise)
            };
            gather_batch(&self.buffer, &indices, Some(&mut step_fn))
        } else {
            gather_batch(&self.buffer, &indices, None)
        }
    }

    /// Soft TD targets: fresh joint samples at the next tuple, twin-min
    /// target value, entropy bonuses `−α^a log π^a − α^z log π^z`, zero
    /// bootstrap on absorbing transitions.
    pub fn compute_soft_targets(
        &mut self,
        store: &ParameterStore,
        batch: &BatchRows,
    ) -> Result<Vec<f64>> {
        let b = batch.batch;
        let d_z = self.policy.d_z();
        let d_a = self.policy.action_dim();
        let n_obs = batch.next_obs.len() / b;
        let (alpha_a, alpha_z) = (self.alpha_a(store), self.alpha_z(store));

        let mut actions = Vec::with_capacity(b * d_a);
        let mut next_states = Vec::with_capacity(b * d_z);
        let mut entropy_bonus = Vec::with_capacity(b);
        let tape = Tape::no_grad();
        for i in 0..b {
            let obs = &batch.next_obs[i * n_obs..(i + 1) * n_obs];
            let z = &batch.z_next[i * d_z..(i + 1) * d_z];
            let draw = self.policy.sample(store, obs, z, &mut self.rng)?;
            let (lp_a, lp_z) =
                self.policy
                    .log_prob_parts(&tape, store, obs, z, &draw.action, &draw.next_z)?;
            let lp_a = lp_a.item()?;
            let lp_z = lp_z.expect("stateful").item()?;
            entropy_bonus.push(-alpha_a * lp_a - alpha_z * lp_z);
            actions.extend(draw.action);
            next_states.extend(draw.next_z);
        }

        let next_priv = Tensor::matrix(b, batch.next_privileged.len() / b, &batch.next_privileged)?;
        let z_next = Tensor::matrix(b, d_z, &batch.z_next)?;
        let a_t = Tensor::matrix(b, d_a, &actions)?;
        let zn_t = Tensor::matrix(b, d_z, &next_states)?;
        let q_min = self.targets.min_rows(&tape, store, &next_priv, &z_next, &a_t, &zn_t)?;

        Ok((0..b)
            .map(|i| {
                let v_next = if batch.absorbing[i] {
                    0.0
                } else {
                    q_min.values()[i] + entropy_bonus[i]
                };
                batch.reward[i] + self.cfg.gamma * v_next
            })
            .collect())
    }

    /// One gradient iteration: critic regression always; policy and
    /// temperature updates once the warm-up sample budget has been spent;
    /// Polyak tracking of the critics only. `None` while underfull.
    pub fn update(&mut self, store: &mut ParameterStore) -> Result<Option<SacReport>> {
        if self.buffer.len() <= self.cfg.s_min {
            return Ok(None);
        }
        let batch = self.sample_batch(store)?;
        let y = self.compute_soft_targets(store, &batch)?;

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
        let critic_loss_val = critic_loss.item()?;
        let grads = tape.backward(&critic_loss, store)?;
        self.critic_opt.step(store, &grads)?;

        let mut policy_loss = None;
        let mut mean_logp_a = None;
        if self.env_steps >= self.cfg.s_warm {
            let (alpha_a, alpha_z) = (self.alpha_a(store), self.alpha_z(store));
            let gauss = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            };
            let eps_a = gauss(b * d_a, &mut self.rng);
            let eps_z = gauss(b * d_z, &mut self.rng);
            let eps_a_t = Tensor::matrix(b, d_a, &eps_a)?;
            let eps_z_t = Tensor::matrix(b, d_z, &eps_z)?;

            let tape = Tape::new();
            let draw = self
                .policy
                .rsample_rows(&tape, store, &obs, Some(&z), &eps_a_t, Some(&eps_z_t))?;
            let lp_a = draw.logp_action;
            let lp_z = draw.logp_state.expect("stateful");
            let q_min = self.critics.min_rows(
                &tape,
                store,
                &privileged,
                &z,
                &draw.action,
                draw.next_z.as_ref().expect("stateful"),
            )?;
            let entropy_term =
                tape.add(&tape.scale(&lp_a, alpha_a)?, &tape.scale(&lp_z, alpha_z)?)?;
            let loss = tape.mean(&tape.sub(&entropy_term, &q_min)?)?;
            policy_loss = Some(loss.item()?);
            let lp_a_mean = lp_a.values().iter().sum::<f64>() / b as f64;
            let lp_z_mean = lp_z.values().iter().sum::<f64>() / b as f64;
            mean_logp_a = Some(lp_a_mean);
            let grads = tape.backward(&loss, store)?;
            self.policy_opt.step(store, &grads)?;

            // Temperatures chase their target entropies on the detached
            // batch-mean log-densities.
            let tape = Tape::new();
            let la = self.temperature_loss(&tape, store, self.log_alpha_a, lp_a_mean, self.cfg.entropy_target_a(d_a))?;
            let lz = self.temperature_loss(&tape, store, self.log_alpha_z, lp_z_mean, self.cfg.entropy_target_z(d_z))?;
            let loss = tape.add(&la, &lz)?;
            let grads = tape.backward(&loss, store)?;
            self.temp_opt.step(store, &grads)?;
        }

        polyak_update(store, &self.critic_ids, &self.target_critic_ids, self.cfg.tau)?;
        Ok(Some(SacReport {
            critic_loss: critic_loss_val,
            policy_loss,
            alpha_a: self.alpha_a(store),
            alpha_z: self.alpha_z(store),
            mean_logp_a,
        }))
    }

    /// `L(α) = −α · (mean log π + H̄)`: stationary exactly when the
    /// batch-mean log-density sits at the negative target entropy.
    pub fn temperature_loss(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        log_alpha: ParamId,
        mean_logp: f64,
        target_entropy: f64,
    ) -> Result<Tensor> {
        let alpha = tape.exp(&tape.param(store, log_alpha))?;
        tape.scale(&alpha, -(mean_logp + target_entropy))
    }

    pub fn critic_ids(&self) -> &[ParamId] {
        &self.critic_ids
    }

    pub fn target_critic_ids(&self) -> &[ParamId] {
        &self.target_critic_ids
    }

    pub fn temperature_ids(&self) -> (ParamId, ParamId) {
        (self.log_alpha_a, self.log_alpha_z)
    }
}
