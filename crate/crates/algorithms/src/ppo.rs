//! Clipped-surrogate policy optimization in two gradient-flow flavours.
//!
//! [`PpoRs`] importance-weights the *joint* per-step density of
//! `(action, next internal state)`, so every ratio is local — no gradient
//! ever crosses a time step. [`PpoBptt`] keeps the classic recurrent form:
//! action-only ratios whose log-densities backpropagate through the state
//! recurrence, optionally truncated to a fixed window.
//!
//! Both share the advantage pipeline (value regression on GAE targets) and
//! the clipping construction. The clipped branch is assembled as
//! `r·m + c` with a strict-interior indicator `m` and the clamped remainder
//! `c` held constant, which gives the textbook objective for `ε > 0` and an
//! exactly zero policy gradient at `ε = 0` — a boundary clamp would leak
//! gradient at the boundary itself.

use crate::adam::Adam;
use crate::config::AlgoConfig;
use crate::critic::{CriticInput, VCritic};
use diffcore::{DiffError, ParameterStore, Result, Tape, Tensor};
use envs::Env;
use estimators::{compute_gae, rollout_recurrent, rollout_stochastic, ExtendedTrajectory, GaeTerminal};
use policies::{build_gaussian_policy, PolicyConfig, RecurrentDeterministicPolicy, StatefulGaussianPolicy};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Flattened on-policy batch: one row per transition, with the snapshot
/// log-densities and advantages baked in.
#[derive(Clone, Debug)]
pub struct PpoDataset {
    pub obs: Vec<f64>,
    /// Value-function input rows (observation or privileged, per config).
    pub vin: Vec<f64>,
    pub z: Vec<f64>,
    pub action: Vec<f64>,
    pub z_next: Vec<f64>,
    /// Joint log-density of each row under the collection snapshot.
    pub logq: Vec<f64>,
    pub adv: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub batch: usize,
    pub n_obs: usize,
    pub n_vin: usize,
    pub d_a: usize,
    pub d_z: usize,
}

impl PpoDataset {
    fn rows(&self, idx: &[usize]) -> Result<MiniBatch> {
        let take = |src: &[f64], w: usize| -> Vec<f64> {
            idx.iter().flat_map(|&i| src[i * w..(i + 1) * w].iter().copied()).collect()
        };
        Ok(MiniBatch {
            obs: Tensor::matrix(idx.len(), self.n_obs, &take(&self.obs, self.n_obs))?,
            vin: Tensor::matrix(idx.len(), self.n_vin, &take(&self.vin, self.n_vin))?,
            z: if self.d_z > 0 {
                Some(Tensor::matrix(idx.len(), self.d_z, &take(&self.z, self.d_z))?)
            } else {
                None
            },
            action: Tensor::matrix(idx.len(), self.d_a, &take(&self.action, self.d_a))?,
            z_next: if self.d_z > 0 {
                Some(Tensor::matrix(idx.len(), self.d_z, &take(&self.z_next, self.d_z))?)
            } else {
                None
            },
            logq: idx.iter().map(|&i| self.logq[i]).collect(),
            adv: idx.iter().map(|&i| self.adv[i]).collect(),
            targets: idx.iter().map(|&i| self.value_targets[i]).collect(),
        })
    }
}

struct MiniBatch {
    obs: Tensor,
    vin: Tensor,
    z: Option<Tensor>,
    action: Tensor,
    z_next: Option<Tensor>,
    logq: Vec<f64>,
    adv: Vec<f64>,
    targets: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct PpoReport {
    /// Mean clipped-surrogate loss over the applied policy minibatches.
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Fraction of ratios outside the strict clipping interior.
    pub clip_fraction: f64,
    pub skipped_minibatches: usize,
    /// Transitions in the batch the update consumed.
    pub steps: usize,
    /// Mean undiscounted return of the collected episodes.
    pub mean_return: f64,
}

/// Splits `0..n` (shuffled) into `k` near-equal contiguous chunks.
fn chunk_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    let k = k.min(n).max(1);
    (0..k)
        .map(|j| (j * n / k, (j + 1) * n / k))
        .filter(|(a, b)| b > a)
        .collect()
}

fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + 1e-8;
    for a in adv.iter_mut() {
        *a = (*a - mean) / denom;
    }
}

/// Builds the clipped surrogate `mean(min(r·A, clip(r)·A))` (negated into a
/// loss) on the caller's tape. Returns `None` — skip this minibatch — when
/// the snapshot log-densities are non-finite or the ratio construction
/// overflows. The second element is the fraction of ratios outside the
/// strict clipping interior.
pub fn clipped_surrogate(
    tape: &Tape,
    lp: &Tensor,
    logq: &[f64],
    adv: &[f64],
    eps: f64,
) -> Result<Option<(Tensor, f64)>> {
    if !logq.iter().all(|v| v.is_finite()) {
        return Ok(None);
    }
    let build = || -> Result<(Tensor, f64)> {
        let diff = tape.sub(lp, &Tensor::vector(logq)?)?;
        let ratio = tape.exp(&diff)?;
        let (lo, hi) = (1.0 - eps, 1.0 + eps);
        let mut mask = Vec::with_capacity(logq.len());
        let mut rest = Vec::with_capacity(logq.len());
        for &r in ratio.values() {
            let interior = lo < r && r < hi;
            mask.push(if interior { 1.0 } else { 0.0 });
            rest.push(if interior { 0.0 } else { r.clamp(lo, hi) });
        }
        let clip_fraction =
            mask.iter().filter(|&&m| m == 0.0).count() as f64 / mask.len() as f64;
        let clipped = tape.add(&tape.mul(&ratio, &Tensor::vector(&mask)?)?, &Tensor::vector(&rest)?)?;
        let adv_t = Tensor::vector(adv)?;
        let s1 = tape.mul(&ratio, &adv_t)?;
        let s2 = tape.mul(&clipped, &adv_t)?;
        let obj = tape.mean(&tape.minimum(&s1, &s2)?)?;
        Ok((tape.neg(&obj)?, clip_fraction))
    };
    match build() {
        Ok(pair) => Ok(Some(pair)),
        Err(DiffError::NonFinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// On-policy learner over the jointly stochastic policy: clipped ratios of
/// the joint `(action, next state)` density, value regression on GAE
/// targets, all gradients step-local.
pub struct PpoRs {
    pub policy: StatefulGaussianPolicy,
    pub value: VCritic,
    pub cfg: AlgoConfig,
    pub rng: ChaCha8Rng,
    policy_opt: Adam,
    value_opt: Adam,
    episodes: u64,
    pub env_steps: usize,
}

impl PpoRs {
    pub fn new(
        store: &mut ParameterStore,
        env: &dyn Env,
        policy_cfg: &PolicyConfig,
        value_hidden: &[usize],
        value_input: CriticInput,
        cfg: AlgoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let policy = build_gaussian_policy(store, "pi", policy_cfg)?;
        let n_vin = match value_input {
            CriticInput::Privileged => env.privileged_dim(),
            CriticInput::Observation => env.obs_dim(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9906_ab5e);
        let value =
            VCritic::register(store, "v", value_input, n_vin, policy.d_z(), value_hidden, &mut rng)?;
        let policy_opt =
            Adam::new(policy.param_ids(), cfg.learning_rate).with_max_norm(cfg.max_grad_norm);
        let value_opt =
            Adam::new(value.param_ids(), cfg.learning_rate).with_max_norm(cfg.max_grad_norm);
        Ok(Self { policy, value, cfg, rng, policy_opt, value_opt, episodes: 0, env_steps: 0 })
    }

    /// Rolls whole episodes until at least `min_steps` transitions are
    /// banked (always at least one episode).
    pub fn collect_batch(
        &mut self,
        env: &mut dyn Env,
        store: &ParameterStore,
        min_steps: usize,
    ) -> Result<Vec<ExtendedTrajectory>> {
        let mut trajs = Vec::new();
        let mut steps = 0;
        while steps < min_steps.max(1) {
            let seed = self.cfg.seed.wrapping_mul(2_654_435_761).wrapping_add(self.episodes);
            let traj =
                rollout_stochastic(env, &self.policy, store, self.cfg.gamma, seed, &mut self.rng)?;
            self.episodes += 1;
            steps += traj.len();
            trajs.push(traj);
        }
        self.env_steps += steps;
        Ok(trajs)
    }

    /// Values, GAE, flattening, and the snapshot log-densities — everything
    /// the epoch loop consumes.
    pub fn build_dataset(
        &self,
        store: &ParameterStore,
        trajs: &[ExtendedTrajectory],
    ) -> Result<PpoDataset> {
        let d_z = self.policy.d_z();
        let d_a = self.policy.action_dim();
        let n_obs = self.policy.obs_dim();
        let total: usize = trajs.iter().map(|t| t.len()).sum();
        if total == 0 {
            return Err(DiffError::InvalidValue {
                op: "ppo_dataset",
                detail: "empty batch".into(),
            });
        }
        let mut ds = PpoDataset {
            obs: Vec::with_capacity(total * n_obs),
            vin: Vec::new(),
            z: Vec::with_capacity(total * d_z),
            action: Vec::with_capacity(total * d_a),
            z_next: Vec::with_capacity(total * d_z),
            logq: Vec::with_capacity(total),
            adv: Vec::with_capacity(total),
            value_targets: Vec::with_capacity(total),
            batch: total,
            n_obs,
            n_vin: 0,
            d_a,
            d_z,
        };
        let tape = Tape::no_grad();
        for traj in trajs {
            traj.validate()?;
            let t_len = traj.len();
            let mut vin_rows = Vec::new();
            for step in &traj.steps {
                vin_rows.extend(self.value.input_mode().select(&step.obs, &step.privileged));
            }
            ds.n_vin = vin_rows.len() / t_len;
            let vin_t = Tensor::matrix(t_len, ds.n_vin, &vin_rows)?;
            let z_rows: Vec<f64> = traj.steps.iter().flat_map(|s| s.z.iter().copied()).collect();
            let z_t = if d_z > 0 { Some(Tensor::matrix(t_len, d_z, &z_rows)?) } else { None };
            let values = self.value.v_rows(&tape, store, &vin_t, z_t.as_ref())?.values().to_vec();

            let last = traj.steps.last().expect("validated nonempty");
            let terminal = if last.absorbing {
                GaeTerminal::Absorbing
            } else {
                let fin =
                    self.value.input_mode().select(&traj.final_obs, &traj.final_privileged);
                let v_next = self.value.v(&tape, store, fin, &last.z_next)?.item()?;
                GaeTerminal::Truncated { v_next }
            };
            let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
            let gae = compute_gae(&rewards, &values, terminal, self.cfg.gamma, self.cfg.lambda)?;

            ds.vin.extend(vin_rows);
            ds.z.extend(z_rows);
            for step in &traj.steps {
                ds.obs.extend(&step.obs);
                ds.action.extend(&step.action);
                ds.z_next.extend(&step.z_next);
            }
            ds.adv.extend(gae.advantages);
            ds.value_targets.extend(gae.value_targets);
        }
        // Snapshot joint log-densities of the whole batch in one pass.
        let obs_t = Tensor::matrix(total, n_obs, &ds.obs)?;
        let act_t = Tensor::matrix(total, d_a, &ds.action)?;
        let (z_t, zn_t) = if d_z > 0 {
            (Some(Tensor::matrix(total, d_z, &ds.z)?), Some(Tensor::matrix(total, d_z, &ds.z_next)?))
        } else {
            (None, None)
        };
        ds.logq = self
            .policy
            .log_prob_rows(&tape, store, &obs_t, z_t.as_ref(), &act_t, zn_t.as_ref())?
            .values()
            .to_vec();
        if self.cfg.normalize_advantages {
            normalize_advantages(&mut ds.adv);
        }
        Ok(ds)
    }

    /// Joint-density ratios of the entire dataset at the current parameters;
    /// equals 1 everywhere at the collection snapshot.
    pub fn snapshot_ratio_probe(
        &self,
        store: &ParameterStore,
        ds: &PpoDataset,
    ) -> Result<Vec<f64>> {
        let tape = Tape::no_grad();
        let mb = ds.rows(&(0..ds.batch).collect::<Vec<_>>())?;
        let lp = self.policy.log_prob_rows(
            &tape,
            store,
            &mb.obs,
            mb.z.as_ref(),
            &mb.action,
            mb.z_next.as_ref(),
        )?;
        Ok(lp.values().iter().zip(&mb.logq).map(|(l, q)| (l - q).exp()).collect())
    }

    /// The full epoch × minibatch pass over one collected batch.
    pub fn update(
        &mut self,
        store: &mut ParameterStore,
        trajs: &[ExtendedTrajectory],
    ) -> Result<PpoReport> {
        let ds = self.build_dataset(store, trajs)?;
        let mut report = self.update_from_dataset(store, &ds)?;
        report.mean_return = trajs
            .iter()
            .map(|t| t.steps.iter().map(|s| s.reward).sum::<f64>())
            .sum::<f64>()
            / trajs.len() as f64;
        Ok(report)
    }

    pub fn update_from_dataset(
        &mut self,
        store: &mut ParameterStore,
        ds: &PpoDataset,
    ) -> Result<PpoReport> {
        let mut indices: Vec<usize> = (0..ds.batch).collect();
        let mut report = PpoReport { steps: ds.batch, ..Default::default() };
        let (mut applied, mut value_batches) = (0usize, 0usize);
        for _ in 0..self.cfg.epochs {
            indices.shuffle(&mut self.rng);
            for (a, b) in chunk_bounds(ds.batch, self.cfg.minibatches) {
                let mb = ds.rows(&indices[a..b])?;

                let tape = Tape::new();
                let lp = self.policy.log_prob_rows(
                    &tape,
                    store,
                    &mb.obs,
                    mb.z.as_ref(),
                    &mb.action,
                    mb.z_next.as_ref(),
                )?;
                match clipped_surrogate(&tape, &lp, &mb.logq, &mb.adv, self.cfg.clip_eps)? {
                    Some((loss, clip_fraction)) => {
                        report.policy_loss += loss.item()?;
                        report.clip_fraction += clip_fraction;
                        applied += 1;
                        let grads = tape.backward(&loss, store)?;
                        self.policy_opt.step(store, &grads)?;
                    }
                    None => report.skipped_minibatches += 1,
                }

                let tape = Tape::new();
                let v = self.value.v_rows(&tape, store, &mb.vin, mb.z.as_ref())?;
                let err = tape.sub(&v, &Tensor::vector(&mb.targets)?)?;
                let vloss = tape.mean(&tape.square(&err)?)?;
                report.value_loss += vloss.item()?;
                value_batches += 1;
                let grads = tape.backward(&vloss, store)?;
                self.value_opt.step(store, &grads)?;
            }
        }
        if applied > 0 {
            report.policy_loss /= applied as f64;
            report.clip_fraction /= applied as f64;
        }
        if value_batches > 0 {
            report.value_loss /= value_batches as f64;
        }
        Ok(report)
    }
}

/// Per-trajectory view consumed by the recurrent learner: log-densities are
/// action-only and their gradients flow through the state recurrence.
#[derive(Clone, Debug)]
pub struct BpttTrajData {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub vin: Vec<f64>,
    pub z: Vec<f64>,
    pub logq: Vec<f64>,
    pub adv: Vec<f64>,
    pub value_targets: Vec<f64>,
}

/// Recurrent clipped-surrogate learner: stochastic actions over an exact
/// deterministic state chain, ratios of the action density only, gradients
/// backpropagated through up to `truncation` transitions (0 = the full
/// history).
pub struct PpoBptt {
    pub policy: RecurrentDeterministicPolicy,
    pub value: VCritic,
    pub cfg: AlgoConfig,
    pub truncation: usize,
    pub rng: ChaCha8Rng,
    policy_opt: Adam,
    value_opt: Adam,
    episodes: u64,
    pub env_steps: usize,
}

impl PpoBptt {
    pub fn new(
        store: &mut ParameterStore,
        env: &dyn Env,
        policy_cfg: &PolicyConfig,
        value_hidden: &[usize],
        value_input: CriticInput,
        truncation: usize,
        cfg: AlgoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if policy_cfg.d_z == 0 {
            return Err(DiffError::InvalidValue {
                op: "PpoBptt",
                detail: "the recurrent learner needs d_z ≥ 1".into(),
            });
        }
        let stochastic = build_gaussian_policy(store, "pi", policy_cfg)?;
        let policy = RecurrentDeterministicPolicy {
            nets: stochastic.nets,
            log_sigma_a: stochastic.log_sigma_a,
        };
        let n_vin = match value_input {
            CriticInput::Privileged => env.privileged_dim(),
            CriticInput::Observation => env.obs_dim(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9906_ab5e);
        let value =
            VCritic::register(store, "v", value_input, n_vin, policy.d_z(), value_hidden, &mut rng)?;
        let policy_opt =
            Adam::new(policy.param_ids(), cfg.learning_rate).with_max_norm(cfg.max_grad_norm);
        let value_opt =
            Adam::new(value.param_ids(), cfg.learning_rate).with_max_norm(cfg.max_grad_norm);
        Ok(Self {
            policy,
            value,
            cfg,
            truncation,
            rng,
            policy_opt,
            value_opt,
            episodes: 0,
            env_steps: 0,
        })
    }

    pub fn collect_batch(
        &mut self,
        env: &mut dyn Env,
        store: &ParameterStore,
        min_steps: usize,
    ) -> Result<Vec<ExtendedTrajectory>> {
        let mut trajs = Vec::new();
        let mut steps = 0;
        while steps < min_steps.max(1) {
            let seed = self.cfg.seed.wrapping_mul(2_654_435_761).wrapping_add(self.episodes);
            let traj =
                rollout_recurrent(env, &self.policy, store, self.cfg.gamma, seed, &mut self.rng)?;
            self.episodes += 1;
            steps += traj.len();
            trajs.push(traj);
        }
        self.env_steps += steps;
        Ok(trajs)
    }

    /// Values, GAE, and snapshot action log-densities per trajectory. The
    /// snapshot densities come from a windowless no-grad unroll — the state
    /// orbit is exact regardless of the gradient window, so these values
    /// match the update-time unroll bitwise.
    pub fn build_dataset(
        &self,
        store: &ParameterStore,
        trajs: &[ExtendedTrajectory],
    ) -> Result<Vec<BpttTrajData>> {
        let d_z = self.policy.d_z();
        let tape = Tape::no_grad();
        let mut out = Vec::with_capacity(trajs.len());
        for traj in trajs {
            traj.validate()?;
            let t_len = traj.len();
            let mut vin = Vec::new();
            for step in &traj.steps {
                vin.extend(self.value.input_mode().select(&step.obs, &step.privileged));
            }
            let n_vin = vin.len() / t_len;
            let vin_t = Tensor::matrix(t_len, n_vin, &vin)?;
            let z: Vec<f64> = traj.steps.iter().flat_map(|s| s.z.iter().copied()).collect();
            let z_t = Tensor::matrix(t_len, d_z, &z)?;
            let values = self.value.v_rows(&tape, store, &vin_t, Some(&z_t))?.values().to_vec();

            let last = traj.steps.last().expect("validated nonempty");
            let terminal = if last.absorbing {
                GaeTerminal::Absorbing
            } else {
                let fin =
                    self.value.input_mode().select(&traj.final_obs, &traj.final_privileged);
                let v_next = self.value.v(&tape, store, fin, &last.z_next)?.item()?;
                GaeTerminal::Truncated { v_next }
            };
            let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
            let gae = compute_gae(&rewards, &values, terminal, self.cfg.gamma, self.cfg.lambda)?;

            let observations: Vec<Vec<f64>> = traj.steps.iter().map(|s| s.obs.clone()).collect();
            let actions: Vec<Vec<f64>> = traj.steps.iter().map(|s| s.action.clone()).collect();
            let z0 = traj.steps[0].z.clone();
            let logq = self
                .policy
                .unroll_logps(&tape, store, &observations, &actions, &z0, 1)?
                .iter()
                .map(|t| t.item())
                .collect::<Result<Vec<f64>>>()?;
            out.push(BpttTrajData {
                observations,
                actions,
                vin,
                z,
                logq,
                adv: gae.advantages,
                value_targets: gae.value_targets,
            });
        }
        if self.cfg.normalize_advantages {
            let mut all: Vec<f64> = out.iter().flat_map(|t| t.adv.iter().copied()).collect();
            normalize_advantages(&mut all);
            let mut k = 0;
            for t in &mut out {
                for a in &mut t.adv {
                    *a = all[k];
                    k += 1;
                }
            }
        }
        Ok(out)
    }

    /// Action-density ratios at the current parameters, flattened across
    /// trajectories; equals 1 everywhere at the collection snapshot.
    pub fn snapshot_ratio_probe(
        &self,
        store: &ParameterStore,
        ds: &[BpttTrajData],
    ) -> Result<Vec<f64>> {
        let tape = Tape::no_grad();
        let mut out = Vec::new();
        for traj in ds {
            let z0 = &traj.z[..self.policy.d_z()];
            let lps = self.policy.unroll_logps(
                &tape,
                store,
                &traj.observations,
                &traj.actions,
                z0,
                1,
            )?;
            for (lp, q) in lps.iter().zip(&traj.logq) {
                out.push((lp.item()? - q).exp());
            }
        }
        Ok(out)
    }

    /// Epochs over shuffled whole-trajectory minibatches: each policy step
    /// unrolls its trajectories on one tape, clips the per-step action
    /// ratios, and averages over all steps in the minibatch.
    pub fn update(
        &mut self,
        store: &mut ParameterStore,
        trajs: &[ExtendedTrajectory],
    ) -> Result<PpoReport> {
        let ds = self.build_dataset(store, trajs)?;
        let mut report = PpoReport {
            steps: ds.iter().map(|t| t.actions.len()).sum(),
            ..Default::default()
        };
        report.mean_return = trajs
            .iter()
            .map(|t| t.steps.iter().map(|s| s.reward).sum::<f64>())
            .sum::<f64>()
            / trajs.len() as f64;
        let d_z = self.policy.d_z();
        let mut order: Vec<usize> = (0..ds.len()).collect();
        let (mut applied, mut value_batches) = (0usize, 0usize);
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for (lo, hi) in chunk_bounds(ds.len(), self.cfg.minibatches) {
                let group = &order[lo..hi];

                // Policy pass: per-step scalar log-densities through the
                // (windowed) recurrence, concatenated into one vector.
                let tape = Tape::new();
                let mut lp_all = Vec::new();
                let mut logq_all = Vec::new();
                let mut adv_all = Vec::new();
                for &ti in group {
                    let traj = &ds[ti];
                    let z0 = &traj.z[..d_z];
                    let lps = self.policy.unroll_logps(
                        &tape,
                        store,
                        &traj.observations,
                        &traj.actions,
                        z0,
                        self.truncation,
                    )?;
                    lp_all.extend(lps);
                    logq_all.extend_from_slice(&traj.logq);
                    adv_all.extend_from_slice(&traj.adv);
                }
                let mut lp_vec = lp_all[0].clone();
                for t in &lp_all[1..] {
                    lp_vec = tape.concat(&lp_vec, t, 0)?;
                }
                match clipped_surrogate(&tape, &lp_vec, &logq_all, &adv_all, self.cfg.clip_eps)? {
                    Some((loss, clip_fraction)) => {
                        report.policy_loss += loss.item()?;
                        report.clip_fraction += clip_fraction;
                        applied += 1;
                        let grads = tape.backward(&loss, store)?;
                        self.policy_opt.step(store, &grads)?;
                    }
                    None => report.skipped_minibatches += 1,
                }

                // Value pass over the same trajectories, flattened.
                let tape = Tape::new();
                let mut vin = Vec::new();
                let mut z = Vec::new();
                let mut targets = Vec::new();
                for &ti in group {
                    let traj = &ds[ti];
                    vin.extend_from_slice(&traj.vin);
                    z.extend_from_slice(&traj.z);
                    targets.extend_from_slice(&traj.value_targets);
                }
                let rows = targets.len();
                let vin_t = Tensor::matrix(rows, vin.len() / rows, &vin)?;
                let z_t = Tensor::matrix(rows, d_z, &z)?;
                let v = self.value.v_rows(&tape, store, &vin_t, Some(&z_t))?;
                let err = tape.sub(&v, &Tensor::vector(&targets)?)?;
                let vloss = tape.mean(&tape.square(&err)?)?;
                report.value_loss += vloss.item()?;
                value_batches += 1;
                let grads = tape.backward(&vloss, store)?;
                self.value_opt.step(store, &grads)?;
            }
        }
        if applied > 0 {
            report.policy_loss /= applied as f64;
            report.clip_fraction /= applied as f64;
        }
        if value_batches > 0 {
            report.value_loss /= value_batches as f64;
        }
        Ok(report)
    }
}
