//! Mechanics of the two-temperature soft learner: soft-target reduction to
//! hard backups, temperature-loss stationarity, critic-only Polyak, warm-up
//! gating, and entropy tracking on a short training run.

use algorithms::{AlgoConfig, BatchRows, CriticInput, RefreshMode, SacRs};
use diffcore::{ParameterStore, Tape, Tensor};
use envs::{ChainConfig, ChainDiagnostic, Env};
use policies::{PolicyConfig, SigmaSpec};

const LN_2PI_E: f64 = 2.837_877_066_409_345;

fn algo_cfg() -> AlgoConfig {
    AlgoConfig {
        batch_size: 16,
        s_min: 64,
        s_warm: 64,
        learning_rate: 1e-3,
        seed: 21,
        ..AlgoConfig::default()
    }
}

fn fixture(
    cfg: AlgoConfig,
    sigma_a: SigmaSpec,
    sigma_z: SigmaSpec,
) -> (ParameterStore, SacRs, ChainDiagnostic) {
    let env = ChainDiagnostic::new(ChainConfig { horizon: 6, ..ChainConfig::default() });
    let mut store = ParameterStore::new();
    let policy_cfg = PolicyConfig::new(env.obs_dim(), env.action_dim())
        .with_d_z(2)
        .with_hidden(vec![8])
        .with_sigma_a(sigma_a)
        .with_sigma_z(sigma_z)
        .with_seed(4);
    let algo = SacRs::new(
        &mut store,
        &env,
        &policy_cfg,
        &[16],
        CriticInput::Privileged,
        4096,
        RefreshMode::Off,
        cfg,
    )
    .unwrap();
    (store, algo, env)
}

fn crafted_batch(absorbing: bool) -> BatchRows {
    let b = 4;
    BatchRows {
        obs: vec![0.3, -0.8, 1.2, 0.0],
        privileged: vec![0.3, -0.8, 1.2, 0.0],
        z: vec![0.1, -0.2, 0.4, 0.0, -0.5, 0.3, 0.2, 0.2],
        action: vec![0.5, -0.1, 0.9, -0.4],
        z_next: vec![0.2, -0.1, 0.3, 0.1, -0.4, 0.2, 0.1, 0.3],
        reward: vec![-0.25, -1.5, 0.75, 0.0],
        next_obs: vec![0.8, -0.9, 2.1, -0.4],
        next_privileged: vec![0.8, -0.9, 2.1, -0.4],
        absorbing: vec![absorbing; b],
        batch: b,
    }
}

#[test]
fn absorbing_soft_targets_regress_to_the_raw_reward() {
    let (store, mut algo, _) = fixture(
        algo_cfg(),
        SigmaSpec::Learned { init: 0.5f64.ln() },
        SigmaSpec::Learned { init: 0.3f64.ln() },
    );
    let batch = crafted_batch(true);
    let y = algo.compute_soft_targets(&store, &batch).unwrap();
    assert_eq!(y, batch.reward, "absorbing rows must bootstrap to exactly r");
}

#[test]
fn tiny_entropy_reduces_soft_targets_to_hard_backups() {
    // Temperatures ~0 and point-mass policy noise: the soft target collapses
    // to r + γ·min(Q̄₁, Q̄₂) evaluated at the policy means.
    let cfg = AlgoConfig { alpha_a: 1e-12, alpha_z: 1e-12, ..algo_cfg() };
    let tiny = 1e-9f64.ln();
    let (store, mut algo, _) = fixture(
        cfg,
        SigmaSpec::Fixed { log_values: vec![tiny] },
        SigmaSpec::Fixed { log_values: vec![tiny; 2] },
    );
    let batch = crafted_batch(false);
    let y = algo.compute_soft_targets(&store, &batch).unwrap();

    let tape = Tape::no_grad();
    for i in 0..batch.batch {
        let next_obs = Tensor::vector(&batch.next_obs[i..i + 1]).unwrap();
        let z_next = &batch.z_next[i * 2..(i + 1) * 2];
        let a_mu = algo
            .policy
            .nets
            .action_mean(&tape, &store, &next_obs, Some(&Tensor::vector(z_next).unwrap()))
            .unwrap();
        let z_mu = algo
            .policy
            .nets
            .state_mean(&tape, &store, &next_obs, &Tensor::vector(z_next).unwrap())
            .unwrap();
        let np = &batch.next_privileged[i..i + 1];
        let q1 = algo
            .targets
            .q1
            .q(&tape, &store, np, z_next, a_mu.values(), z_mu.values())
            .unwrap()
            .item()
            .unwrap();
        let q2 = algo
            .targets
            .q2
            .q(&tape, &store, np, z_next, a_mu.values(), z_mu.values())
            .unwrap()
            .item()
            .unwrap();
        let hand = batch.reward[i] + algo.cfg.gamma * q1.min(q2);
        assert!(
            (y[i] - hand).abs() < 1e-6,
            "row {i}: soft target {} vs hard backup {hand}",
            y[i]
        );
    }
}

#[test]
fn the_temperature_loss_is_stationary_exactly_at_target_entropy() {
    let (store, algo, _) = fixture(
        algo_cfg(),
        SigmaSpec::Learned { init: 0.5f64.ln() },
        SigmaSpec::Learned { init: 0.3f64.ln() },
    );
    let (log_alpha_a, _) = algo.temperature_ids();
    let target = -1.0;

    // At batch-mean log-density = −H̄ both the loss and its gradient vanish.
    let tape = Tape::new();
    let loss = algo.temperature_loss(&tape, &store, log_alpha_a, -target, target).unwrap();
    assert_eq!(loss.item().unwrap(), 0.0);
    let grads = tape.backward(&loss, &store).unwrap();
    let g = grads.get(log_alpha_a).map(|g| g[0]).unwrap_or(0.0);
    assert_eq!(g, 0.0, "stationary point must have zero temperature gradient");

    // Away from the target the gradient is −(mean logπ + H̄)·α: entropy too
    // low (log-density above −H̄) pushes the temperature up, and vice versa.
    let alpha = algo.alpha_a(&store);
    for offset in [0.5, -0.8] {
        let tape = Tape::new();
        let loss =
            algo.temperature_loss(&tape, &store, log_alpha_a, -target + offset, target).unwrap();
        let grads = tape.backward(&loss, &store).unwrap();
        let g = grads.get(log_alpha_a).unwrap()[0];
        let expect = -offset * alpha;
        assert!(
            (g - expect).abs() < 1e-12,
            "offset {offset}: gradient {g} vs closed form {expect}"
        );
    }
}

#[test]
fn before_warmup_only_critics_and_their_targets_move() {
    let cfg = AlgoConfig { s_warm: usize::MAX, ..algo_cfg() };
    let (mut store, mut algo, mut env) = fixture(
        cfg,
        SigmaSpec::Learned { init: 0.5f64.ln() },
        SigmaSpec::Learned { init: 0.3f64.ln() },
    );
    while algo.buffer.len() <= algo.cfg.s_min {
        algo.collect(&mut env, &store).unwrap();
    }
    let policy_before: Vec<Vec<f64>> =
        algo.policy.param_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    let (alpha_a, alpha_z) = (algo.alpha_a(&store), algo.alpha_z(&store));
    let targets_before: Vec<Vec<f64>> =
        algo.target_critic_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    let critics_before: Vec<Vec<f64>> =
        algo.critic_ids().iter().map(|id| store.values(*id).to_vec()).collect();

    let report = algo.update(&mut store).unwrap().expect("buffer is warm");
    assert!(report.policy_loss.is_none(), "policy must wait for warm-up");

    let policy_after: Vec<Vec<f64>> =
        algo.policy.param_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    assert_eq!(policy_after, policy_before, "policy moved before warm-up");
    assert_eq!(algo.alpha_a(&store), alpha_a, "α^a moved before warm-up");
    assert_eq!(algo.alpha_z(&store), alpha_z, "α^z moved before warm-up");
    let critics_after: Vec<Vec<f64>> =
        algo.critic_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    assert_ne!(critics_after, critics_before, "critics should regress");
    let targets_after: Vec<Vec<f64>> =
        algo.target_critic_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    assert_ne!(targets_after, targets_before, "critic targets should track");

    // Polyak blend spot check on the first target parameter.
    let tau = algo.cfg.tau;
    for ((t_after, t_before), m_after) in targets_after[0]
        .iter()
        .zip(&targets_before[0])
        .zip(&critics_after[0])
    {
        let expect = tau * m_after + (1.0 - tau) * t_before;
        assert_eq!(t_after.to_bits(), expect.to_bits(), "convex blend must be exact");
    }
}

#[test]
fn after_warmup_policy_and_temperatures_move() {
    let cfg = AlgoConfig { s_warm: 0, ..algo_cfg() };
    let (mut store, mut algo, mut env) = fixture(
        cfg,
        SigmaSpec::Learned { init: 0.5f64.ln() },
        SigmaSpec::Learned { init: 0.3f64.ln() },
    );
    while algo.buffer.len() <= algo.cfg.s_min {
        algo.collect(&mut env, &store).unwrap();
    }
    let policy_before: Vec<Vec<f64>> =
        algo.policy.param_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    let (alpha_a, alpha_z) = (algo.alpha_a(&store), algo.alpha_z(&store));
    let report = algo.update(&mut store).unwrap().expect("buffer is warm");
    assert!(report.policy_loss.is_some());
    let policy_after: Vec<Vec<f64>> =
        algo.policy.param_ids().iter().map(|id| store.values(*id).to_vec()).collect();
    assert_ne!(policy_after, policy_before, "policy should step after warm-up");
    assert!(
        algo.alpha_a(&store) != alpha_a || algo.alpha_z(&store) != alpha_z,
        "at least one temperature should adapt"
    );
}

#[test]
fn wiring_rejects_observation_critics_and_stateless_policies() {
    let env = ChainDiagnostic::new(ChainConfig::default());
    let mut store = ParameterStore::new();
    let stateless = PolicyConfig::new(1, 1).with_d_z(0).with_hidden(vec![8]);
    assert!(SacRs::new(
        &mut store,
        &env,
        &stateless,
        &[8],
        CriticInput::Privileged,
        128,
        RefreshMode::Off,
        algo_cfg(),
    )
    .is_err());

    let mut store = ParameterStore::new();
    let stateful = PolicyConfig::new(1, 1).with_d_z(2).with_hidden(vec![8]);
    assert!(SacRs::new(
        &mut store,
        &env,
        &stateful,
        &[8],
        CriticInput::Observation,
        128,
        RefreshMode::Off,
        algo_cfg(),
    )
    .is_err());
}

#[test]
fn the_action_entropy_tracks_its_target() {
    // Short end-to-end run on the scalar chain: with both temperatures
    // adapting, the learned action noise should settle near the target
    // entropy H̄^a = −d_a = −1 nat.
    let cfg = AlgoConfig {
        batch_size: 64,
        s_min: 256,
        s_warm: 256,
        learning_rate: 3e-3,
        tau: 1e-2,
        seed: 77,
        ..AlgoConfig::default()
    };
    let env_cfg = ChainConfig { horizon: 5, state_clip: Some(1.5), ..ChainConfig::default() };
    let mut env = ChainDiagnostic::new(env_cfg);
    let mut store = ParameterStore::new();
    let policy_cfg = PolicyConfig::new(1, 1)
        .with_d_z(1)
        .with_hidden(vec![8])
        .with_sigma_a(SigmaSpec::Learned { init: 0.5f64.ln() })
        .with_sigma_z(SigmaSpec::Learned { init: 0.3f64.ln() })
        .with_seed(6);
    let mut algo = SacRs::new(
        &mut store,
        &env,
        &policy_cfg,
        &[16],
        CriticInput::Privileged,
        8192,
        RefreshMode::Off,
        cfg,
    )
    .unwrap();

    while algo.env_steps < algo.cfg.s_warm {
        algo.collect(&mut env, &store).unwrap();
    }
    for k in 0..4500 {
        if k % 10 == 0 {
            algo.collect(&mut env, &store).unwrap();
        }
        algo.update(&mut store).unwrap();
    }
    // Differential entropy of the learned 1-D Gaussian action head.
    let sigma_a = algo.policy.log_sigma_a.values(&store)[0].exp();
    let entropy = 0.5 * LN_2PI_E + sigma_a.ln();
    let target = algo.cfg.entropy_target_a(1);
    assert!(
        (entropy - target).abs() < 0.3,
        "action entropy {entropy} should settle near target {target} (σ_a = {sigma_a})"
    );
}
