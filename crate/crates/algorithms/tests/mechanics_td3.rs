//! Update-rule mechanics of the deterministic twin-critic learner: exact
//! target formulas, delayed policy steps, Polyak tracking, channel-additive
//! actor gradients, and the refresh contract through the sampling path.

use algorithms::{polyak_update, AlgoConfig, BatchRows, CriticInput, RefreshMode, Td3Rs};
use diffcore::{ParameterStore, Tape, Tensor};
use envs::{ChainConfig, ChainDiagnostic, Env};
use policies::PolicyConfig;

const D_Z: usize = 2;

fn algo_cfg() -> AlgoConfig {
    AlgoConfig {
        batch_size: 16,
        s_min: 64,
        s_warm: 64,
        learning_rate: 1e-3,
        expl_noise: 0.2,
        seed: 9,
        ..AlgoConfig::default()
    }
}

fn fixture(cfg: AlgoConfig, refresh: RefreshMode) -> (ParameterStore, Td3Rs, ChainDiagnostic) {
    let env = ChainDiagnostic::new(ChainConfig { horizon: 6, ..ChainConfig::default() });
    let mut store = ParameterStore::new();
    let policy_cfg = PolicyConfig::new(env.obs_dim(), env.action_dim())
        .with_d_z(D_Z)
        .with_hidden(vec![8])
        .with_seed(3);
    let algo = Td3Rs::new(
        &mut store,
        &env,
        &policy_cfg,
        &[16],
        CriticInput::Privileged,
        4096,
        refresh,
        cfg,
    )
    .unwrap();
    (store, algo, env)
}

/// Rows with hand-picked, in-range values: obs/priv 1-dim, z 2-dim, a 1-dim.
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
fn absorbing_transitions_regress_to_the_raw_reward() {
    let (store, mut algo, _) = fixture(algo_cfg(), RefreshMode::Off);
    let batch = crafted_batch(true);
    let y = algo.compute_targets(&store, &batch).unwrap();
    assert_eq!(y, batch.reward, "absorbing rows must bootstrap to exactly r");
}

#[test]
fn noise_free_targets_follow_the_twin_min_formula() {
    let cfg = AlgoConfig { target_noise: 0.0, ..algo_cfg() };
    let (store, mut algo, _) = fixture(cfg, RefreshMode::Off);
    let batch = crafted_batch(false);
    let y = algo.compute_targets(&store, &batch).unwrap();

    let tape = Tape::no_grad();
    for i in 0..batch.batch {
        let next_obs = Tensor::vector(&batch.next_obs[i..i + 1]).unwrap();
        let z_next = &batch.z_next[i * D_Z..(i + 1) * D_Z];
        let (a_m, z_m) = algo
            .target_policy
            .mean_exprs(&tape, &store, &next_obs, &Tensor::vector(z_next).unwrap())
            .unwrap();
        let (a_bar, z_bar) = algo.policy.clip_pair(a_m.values(), z_m.values());
        let np = &batch.next_privileged[i..i + 1];
        let q1 = algo.targets.q1.q(&tape, &store, np, z_next, &a_bar, &z_bar).unwrap().item().unwrap();
        let q2 = algo.targets.q2.q(&tape, &store, np, z_next, &a_bar, &z_bar).unwrap().item().unwrap();
        let hand = batch.reward[i] + algo.cfg.gamma * q1.min(q2);
        assert!(
            (y[i] - hand).abs() < 1e-9,
            "row {i}: target {} vs hand formula {hand}",
            y[i]
        );
    }
}

#[test]
fn the_policy_moves_only_on_delayed_iterations() {
    let (mut store, mut algo, mut env) = fixture(algo_cfg(), RefreshMode::Off);
    while algo.buffer.len() <= algo.cfg.s_min {
        algo.collect(&mut env, &store).unwrap();
    }
    let snap = |store: &ParameterStore, ids: &[diffcore::ParamId]| -> Vec<Vec<f64>> {
        ids.iter().map(|id| store.values(*id).to_vec()).collect()
    };
    let policy_before = snap(&store, algo.policy_ids());
    let targets_before = snap(&store, algo.target_critic_ids());

    let first = algo.update(&mut store).unwrap().expect("buffer is warm");
    assert!(first.actor_loss.is_none(), "iteration 1 must skip the policy");
    assert_eq!(snap(&store, algo.policy_ids()), policy_before, "policy moved off-schedule");
    assert_eq!(
        snap(&store, algo.target_critic_ids()),
        targets_before,
        "target tracking must wait for the delayed step"
    );

    let second = algo.update(&mut store).unwrap().expect("buffer is warm");
    assert!(second.actor_loss.is_some(), "iteration 2 is the delayed step");
    assert_ne!(snap(&store, algo.policy_ids()), policy_before, "policy should move now");
    assert_ne!(snap(&store, algo.target_critic_ids()), targets_before);
    assert_eq!(algo.iterations(), 2);
}

#[test]
fn underfull_buffers_do_not_update() {
    let (mut store, mut algo, mut env) = fixture(algo_cfg(), RefreshMode::Off);
    algo.collect(&mut env, &store).unwrap();
    assert!(algo.buffer.len() <= algo.cfg.s_min);
    let before: Vec<f64> = store.flatten();
    assert!(algo.update(&mut store).unwrap().is_none());
    assert_eq!(store.flatten(), before, "an underfull update must be a strict no-op");
}

#[test]
fn polyak_tracking_is_the_exact_convex_blend() {
    let mut store = ParameterStore::new();
    let m = store.register("m", &[3], vec![1.0, -2.0, 0.5]).unwrap();
    let t = store.register("t", &[3], vec![0.25, 0.25, 0.25]).unwrap();
    let tau = 5e-3;
    let expect: Vec<f64> = [1.0f64, -2.0, 0.5]
        .iter()
        .zip([0.25f64, 0.25, 0.25].iter())
        .map(|(m, t)| tau * m + (1.0 - tau) * t)
        .collect();
    polyak_update(&mut store, &[m], &[t], tau).unwrap();
    for (got, want) in store.values(t).iter().zip(&expect) {
        assert_eq!(got.to_bits(), want.to_bits(), "blend must be bitwise exact");
    }
    polyak_update(&mut store, &[m], &[t], 1.0).unwrap();
    assert_eq!(store.values(t), store.values(m), "τ = 1 must copy the source");
}

#[test]
fn actor_gradients_add_across_the_two_channels() {
    let (store, mut algo, mut env) = fixture(algo_cfg(), RefreshMode::Off);
    for _ in 0..4 {
        algo.collect(&mut env, &store).unwrap();
    }
    let batch = algo.sample_batch(&store).unwrap();
    let b = batch.batch;
    let obs = Tensor::matrix(b, 1, &batch.obs).unwrap();
    let privileged = Tensor::matrix(b, 1, &batch.privileged).unwrap();
    let z = Tensor::matrix(b, D_Z, &batch.z).unwrap();

    let grad_with = |detach_a: bool, detach_z: bool| -> Vec<f64> {
        let tape = Tape::new();
        let (a_mu, z_mu) = algo.policy.mean_exprs_rows(&tape, &store, &obs, &z).unwrap();
        let a_in = if detach_a {
            Tensor::matrix(b, 1, a_mu.values()).unwrap()
        } else {
            a_mu
        };
        let z_in = if detach_z {
            Tensor::matrix(b, D_Z, z_mu.values()).unwrap()
        } else {
            z_mu
        };
        let q = algo.critics.q1.q_rows(&tape, &store, &privileged, &z, &a_in, &z_in).unwrap();
        let loss = tape.neg(&tape.mean(&q).unwrap()).unwrap();
        let grads = tape.backward(&loss, &store).unwrap();
        algo.policy_ids()
            .iter()
            .flat_map(|id| match grads.get(*id) {
                Some(g) => g.to_vec(),
                None => vec![0.0; store.values(*id).len()],
            })
            .collect()
    };

    let full = grad_with(false, false);
    let action_only = grad_with(false, true);
    let state_only = grad_with(true, false);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm(&action_only) > 0.0 && norm(&state_only) > 0.0, "both channels carry gradient");
    for i in 0..full.len() {
        let sum = action_only[i] + state_only[i];
        assert!(
            (full[i] - sum).abs() <= 1e-10 * (1.0 + full[i].abs()),
            "coordinate {i}: full {} vs channel sum {sum}",
            full[i]
        );
    }
}

#[test]
fn observation_critics_are_rejected() {
    let env = ChainDiagnostic::new(ChainConfig::default());
    let mut store = ParameterStore::new();
    let policy_cfg = PolicyConfig::new(1, 1).with_d_z(D_Z).with_hidden(vec![8]);
    let err = Td3Rs::new(
        &mut store,
        &env,
        &policy_cfg,
        &[8],
        CriticInput::Observation,
        128,
        RefreshMode::Off,
        algo_cfg(),
    );
    assert!(err.is_err(), "an observation-fed off-policy critic must be refused");
}

#[test]
fn refreshed_sampling_equals_stored_states_while_frozen() {
    // Two identical learners, one with refresh-on-sample: as long as the
    // policy has not moved, the refresh must reproduce the stored internal
    // states exactly, so the sampled batches agree bitwise.
    let build = |refresh| {
        let (store, algo, env) = fixture(algo_cfg(), refresh);
        (store, algo, env)
    };
    let (store_a, mut algo_a, mut env_a) = build(RefreshMode::Off);
    let (store_b, mut algo_b, mut env_b) = build(RefreshMode::OnSample);
    for _ in 0..3 {
        algo_a.collect(&mut env_a, &store_a).unwrap();
        algo_b.collect(&mut env_b, &store_b).unwrap();
    }
    let a = algo_a.sample_batch(&store_a).unwrap();
    let b = algo_b.sample_batch(&store_b).unwrap();
    assert_eq!(a.z, b.z, "refreshed z must equal stored z under a frozen policy");
    assert_eq!(a.z_next, b.z_next);
    assert_eq!(a.obs, b.obs, "identical seeds must give identical draws");
}
