//! Episode collectors, evaluators, and the trajectory channel: chain
//! integrity of stored transitions, seed determinism, bound enforcement,
//! and summary statistics.

use algorithms::{
    collect_deterministic_episode, collect_gaussian_episode, evaluate_mean_policy, summarize,
    trajectory_channel, ReplayBuffer,
};
use diffcore::{ParameterStore, Tape, Tensor};
use envs::{ChainConfig, ChainDiagnostic, Env, PointMassMemory};
use estimators::{ExtendedTrajectory, TrajStep};
use policies::{build_gaussian_policy, DeterministicStatefulPolicy, MeanNets, PolicyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian_fixture() -> (ParameterStore, policies::StatefulGaussianPolicy, ChainDiagnostic) {
    let env = ChainDiagnostic::new(ChainConfig { horizon: 7, ..ChainConfig::default() });
    let mut store = ParameterStore::new();
    let cfg = PolicyConfig::new(env.obs_dim(), env.action_dim())
        .with_d_z(2)
        .with_hidden(vec![8])
        .with_seed(23);
    let policy = build_gaussian_policy(&mut store, "pi", &cfg).unwrap();
    (store, policy, env)
}

#[test]
fn collected_transitions_form_an_unbroken_state_chain() {
    let (store, policy, mut env) = gaussian_fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut buffer = ReplayBuffer::new(64);
    let (ret, steps) = collect_gaussian_episode(
        &mut env,
        &policy,
        &store,
        100,
        &mut rng,
        &mut buffer,
        7,
    )
    .unwrap();
    assert_eq!(steps, 7, "chain episodes run to the horizon");
    assert_eq!(buffer.len(), steps);

    let mut total = 0.0;
    for i in 0..buffer.len() {
        let t = buffer.get(i);
        assert_eq!(t.episode_id, 7);
        assert_eq!(t.step_index, i);
        total += t.reward;
        if i > 0 {
            assert_eq!(t.z, buffer.get(i - 1).z_next, "state chain broken at {i}");
        }
        // The stored noise regenerates the stored next state bitwise.
        let replayed = policy.refresh_state(&store, &t.obs, &t.z, &t.state_noise).unwrap();
        assert_eq!(replayed, t.z_next);
    }
    assert!((total - ret).abs() < 1e-12, "returned total must match stored rewards");
}

#[test]
fn equal_seeds_collect_bitwise_equal_episodes() {
    let (store, policy, mut env) = gaussian_fixture();
    let mut collect = |rng_seed: u64| -> Vec<(Vec<f64>, Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut buffer = ReplayBuffer::new(64);
        collect_gaussian_episode(&mut env, &policy, &store, 42, &mut rng, &mut buffer, 0)
            .unwrap();
        (0..buffer.len())
            .map(|i| {
                let t = buffer.get(i);
                (t.action.clone(), t.z_next.clone(), t.reward)
            })
            .collect()
    };
    let a = collect(9);
    let b = collect(9);
    let c = collect(10);
    assert_eq!(a, b, "same seeds must reproduce the episode exactly");
    assert_ne!(a, c, "different noise streams should explore differently");
}

#[test]
fn mean_evaluation_replays_the_noise_free_chain() {
    let (store, policy, mut env) = gaussian_fixture();
    let report = evaluate_mean_policy(&mut env, &policy, &store, &[11]).unwrap();

    // Replay by hand through the rank-1 mean networks.
    let tape = Tape::no_grad();
    let mut cur = env.reset(11);
    let mut z = vec![0.0; policy.d_z()];
    let mut total = 0.0;
    loop {
        let obs_t = Tensor::vector(&cur.obs).unwrap();
        let z_t = Tensor::vector(&z).unwrap();
        let a = policy.nets.action_mean(&tape, &store, &obs_t, Some(&z_t)).unwrap();
        let nz = policy.nets.state_mean(&tape, &store, &obs_t, &z_t).unwrap();
        let next = env.step(a.values());
        total += next.reward;
        z = nz.values().to_vec();
        if next.last {
            break;
        }
        cur = next;
    }
    assert!((report.mean_return - total).abs() < 1e-12);
    assert_eq!(report.std_return, 0.0, "a single episode has no spread");
    assert!(
        report.success_rate.is_nan(),
        "the chain has no success notion, so the rate must be NaN"
    );
}

#[test]
fn summaries_handle_missing_success_flags() {
    let r = summarize(&[1.0, 3.0], &[None, None]);
    assert_eq!(r.mean_return, 2.0);
    assert_eq!(r.std_return, 1.0);
    assert!(r.success_rate.is_nan());

    let r = summarize(&[0.0, 0.0, 0.0], &[Some(true), None, Some(false)]);
    assert_eq!(r.success_rate, 0.5, "unknown outcomes are excluded from the rate");
}

#[test]
fn the_trajectory_channel_preserves_episode_order() {
    let (tx, rx) = trajectory_channel();
    for k in 0..3 {
        let traj = ExtendedTrajectory {
            steps: vec![TrajStep {
                obs: vec![0.0],
                privileged: vec![0.0],
                z: vec![],
                action: vec![0.1],
                z_next: vec![],
                reward: k as f64,
                absorbing: false,
                last: true,
            }],
            gamma: 0.99,
            final_obs: vec![0.5],
            final_privileged: vec![0.5],
        };
        tx.send(traj).unwrap();
    }
    drop(tx);
    let rewards: Vec<f64> = rx.iter().map(|t| t.steps[0].reward).collect();
    assert_eq!(rewards, vec![0.0, 1.0, 2.0]);
}

#[test]
fn deterministic_collection_clips_to_the_declared_bounds() {
    let mut env = PointMassMemory::new();
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let nets = MeanNets::register_mlp_gru(
        &mut store,
        "mu",
        env.obs_dim(),
        env.action_dim(),
        3,
        &[16],
        &mut rng,
    )
    .unwrap();
    let (lo, hi) = env.action_bounds();
    let policy = DeterministicStatefulPolicy::with_unit_state_bounds(nets, lo, hi).unwrap();

    let mut buffer = ReplayBuffer::new(1024);
    // Large exploration noise so the clip actually engages.
    collect_deterministic_episode(&mut env, &policy, &store, 1.0, 5, &mut rng, &mut buffer, 0)
        .unwrap();
    assert!(!buffer.is_empty());
    let mut boundary_hits = 0;
    for i in 0..buffer.len() {
        let t = buffer.get(i);
        for a in &t.action {
            assert!((-1.0..=1.0).contains(a), "action {a} escaped its bounds");
            if a.abs() == 1.0 {
                boundary_hits += 1;
            }
        }
        for z in &t.z_next {
            assert!((-1.0..=1.0).contains(z), "internal state {z} escaped its bounds");
        }
    }
    assert!(boundary_hits > 0, "noise of scale 1 should saturate some actions");
}
