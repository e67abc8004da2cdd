//! Adam against a hand-stepped reference, plus the clipping and
//! missing-gradient contracts.

use algorithms::Adam;
use diffcore::{Gradients, ParamId, ParameterStore, Tape, Tensor};

/// Gradient of `Σ_i w_i·c_i` w.r.t. `w` is exactly `c`.
fn grads_equal_to(
    store: &ParameterStore,
    targets: &[(ParamId, Vec<f64>)],
) -> Gradients {
    let tape = Tape::new();
    let mut loss = None;
    for (id, c) in targets {
        let term = tape.sum(&tape.mul(&tape.param(store, *id), &Tensor::vector(c).unwrap()).unwrap()).unwrap();
        loss = Some(match loss {
            None => term,
            Some(acc) => tape.add(&acc, &term).unwrap(),
        });
    }
    tape.backward(&loss.unwrap(), store).unwrap()
}

#[test]
fn steps_match_a_hand_rolled_reference() {
    let mut store = ParameterStore::new();
    let w = store.register("w", &[3], vec![0.5, -0.3, 1.2]).unwrap();
    let lr = 1e-2;
    let mut opt = Adam::new(vec![w], lr);

    let grad_seq = [vec![0.4, -1.1, 0.0], vec![-0.2, 0.3, 0.9], vec![1.5, 0.0, -0.7]];
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut expect = vec![0.5, -0.3, 1.2];
    let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);

    for (t, g) in grad_seq.iter().enumerate() {
        let grads = grads_equal_to(&store, &[(w, g.clone())]);
        opt.step(&mut store, &grads).unwrap();

        let t = (t + 1) as i32;
        for i in 0..3 {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / (1.0 - beta1_pow(beta1, t));
            let v_hat = v[i] / (1.0 - beta1_pow(beta2, t));
            expect[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        for (i, e) in expect.iter().enumerate() {
            assert!(
                (store.values(w)[i] - e).abs() < 1e-15,
                "step {t} coordinate {i}: {} vs hand-rolled {e}",
                store.values(w)[i],
            );
        }
    }
}

fn beta1_pow(b: f64, t: i32) -> f64 {
    b.powi(t)
}

#[test]
fn the_first_step_has_learning_rate_magnitude() {
    let mut store = ParameterStore::new();
    let w = store.register("w", &[1], vec![1.0]).unwrap();
    let lr = 3e-4;
    let mut opt = Adam::new(vec![w], lr);
    let grads = grads_equal_to(&store, &[(w, vec![0.7])]);
    opt.step(&mut store, &grads).unwrap();
    // Bias correction makes m̂ = g and v̂ = g², so the first step is
    // lr·g/(|g|+eps) ≈ lr·sign(g) regardless of the gradient's scale.
    let step = 1.0 - store.values(w)[0];
    assert!((step - lr).abs() < 1e-9, "first step {step} should be ≈ lr {lr}");
}

#[test]
fn global_norm_clipping_equals_prescaled_gradients() {
    let run = |max_norm: Option<f64>, scale: f64| -> Vec<f64> {
        let mut store = ParameterStore::new();
        let a = store.register("a", &[2], vec![0.3, -0.8]).unwrap();
        let b = store.register("b", &[1], vec![0.1]).unwrap();
        let mut opt = Adam::new(vec![a, b], 1e-3).with_max_norm(max_norm);
        for _ in 0..3 {
            let grads = grads_equal_to(
                &store,
                &[(a, vec![6.0 * scale, -8.0 * scale]), (b, vec![0.0])],
            );
            opt.step(&mut store, &grads).unwrap();
        }
        let mut out = store.values(a).to_vec();
        out.extend(store.values(b));
        out
    };
    // Gradient norm is 10·scale; ceiling 1.0 divides by that norm, which is
    // the same trajectory as feeding gradients pre-scaled to unit norm.
    let clipped = run(Some(1.0), 1.0);
    let prescaled = run(None, 0.1);
    for (c, p) in clipped.iter().zip(&prescaled) {
        assert!((c - p).abs() < 1e-12, "clipped {c} vs prescaled {p}");
    }
}

#[test]
fn parameters_without_gradients_stay_put() {
    let mut store = ParameterStore::new();
    let a = store.register("a", &[2], vec![0.25, -0.5]).unwrap();
    let b = store.register("b", &[2], vec![1.0, 2.0]).unwrap();
    let before_b = store.values(b).to_vec();
    let mut opt = Adam::new(vec![a, b], 1e-2);
    for _ in 0..4 {
        // Loss never touches `b`, so its gradient entry is absent.
        let grads = grads_equal_to(&store, &[(a, vec![1.0, -2.0])]);
        opt.step(&mut store, &grads).unwrap();
    }
    assert_eq!(store.values(b), before_b.as_slice(), "untouched parameter drifted");
    assert_ne!(store.values(a)[0], 0.25, "touched parameter should move");
}
