//! Frozen-value and contract tests for individual tape ops.

use diffcore::{DiffError, ParameterStore, Tape, Tensor};

fn store_with(name: &str, shape: &[usize], vals: &[f64]) -> (ParameterStore, diffcore::ParamId) {
    let mut s = ParameterStore::new();
    let id = s.register(name, shape, vals.to_vec()).unwrap();
    (s, id)
}

#[test]
fn matmul_identity_preserves_vector() {
    let tape = Tape::no_grad();
    let eye = Tensor::matrix(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let v = Tensor::vector(&[1.0, 2.0]).unwrap();
    let out = tape.matmul(&eye, &v).unwrap();
    assert_eq!(out.shape(), &[2]);
    assert_eq!(out.values(), &[1.0, 2.0]);
}

#[test]
fn matmul_rectangular_known_product() {
    let tape = Tape::no_grad();
    let a = Tensor::matrix(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let b = Tensor::matrix(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
    let out = tape.matmul(&a, &b).unwrap();
    assert_eq!(out.shape(), &[2, 2]);
    assert_eq!(out.values(), &[58.0, 64.0, 139.0, 154.0]);
}

#[test]
fn tanh_and_softplus_fixed_points() {
    let tape = Tape::no_grad();
    let zero = Tensor::vector(&[0.0]).unwrap();
    assert_eq!(tape.tanh(&zero).unwrap().values(), &[0.0]);
    let sp = tape.softplus(&zero).unwrap();
    assert!((sp.values()[0] - std::f64::consts::LN_2).abs() < 1e-15);
    let sg = tape.sigmoid(&zero).unwrap();
    assert_eq!(sg.values(), &[0.5]);
}

#[test]
fn shape_mismatch_is_an_error() {
    let tape = Tape::no_grad();
    let a = Tensor::vector(&[1.0, 2.0]).unwrap();
    let b = Tensor::vector(&[1.0, 2.0, 3.0]).unwrap();
    match tape.add(&a, &b) {
        Err(DiffError::DimensionMismatch { op, .. }) => assert_eq!(op, "add"),
        other => panic!("expected dimension error, got {other:?}"),
    }
    let m = Tensor::matrix(2, 2, &[1.0; 4]).unwrap();
    assert!(tape.matmul(&m, &b).is_err());
}

#[test]
fn non_finite_output_is_detected_at_op_boundary() {
    let tape = Tape::no_grad();
    let a = Tensor::vector(&[1.0]).unwrap();
    let zero = Tensor::vector(&[0.0]).unwrap();
    match tape.div(&a, &zero) {
        Err(DiffError::NonFinite { op }) => assert_eq!(op, "div"),
        other => panic!("expected non-finite error, got {other:?}"),
    }
    // log of a negative number → NaN → error.
    let neg = Tensor::vector(&[-1.0]).unwrap();
    assert!(matches!(tape.log(&neg), Err(DiffError::NonFinite { .. })));
    // exp overflow → +inf → error.
    let big = Tensor::vector(&[1e4]).unwrap();
    assert!(matches!(tape.exp(&big), Err(DiffError::NonFinite { .. })));
}

#[test]
fn backward_of_diagonal_quadratic_form() {
    // f(x) = xᵀ diag(1,2) x at x = (1,−1): ∇f = (2·1·x₁, 2·2·x₂) = [2, −4].
    let (store, x) = store_with("x", &[2], &[1.0, -1.0]);
    let tape = Tape::new();
    let xv = tape.param(&store, x);
    let d = Tensor::vector(&[1.0, 2.0]).unwrap();
    let loss = tape.sum(&tape.mul(&d, &tape.square(&xv).unwrap()).unwrap()).unwrap();
    let grads = tape.backward(&loss, &store).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0, -4.0]);
}

#[test]
fn backward_is_linear_in_the_loss() {
    let (store, x) = store_with("x", &[3], &[0.3, -0.7, 1.1]);
    let grad_of = |build: &dyn Fn(&Tape, &Tensor) -> Tensor| -> Vec<f64> {
        let tape = Tape::new();
        let xv = tape.param(&store, x);
        let loss = build(&tape, &xv);
        tape.backward(&loss, &store).unwrap().flat(&store)
    };
    let l1 = |t: &Tape, x: &Tensor| t.sum(&t.tanh(x).unwrap()).unwrap();
    let l2 = |t: &Tape, x: &Tensor| t.sum(&t.square(x).unwrap()).unwrap();
    let g1 = grad_of(&l1);
    let g2 = grad_of(&l2);
    let (a, b) = (2.5, -1.25);
    let combined = grad_of(&|t: &Tape, x: &Tensor| {
        let s1 = t.scale(&l1(t, x), a).unwrap();
        let s2 = t.scale(&l2(t, x), b).unwrap();
        t.add(&s1, &s2).unwrap()
    });
    for i in 0..3 {
        let expect = a * g1[i] + b * g2[i];
        assert!((combined[i] - expect).abs() < 1e-12, "coord {i}: {} vs {expect}", combined[i]);
    }
}

#[test]
fn identical_graphs_give_bitwise_identical_gradients() {
    let (store, w) = store_with("w", &[2, 2], &[0.1, -0.2, 0.3, 0.4]);
    let run = || -> Vec<f64> {
        let tape = Tape::new();
        let wv = tape.param(&store, w);
        let x = Tensor::vector(&[0.5, -1.5]).unwrap();
        let h = tape.tanh(&tape.matmul(&x, &wv).unwrap()).unwrap();
        let loss = tape.mean(&tape.square(&h).unwrap()).unwrap();
        tape.backward(&loss, &store).unwrap().flat(&store)
    };
    let g1 = run();
    let g2 = run();
    assert_eq!(g1.len(), 4);
    for (a, b) in g1.iter().zip(&g2) {
        assert_eq!(a.to_bits(), b.to_bits(), "gradient bits must be identical across reruns");
    }
}

#[test]
fn parameter_reused_across_steps_accumulates_gradient() {
    // loss = w·c1 + w·c2 ⇒ ∂loss/∂w = c1 + c2; the tape must reuse one leaf.
    let (store, w) = store_with("w", &[1], &[0.7]);
    let tape = Tape::new();
    let wv1 = tape.param(&store, w);
    let wv2 = tape.param(&store, w);
    let t1 = tape.scale(&wv1, 3.0).unwrap();
    let t2 = tape.scale(&wv2, 4.0).unwrap();
    let loss = tape.add(&t1, &t2).unwrap();
    let grads = tape.backward(&loss, &store).unwrap();
    assert_eq!(grads.get(w).unwrap(), &[7.0]);
}

#[test]
fn minimum_ties_route_gradient_to_second_operand() {
    let mut s = ParameterStore::new();
    let a = s.register("a", &[1], vec![2.0]).unwrap();
    let b = s.register("b", &[1], vec![2.0]).unwrap();
    let tape = Tape::new();
    let av = tape.param(&s, a);
    let bv = tape.param(&s, b);
    let m = tape.minimum(&av, &bv).unwrap();
    let grads = tape.backward(&tape.sum(&m).unwrap(), &s).unwrap();
    let ga = grads.get(a).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0]);
    assert_eq!(ga, vec![0.0], "tie must not send gradient to the first operand");
    assert_eq!(grads.get(b).unwrap(), &[1.0]);
}

#[test]
fn clamp_blocks_gradient_outside_range() {
    let (store, x) = store_with("x", &[3], &[-2.0, 0.25, 3.0]);
    let tape = Tape::new();
    let xv = tape.param(&store, x);
    let c = tape.clamp(&xv, -1.0, 1.0).unwrap();
    assert_eq!(c.values(), &[-1.0, 0.25, 1.0]);
    let grads = tape.backward(&tape.sum(&c).unwrap(), &store).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[0.0, 1.0, 0.0]);
}

#[test]
fn concat_and_slice_roundtrip_gradients() {
    let mut s = ParameterStore::new();
    let a = s.register("a", &[2], vec![1.0, 2.0]).unwrap();
    let b = s.register("b", &[3], vec![3.0, 4.0, 5.0]).unwrap();
    let tape = Tape::new();
    let joined = tape.concat(&tape.param(&s, a), &tape.param(&s, b), 0).unwrap();
    assert_eq!(joined.values(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    // Take only the middle three entries: covers both halves.
    let mid = tape.slice(&joined, 1, 3).unwrap();
    let grads = tape.backward(&tape.sum(&mid).unwrap(), &s).unwrap();
    assert_eq!(grads.get(a).unwrap(), &[0.0, 1.0]);
    assert_eq!(grads.get(b).unwrap(), &[1.0, 1.0, 0.0]);
}

#[test]
fn detached_loss_and_cross_tape_use_are_errors() {
    let (store, x) = store_with("x", &[1], &[1.0]);
    let t1 = Tape::new();
    let xv = t1.param(&store, x);
    let y = t1.square(&xv).unwrap();
    // Backward on a different tape must be rejected.
    let t2 = Tape::new();
    assert!(matches!(t2.backward(&y, &store), Err(DiffError::TapeMismatch { .. })));
    assert!(matches!(t2.add(&y, &y), Err(DiffError::TapeMismatch { .. })));
    // Backward on a constant must be rejected.
    let c = Tensor::scalar(1.0).unwrap();
    assert!(matches!(t1.backward(&c, &store), Err(DiffError::Detached { .. })));
}

#[test]
fn no_grad_tape_computes_without_recording() {
    let (store, x) = store_with("x", &[2], &[1.0, 2.0]);
    let tape = Tape::no_grad();
    let xv = tape.param(&store, x);
    let y = tape.square(&xv).unwrap();
    assert_eq!(y.values(), &[1.0, 4.0]);
    assert!(!y.is_tracked());
    assert_eq!(tape.num_nodes(), 0);
}

#[test]
fn row_broadcast_ops_match_explicit_loops() {
    let tape = Tape::no_grad();
    let m = Tensor::matrix(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let v = Tensor::vector(&[10.0, 20.0, 30.0]).unwrap();
    assert_eq!(tape.add_bias(&m, &v).unwrap().values(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    assert_eq!(tape.mul_row(&m, &v).unwrap().values(), &[10.0, 40.0, 90.0, 40.0, 100.0, 180.0]);
    assert_eq!(
        tape.div_row(&m, &v).unwrap().values(),
        &[0.1, 0.1, 0.1, 0.4, 0.25, 0.2]
    );
    assert_eq!(tape.sum_axis(&m, 0).unwrap().values(), &[5.0, 7.0, 9.0]);
    assert_eq!(tape.sum_axis(&m, 1).unwrap().values(), &[6.0, 15.0]);
}
