//! Finite-difference corpus: every differentiable op appears in at least one
//! composite expression, and the analytic gradient must agree with central
//! differences (step 1e-5) to a relative error below 1e-4.

use diffcore::{
    finite_diff_gradient, jacobian_frobenius, max_rel_err, ParameterStore, Tape, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Builds a store holding a single flat parameter vector, runs `f` to produce
/// a scalar loss, and compares backward against finite differences.
fn check(name: &str, dim: usize, seed: u64, f: impl Fn(&Tape, &Tensor) -> Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.9..0.9)).collect();

    let mut store = ParameterStore::new();
    let id = store.register("x", &[dim], x0.clone()).unwrap();

    let tape = Tape::new();
    let xv = tape.param(&store, id);
    let loss = f(&tape, &xv);
    let analytic = tape.backward(&loss, &store).unwrap().flat(&store);

    let mut eval = |x: &[f64]| -> diffcore::Result<f64> {
        let mut s = ParameterStore::new();
        let id = s.register("x", &[dim], x.to_vec())?;
        let t = Tape::no_grad();
        let xv = t.param(&s, id);
        f(&t, &xv).item()
    };
    let numeric = finite_diff_gradient(&mut eval, &x0, FD_EPS).unwrap();
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < TOL, "{name}: max relative error {err:.3e} >= {TOL:.0e}");
}

#[test]
fn fd_elementwise_chain() {
    // tanh → square → sum exercises the saturating chain rule.
    check("tanh_square", 5, 11, |t, x| {
        t.sum(&t.square(&t.tanh(x).unwrap()).unwrap()).unwrap()
    });
}

#[test]
fn fd_sigmoid_softplus_mix() {
    check("sigmoid_softplus", 6, 12, |t, x| {
        let s = t.sigmoid(x).unwrap();
        let p = t.softplus(x).unwrap();
        t.sum(&t.mul(&s, &p).unwrap()).unwrap()
    });
}

#[test]
fn fd_exp_log_div() {
    // exp keeps intermediate values positive so log/div stay in-domain.
    check("exp_log_div", 4, 13, |t, x| {
        let e = t.exp(x).unwrap();
        let l = t.log(&t.add_const(&e, 1.5).unwrap()).unwrap();
        let d = t.div(&l, &t.add_const(&e, 2.0).unwrap()).unwrap();
        t.sum(&d).unwrap()
    });
}

#[test]
fn fd_matmul_mlp_layer() {
    // Layer built from slices of a flat parameter: v[3] · M[3,2] with M rows
    // taken out of x, exercising slice + concat backward together.
    check("matmul_layer", 6, 14, |t, x| {
        let inp = [0.7, -0.3, 0.2];
        let m0 = t.scale(&t.slice(x, 0, 2).unwrap(), inp[0]).unwrap();
        let m1 = t.scale(&t.slice(x, 2, 2).unwrap(), inp[1]).unwrap();
        let m2 = t.scale(&t.slice(x, 4, 2).unwrap(), inp[2]).unwrap();
        let h = t.add(&t.add(&m0, &m1).unwrap(), &m2).unwrap();
        let both = t.concat(&h, &t.neg(&h).unwrap(), 0).unwrap();
        t.sum(&t.tanh(&both).unwrap()).unwrap()
    });
}

#[test]
fn fd_matmul_with_parameter_matrix() {
    // Direct matmul with the parameter as a true rank-2 tensor.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let vals: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.9..0.9)).collect();
    let mut store = ParameterStore::new();
    let id = store.register("w", &[2, 3], vals.clone()).unwrap();

    let build = |t: &Tape, w: &Tensor| -> Tensor {
        let x = Tensor::matrix(2, 2, &[0.5, -0.25, 0.75, 1.0]).unwrap();
        let h = t.matmul(&x, w).unwrap(); // [2,3]
        let v = Tensor::vector(&[1.0, -2.0, 0.5]).unwrap();
        let b = t.add_bias(&h, &v).unwrap();
        t.mean(&t.square(&b).unwrap()).unwrap()
    };

    let tape = Tape::new();
    let wv = tape.param(&store, id);
    let loss = build(&tape, &wv);
    let analytic = tape.backward(&loss, &store).unwrap().flat(&store);

    let mut eval = |x: &[f64]| -> diffcore::Result<f64> {
        let mut s = ParameterStore::new();
        let id = s.register("w", &[2, 3], x.to_vec())?;
        let t = Tape::no_grad();
        let wv = t.param(&s, id);
        build(&t, &wv).item()
    };
    let numeric = finite_diff_gradient(&mut eval, &vals, FD_EPS).unwrap();
    assert!(max_rel_err(&analytic, &numeric) < TOL);
}

#[test]
fn fd_row_broadcast_and_axis_sums() {
    check("row_ops", 3, 16, |t, x| {
        let m = Tensor::matrix(2, 3, &[0.2, -0.4, 0.6, 1.0, 0.5, -0.1]).unwrap();
        let pos = t.add_const(&t.square(x).unwrap(), 0.5).unwrap(); // strictly positive row
        let a = t.mul_row(&m, x).unwrap();
        let b = t.div_row(&a, &pos).unwrap();
        let c = t.add_bias(&b, x).unwrap();
        let rows = t.sum_axis(&c, 1).unwrap();
        let cols = t.sum_axis(&c, 0).unwrap();
        t.add(&t.sum(&rows).unwrap(), &t.mean(&cols).unwrap()).unwrap()
    });
}

#[test]
fn fd_minimum_clamp_relu() {
    // Values chosen away from kinks so finite differences are valid.
    check("min_clamp_relu", 5, 17, |t, x| {
        let shifted = t.add_const(x, 0.05).unwrap();
        let r = t.relu(&shifted).unwrap();
        let c = t.clamp(&t.scale(x, 2.0).unwrap(), -0.8, 0.8).unwrap();
        let m = t.minimum(&r, &c).unwrap();
        t.sum(&m).unwrap()
    });
}

#[test]
fn fd_scalar_broadcast_ops() {
    check("scalar_broadcast", 4, 18, |t, x| {
        let s = t.mean(x).unwrap();
        let shifted = t.add_scalar(x, &s).unwrap();
        let scaled = t.mul_scalar(&shifted, &s).unwrap();
        t.sum(&t.tanh(&scaled).unwrap()).unwrap()
    });
}

#[test]
fn fd_neg_sub_scale() {
    check("neg_sub", 4, 19, |t, x| {
        let a = t.neg(x).unwrap();
        let b = t.sub(&a, &t.scale(x, 0.5).unwrap()).unwrap();
        t.sum(&t.square(&b).unwrap()).unwrap()
    });
}

#[test]
fn fd_two_layer_network_jacobian_frobenius() {
    // Jacobian of a fixed 2-layer tanh net w.r.t. its input, FD cross-check.
    let w1 = Tensor::matrix(3, 4, &[0.2, -0.1, 0.4, 0.3, 0.5, 0.1, -0.3, 0.2, 0.0, 0.6, -0.2, 0.1])
        .unwrap();
    let w2 = Tensor::matrix(4, 2, &[0.3, -0.5, 0.2, 0.4, -0.1, 0.2, 0.6, -0.3]).unwrap();
    let net = move |t: &Tape, x: &Tensor| -> diffcore::Result<Tensor> {
        let h = t.tanh(&t.matmul(x, &w1)?)?;
        t.matmul(&h, &w2)
    };
    let at = Tensor::vector(&[0.3, -0.6, 0.9]).unwrap();
    let frob = jacobian_frobenius(&net, &at).unwrap();

    // Finite-difference Jacobian.
    let mut ss = 0.0;
    let f0 = |x: &[f64]| -> Vec<f64> {
        let t = Tape::no_grad();
        let xv = Tensor::vector(x).unwrap();
        net(&t, &xv).unwrap().values().to_vec()
    };
    let x0 = at.values().to_vec();
    for j in 0..3 {
        let mut hi = x0.clone();
        let mut lo = x0.clone();
        hi[j] += FD_EPS;
        lo[j] -= FD_EPS;
        let (yh, yl) = (f0(&hi), f0(&lo));
        for i in 0..2 {
            let d = (yh[i] - yl[i]) / (2.0 * FD_EPS);
            ss += d * d;
        }
    }
    let fd_frob = ss.sqrt();
    assert!(
        (frob - fd_frob).abs() / fd_frob.max(1.0) < TOL,
        "jacobian frobenius {frob} vs fd {fd_frob}"
    );
}

#[test]
fn jacobian_frobenius_frozen_values() {
    // Linear map diag(1,2): ‖J‖_F = √(1+4) = √5.
    let a = Tensor::matrix(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
    let lin = move |t: &Tape, x: &Tensor| t.matmul(&a, x);
    let at = Tensor::vector(&[0.7, -0.2]).unwrap();
    let frob = jacobian_frobenius(&lin, &at).unwrap();
    assert!((frob - 5f64.sqrt()).abs() < 1e-12);

    // Elementwise tanh at the origin in d=3: J = I, ‖J‖_F = √3.
    let th = |t: &Tape, x: &Tensor| t.tanh(x);
    let origin = Tensor::vector(&[0.0, 0.0, 0.0]).unwrap();
    let frob = jacobian_frobenius(&th, &origin).unwrap();
    assert!((frob - 3f64.sqrt()).abs() < 1e-12);
}
