//! Small differentiable networks: a plain MLP and a gated recurrent cell,
//! both operating on `diffcore` tapes with parameters held in a
//! [`ParameterStore`].
//!
//! Every network offers two forward paths: a rank-1 path for single
//! observations (used during rollouts and per-step losses) and a row-batched
//! rank-2 path (used by minibatch losses). Both paths share parameters and
//! produce identical per-row values.

use diffcore::{ParamId, ParameterStore, Result, Tape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform He-style fan-in initialization: `U(−1/√fan_in, 1/√fan_in)`.
fn init_matrix(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Clone)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

/// Feed-forward network with tanh hidden activations and a linear output
/// layer. `hidden` may be empty, giving a single affine map.
#[derive(Clone)]
pub struct Mlp {
    in_dim: usize,
    out_dim: usize,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Registers fresh parameters under `prefix` ("{prefix}.w0", "{prefix}.b0", …).
    pub fn register(
        store: &mut ParameterStore,
        prefix: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut d = in_dim;
        let widths: Vec<usize> = hidden.iter().copied().chain(std::iter::once(out_dim)).collect();
        for (i, &width) in widths.iter().enumerate() {
            let w = store.register(
                &format!("{prefix}.w{i}"),
                &[d, width],
                init_matrix(rng, d, d * width),
            )?;
            let b = store.register(&format!("{prefix}.b{i}"), &[width], vec![0.0; width])?;
            layers.push(Layer { w, b });
            d = width;
        }
        Ok(Self { in_dim, out_dim, layers })
    }

    /// Rebinds to parameters previously registered under `prefix` (e.g. after
    /// loading a checkpoint). Fails if any expected entry is missing or has
    /// the wrong shape.
    pub fn bind(
        store: &ParameterStore,
        prefix: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut d = in_dim;
        let widths: Vec<usize> = hidden.iter().copied().chain(std::iter::once(out_dim)).collect();
        for (i, &width) in widths.iter().enumerate() {
            let w = lookup(store, &format!("{prefix}.w{i}"), &[d, width])?;
            let b = lookup(store, &format!("{prefix}.b{i}"), &[width])?;
            layers.push(Layer { w, b });
            d = width;
        }
        Ok(Self { in_dim, out_dim, layers })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `[in] → [out]`.
    pub fn forward(&self, tape: &Tape, store: &ParameterStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(store, layer.w);
            let b = tape.param(store, layer.b);
            h = tape.add(&tape.matmul(&h, &w)?, &b)?;
            if i + 1 < self.layers.len() {
                h = tape.tanh(&h)?;
            }
        }
        Ok(h)
    }

    /// `[B,in] → [B,out]`.
    pub fn forward_rows(&self, tape: &Tape, store: &ParameterStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(store, layer.w);
            let b = tape.param(store, layer.b);
            h = tape.add_bias(&tape.matmul(&h, &w)?, &b)?;
            if i + 1 < self.layers.len() {
                h = tape.tanh(&h)?;
            }
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }

    /// Ids of the weight matrices only, excluding biases.
    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.layers.iter().map(|l| l.w).collect()
    }
}

fn lookup(store: &ParameterStore, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = store
        .id_of(name)
        .ok_or_else(|| diffcore::DiffError::ParameterStore(format!("missing parameter {name}")))?;
    if store.shape(id) != shape {
        return Err(diffcore::DiffError::ParameterStore(format!(
            "parameter {name} has shape {:?}, expected {:?}",
            store.shape(id),
            shape
        )));
    }
    Ok(id)
}

/// Gated recurrent cell mapping `(x ∈ ℝ^in, z ∈ ℝ^d) → z′ ∈ ℝ^d`:
///
/// ```text
/// r  = σ(x·Wr + z·Ur + br)          reset gate
/// u  = σ(x·Wu + z·Uu + bu)          update gate
/// c  = tanh(x·Wc + (r⊙z)·Uc + bc)   candidate state
/// z′ = (1−u)⊙z + u⊙c
/// ```
#[derive(Clone)]
pub struct GruCell {
    in_dim: usize,
    d: usize,
    wr: ParamId,
    ur: ParamId,
    br: ParamId,
    wu: ParamId,
    uu: ParamId,
    bu: ParamId,
    wc: ParamId,
    uc: ParamId,
    bc: ParamId,
}

impl GruCell {
    pub fn register(
        store: &mut ParameterStore,
        prefix: &str,
        in_dim: usize,
        d: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut mat = |store: &mut ParameterStore, name: &str, rows: usize| {
            store.register(&format!("{prefix}.{name}"), &[rows, d], init_matrix(rng, rows, rows * d))
        };
        let wr = mat(store, "wr", in_dim)?;
        let ur = mat(store, "ur", d)?;
        let br = store.register(&format!("{prefix}.br"), &[d], vec![0.0; d])?;
        let wu = mat(store, "wu", in_dim)?;
        let uu = mat(store, "uu", d)?;
        let bu = store.register(&format!("{prefix}.bu"), &[d], vec![0.0; d])?;
        let wc = mat(store, "wc", in_dim)?;
        let uc = mat(store, "uc", d)?;
        let bc = store.register(&format!("{prefix}.bc"), &[d], vec![0.0; d])?;
        Ok(Self { in_dim, d, wr, ur, br, wu, uu, bu, wc, uc, bc })
    }

    pub fn bind(store: &ParameterStore, prefix: &str, in_dim: usize, d: usize) -> Result<Self> {
        Ok(Self {
            in_dim,
            d,
            wr: lookup(store, &format!("{prefix}.wr"), &[in_dim, d])?,
            ur: lookup(store, &format!("{prefix}.ur"), &[d, d])?,
            br: lookup(store, &format!("{prefix}.br"), &[d])?,
            wu: lookup(store, &format!("{prefix}.wu"), &[in_dim, d])?,
            uu: lookup(store, &format!("{prefix}.uu"), &[d, d])?,
            bu: lookup(store, &format!("{prefix}.bu"), &[d])?,
            wc: lookup(store, &format!("{prefix}.wc"), &[in_dim, d])?,
            uc: lookup(store, &format!("{prefix}.uc"), &[d, d])?,
            bc: lookup(store, &format!("{prefix}.bc"), &[d])?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `([in], [d]) → [d]`.
    pub fn forward(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        x: &Tensor,
        z: &Tensor,
    ) -> Result<Tensor> {
        self.forward_impl(tape, store, x, z, false)
    }

    /// `([B,in], [B,d]) → [B,d]`.
    pub fn forward_rows(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        x: &Tensor,
        z: &Tensor,
    ) -> Result<Tensor> {
        self.forward_impl(tape, store, x, z, true)
    }

    fn forward_impl(
        &self,
        tape: &Tape,
        store: &ParameterStore,
        x: &Tensor,
        z: &Tensor,
        rows: bool,
    ) -> Result<Tensor> {
        let gate = |w: ParamId, u: ParamId, b: ParamId, zin: &Tensor| -> Result<Tensor> {
            let lin = tape.add(
                &tape.matmul(x, &tape.param(store, w))?,
                &tape.matmul(zin, &tape.param(store, u))?,
            )?;
            let bt = tape.param(store, b);
            if rows {
                tape.add_bias(&lin, &bt)
            } else {
                tape.add(&lin, &bt)
            }
        };
        let r = tape.sigmoid(&gate(self.wr, self.ur, self.br, z)?)?;
        let u = tape.sigmoid(&gate(self.wu, self.uu, self.bu, z)?)?;
        let rz = tape.mul(&r, z)?;
        let c = tape.tanh(&gate(self.wc, self.uc, self.bc, &rz)?)?;
        let keep = tape.add_const(&tape.scale(&u, -1.0)?, 1.0)?;
        tape.add(&tape.mul(&keep, z)?, &tape.mul(&u, &c)?)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.wr, self.ur, self.br, self.wu, self.uu, self.bu, self.wc, self.uc, self.bc]
    }
}
