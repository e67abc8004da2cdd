use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::DiffError;
use crate::params::{Gradients, ParamId, ParameterStore};
use crate::tensor::Tensor;
use crate::Result;

/// Monotone counter so tensors can be matched to the tape that produced them.
static TAPE_EPOCH: AtomicU64 = AtomicU64::new(1);

type In = Option<u32>;
type Saved = Arc<Vec<f64>>;

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Tanh,
    Sigmoid,
    Relu,
    Softplus,
    Exp,
    Log,
    Square,
}

/// One recorded operation. Inputs are node indices (`None` = constant with no
/// gradient); `Saved` buffers hold whatever the backward rule needs.
enum Op {
    LeafParam(usize),
    LeafInput,
    Add { a: In, b: In },
    Sub { a: In, b: In },
    Mul { a: In, b: In, av: Saved, bv: Saved },
    Div { a: In, b: In, av: Saved, bv: Saved },
    MatMul { a: In, b: In, av: Saved, bv: Saved, m: usize, k: usize, n: usize },
    AddBias { a: In, b: In, rows: usize, cols: usize },
    MulRow { a: In, b: In, av: Saved, bv: Saved, rows: usize, cols: usize },
    DivRow { a: In, b: In, av: Saved, bv: Saved, rows: usize, cols: usize },
    Neg { a: In },
    Scale { a: In, c: f64 },
    AddConst { a: In },
    Unary { a: In, kind: UnaryKind, saved: Saved },
    Sum { a: In, n: usize },
    Mean { a: In, n: usize },
    SumAxis { a: In, axis: usize, rows: usize, cols: usize },
    Concat { a: In, b: In, axis: usize, a_shape: Vec<usize>, b_shape: Vec<usize> },
    Slice { a: In, start: usize, src_len: usize },
    SliceCols { a: In, start: usize, len: usize, rows: usize, cols: usize },
    Minimum { a: In, b: In, av: Saved, bv: Saved },
    Clamp { a: In, lo: f64, hi: f64, saved: Saved },
    AddScalar { a: In, s: In },
    MulScalar { a: In, s: In, av: Saved, sv: Saved },
}

struct Node {
    op: Op,
    out_len: usize,
}

struct Inner {
    nodes: Vec<Node>,
    /// One leaf node per parameter per tape, so reuse across timesteps
    /// accumulates gradients instead of forking leaves.
    param_cache: HashMap<usize, u32>,
}

/// Define-by-run gradient tape.
///
/// A tape records ops eagerly as values are computed and replays them in
/// reverse for [`Tape::backward`]. Create a fresh tape per forward pass; a
/// non-recording tape ([`Tape::no_grad`]) runs the same numeric kernels
/// without building a graph.
pub struct Tape {
    inner: RefCell<Inner>,
    epoch: u64,
    recording: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner { nodes: Vec::new(), param_cache: HashMap::new() }),
            epoch: TAPE_EPOCH.fetch_add(1, Ordering::Relaxed),
            recording: true,
        }
    }

    /// A tape that computes values but records no graph. `backward` on values
    /// from this tape fails with [`DiffError::Detached`].
    pub fn no_grad() -> Self {
        let mut t = Self::new();
        t.recording = false;
        t
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Attaches a parameter as a differentiable leaf. Repeated calls for the
    /// same parameter return the same leaf node.
    pub fn param(&self, store: &ParameterStore, id: ParamId) -> Tensor {
        let t = store.tensor(id);
        if !self.recording {
            return t;
        }
        let mut inner = self.inner.borrow_mut();
        let node = match inner.param_cache.get(&id.0) {
            Some(&n) => n,
            None => {
                let n = push_node(&mut inner, Op::LeafParam(id.0), t.len());
                inner.param_cache.insert(id.0, n);
                n
            }
        };
        attach(t, node, self.epoch)
    }

    /// Attaches an arbitrary value as a differentiable input leaf (used for
    /// Jacobians with respect to network inputs). Each call makes a new leaf.
    pub fn input(&self, t: &Tensor) -> Tensor {
        let t = t.detached();
        if !self.recording {
            return t;
        }
        let mut inner = self.inner.borrow_mut();
        let node = push_node(&mut inner, Op::LeafInput, t.len());
        attach(t, node, self.epoch)
    }

    fn node_of(&self, t: &Tensor, op: &'static str) -> Result<In> {
        match t.node {
            None => Ok(None),
            Some(n) if t.tape_epoch == self.epoch => Ok(Some(n)),
            Some(_) => Err(DiffError::TapeMismatch { op }),
        }
    }

    /// Shared epilogue: finite-scan the output, then record the node if the
    /// tape is recording and any input is tracked.
    fn finish(
        &self,
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        make_op: impl FnOnce() -> Op,
        any_tracked: bool,
    ) -> Result<Tensor> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(DiffError::NonFinite { op: op_name });
        }
        let out = Tensor::from_op(shape, data);
        if self.recording && any_tracked {
            let mut inner = self.inner.borrow_mut();
            let node = push_node(&mut inner, make_op(), out.len());
            Ok(attach(out, node, self.epoch))
        } else {
            Ok(out)
        }
    }

    // ── elementwise binary ─────────────────────────────────────────────

    fn same_shape(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(DiffError::DimensionMismatch {
                op,
                detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
            });
        }
        Ok(())
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape(a, b, "add")?;
        let (na, nb) = (self.node_of(a, "add")?, self.node_of(b, "add")?);
        let data = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
        self.finish("add", a.shape().to_vec(), data, || Op::Add { a: na, b: nb }, na.is_some() || nb.is_some())
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape(a, b, "sub")?;
        let (na, nb) = (self.node_of(a, "sub")?, self.node_of(b, "sub")?);
        let data = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
        self.finish("sub", a.shape().to_vec(), data, || Op::Sub { a: na, b: nb }, na.is_some() || nb.is_some())
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape(a, b, "mul")?;
        let (na, nb) = (self.node_of(a, "mul")?, self.node_of(b, "mul")?);
        let data = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
        let (av, bv) = (a.data_arc(), b.data_arc());
        self.finish("mul", a.shape().to_vec(), data, || Op::Mul { a: na, b: nb, av, bv }, na.is_some() || nb.is_some())
    }

    pub fn div(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape(a, b, "div")?;
        let (na, nb) = (self.node_of(a, "div")?, self.node_of(b, "div")?);
        let data = a.values().iter().zip(b.values()).map(|(x, y)| x / y).collect();
        let (av, bv) = (a.data_arc(), b.data_arc());
        self.finish("div", a.shape().to_vec(), data, || Op::Div { a: na, b: nb, av, bv }, na.is_some() || nb.is_some())
    }

    /// Elementwise minimum. On exact ties the gradient is routed to the
    /// *second* operand; clipped-surrogate losses rely on this so that a
    /// fully-clipped objective has zero gradient.
    pub fn minimum(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape(a, b, "minimum")?;
        let (na, nb) = (self.node_of(a, "minimum")?, self.node_of(b, "minimum")?);
        let data = a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).collect();
        let (av, bv) = (a.data_arc(), b.data_arc());
        self.finish(
            "minimum",
            a.shape().to_vec(),
            data,
            || Op::Minimum { a: na, b: nb, av, bv },
            na.is_some() || nb.is_some(),
        )
    }

    // ── matrix ops ─────────────────────────────────────────────────────

    /// Matrix product. Accepts `[m,k]·[k,n] → [m,n]`, matrix–vector
    /// `[m,k]·[k] → [m]`, and vector–matrix `[k]·[k,n] → [n]`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, k) = (a.rows(), a.cols());
        let (kb, n) = if b.shape().len() == 2 { (b.shape()[0], b.shape()[1]) } else { (b.len(), 1) };
        if a.shape().len() == 1 && b.shape().len() == 1 {
            return Err(DiffError::DimensionMismatch {
                op: "matmul",
                detail: "two rank-1 operands; use mul + sum for a dot product".into(),
            });
        }
        if k != kb {
            return Err(DiffError::DimensionMismatch {
                op: "matmul",
                detail: format!("{:?} · {:?}", a.shape(), b.shape()),
            });
        }
        let (na, nb) = (self.node_of(a, "matmul")?, self.node_of(b, "matmul")?);
        let mut out = vec![0.0; m * n];
        let (ad, bd) = (a.values(), b.values());
        for i in 0..m {
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..p * n + n];
                let orow = &mut out[i * n..i * n + n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        // Vector operands collapse the corresponding output axis.
        let out_shape = match (a.shape().len(), b.shape().len()) {
            (2, 2) => vec![m, n],
            (2, 1) => vec![m],
            (1, 2) => vec![n],
            _ => unreachable!(),
        };
        let (av, bv) = (a.data_arc(), b.data_arc());
        self.finish(
            "matmul",
            out_shape,
            out,
            || Op::MatMul { a: na, b: nb, av, bv, m, k, n },
            na.is_some() || nb.is_some(),
        )
    }

    /// Adds a length-`n` vector to every row of an `[m,n]` matrix.
    pub fn add_bias(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (rows, cols) = Self::rows_cols(a, b, "add_bias")?;
        let (na, nb) = (self.node_of(a, "add_bias")?, self.node_of(b, "add_bias")?);
        let mut data = a.values().to_vec();
        for i in 0..rows {
            for j in 0..cols {
                data[i * cols + j] += b.values()[j];
            }
        }
        self.finish(
            "add_bias",
            a.shape().to_vec(),
            data,
            || Op::AddBias { a: na, b: nb, rows, cols },
            na.is_some() || nb.is_some(),
        )
    }

    /// Multiplies every row of an `[m,n]` matrix elementwise by a length-`n` vector.
    pub fn mul_row(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (rows, cols) = Self::rows_cols(a, b, "mul_row")?;
        let (na, nb) = (self.node_of(a, "mul_row")?, self.node_of(b, "mul_row")?);
        let mut data = a.values().to_vec();
        for i in 0..rows {
            for j in 0..cols {
                data[i * cols + j] *= b.values()[j];
            }
        }
        let (av, bv) = (a.data_arc(), b.data_arc());
        self.finish(
            "mul_row",
            a.shape().to_vec(),
            data,
            || Op::MulRow { a: na, b: nb, av, bv, rows, cols },
            na.is_some() || nb.is_some(),
        )
    }

    /// Divides every row of an `[m,n]` matrix elementwise by a length-`n` vector.
    pub fn div_row(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (rows, cols) = Self::rows_cols(a, b, "div_row")?;
        let (na, nb) = (self.node_of(a, "div_row")?, self.node_of(b, "div_row")?);
        let mut data = a.values().to_vec();
        for i in 0..rows {
            for j in 0..cols {
                data[i * cols + j] /= b.values()[j];
            }
        }
        let (av, bv) = (a.data_arc(), b.data_arc());
        self.finish(
            "div_row",
            a.shape().to_vec(),
            data,
            || Op::DivRow { a: na, b: nb, av, bv, rows, cols },
            na.is_some() || nb.is_some(),
        )
    }

    fn rows_cols(a: &Tensor, b: &Tensor, op: &'static str) -> Result<(usize, usize)> {
        if a.shape().len() != 2 || b.shape().len() != 1 || b.len() != a.shape()[1] {
            return Err(DiffError::DimensionMismatch {
                op,
                detail: format!("matrix {:?} with row vector {:?}", a.shape(), b.shape()),
            });
        }
        Ok((a.shape()[0], a.shape()[1]))
    }

    // ── scalar-broadcast ops ───────────────────────────────────────────

    pub fn neg(&self, a: &Tensor) -> Result<Tensor> {
        let na = self.node_of(a, "neg")?;
        let data = a.values().iter().map(|x| -x).collect();
        self.finish("neg", a.shape().to_vec(), data, || Op::Neg { a: na }, na.is_some())
    }

    /// Multiply by a compile-time-known scalar constant.
    pub fn scale(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let na = self.node_of(a, "scale")?;
        let data = a.values().iter().map(|x| c * x).collect();
        self.finish("scale", a.shape().to_vec(), data, || Op::Scale { a: na, c }, na.is_some())
    }

    /// Add a scalar constant to every element.
    pub fn add_const(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let na = self.node_of(a, "add_const")?;
        let data = a.values().iter().map(|x| x + c).collect();
        self.finish("add_const", a.shape().to_vec(), data, || Op::AddConst { a: na }, na.is_some())
    }

    /// Broadcast-add a length-1 tensor to every element (differentiable in both).
    pub fn add_scalar(&self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        Self::want_scalar(s, "add_scalar")?;
        let (na, ns) = (self.node_of(a, "add_scalar")?, self.node_of(s, "add_scalar")?);
        let sv = s.values()[0];
        let data = a.values().iter().map(|x| x + sv).collect();
        self.finish(
            "add_scalar",
            a.shape().to_vec(),
            data,
            || Op::AddScalar { a: na, s: ns },
            na.is_some() || ns.is_some(),
        )
    }

    /// Broadcast-multiply by a length-1 tensor (differentiable in both).
    pub fn mul_scalar(&self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        Self::want_scalar(s, "mul_scalar")?;
        let (na, ns) = (self.node_of(a, "mul_scalar")?, self.node_of(s, "mul_scalar")?);
        let sv = s.values()[0];
        let data = a.values().iter().map(|x| x * sv).collect();
        let (av, svv) = (a.data_arc(), s.data_arc());
        self.finish(
            "mul_scalar",
            a.shape().to_vec(),
            data,
            || Op::MulScalar { a: na, s: ns, av, sv: svv },
            na.is_some() || ns.is_some(),
        )
    }

    fn want_scalar(s: &Tensor, op: &'static str) -> Result<()> {
        if s.len() != 1 {
            return Err(DiffError::DimensionMismatch {
                op,
                detail: format!("broadcast operand must be length 1, got {:?}", s.shape()),
            });
        }
        Ok(())
    }

    // ── unary elementwise ──────────────────────────────────────────────

    fn unary(&self, a: &Tensor, kind: UnaryKind, op_name: &'static str) -> Result<Tensor> {
        let na = self.node_of(a, op_name)?;
        let data: Vec<f64> = a
            .values()
            .iter()
            .map(|&x| match kind {
                UnaryKind::Tanh => x.tanh(),
                UnaryKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
                UnaryKind::Relu => x.max(0.0),
                // ln(1 + e^x), computed in a form stable for large |x|.
                UnaryKind::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
                UnaryKind::Exp => x.exp(),
                UnaryKind::Log => x.ln(),
                UnaryKind::Square => x * x,
            })
            .collect();
        // Tanh/sigmoid/exp reuse the output in their derivative; the rest need
        // the input.
        let saved: Saved = match kind {
            UnaryKind::Tanh | UnaryKind::Sigmoid | UnaryKind::Exp => Arc::new(data.clone()),
            _ => a.data_arc(),
        };
        self.finish(op_name, a.shape().to_vec(), data, || Op::Unary { a: na, kind, saved }, na.is_some())
    }

    pub fn tanh(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Tanh, "tanh")
    }
    pub fn sigmoid(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Sigmoid, "sigmoid")
    }
    pub fn relu(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Relu, "relu")
    }
    pub fn softplus(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Softplus, "softplus")
    }
    pub fn exp(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Exp, "exp")
    }
    pub fn log(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Log, "log")
    }
    pub fn square(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, UnaryKind::Square, "square")
    }

    /// Clamp to `[lo, hi]`; gradient passes where `lo ≤ x ≤ hi` (inclusive).
    pub fn clamp(&self, a: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(DiffError::InvalidValue {
                op: "clamp",
                detail: format!("lo {lo} > hi {hi}"),
            });
        }
        let na = self.node_of(a, "clamp")?;
        let data = a.values().iter().map(|x| x.clamp(lo, hi)).collect();
        let saved = a.data_arc();
        self.finish("clamp", a.shape().to_vec(), data, || Op::Clamp { a: na, lo, hi, saved }, na.is_some())
    }

    // ── reductions ─────────────────────────────────────────────────────

    pub fn sum(&self, a: &Tensor) -> Result<Tensor> {
        let na = self.node_of(a, "sum")?;
        let s: f64 = a.values().iter().sum();
        self.finish("sum", vec![1], vec![s], || Op::Sum { a: na, n: a.len() }, na.is_some())
    }

    pub fn mean(&self, a: &Tensor) -> Result<Tensor> {
        let na = self.node_of(a, "mean")?;
        let n = a.len();
        let s: f64 = a.values().iter().sum::<f64>() / n as f64;
        self.finish("mean", vec![1], vec![s], || Op::Mean { a: na, n }, na.is_some())
    }

    /// Sum a rank-2 tensor along `axis` (0 → column sums `[n]`, 1 → row sums `[m]`).
    pub fn sum_axis(&self, a: &Tensor, axis: usize) -> Result<Tensor> {
        if a.shape().len() != 2 || axis > 1 {
            return Err(DiffError::DimensionMismatch {
                op: "sum_axis",
                detail: format!("shape {:?}, axis {axis}", a.shape()),
            });
        }
        let na = self.node_of(a, "sum_axis")?;
        let (rows, cols) = (a.shape()[0], a.shape()[1]);
        let (out_len, mut data) = if axis == 0 { (cols, vec![0.0; cols]) } else { (rows, vec![0.0; rows]) };
        for i in 0..rows {
            for j in 0..cols {
                let v = a.values()[i * cols + j];
                if axis == 0 {
                    data[j] += v;
                } else {
                    data[i] += v;
                }
            }
        }
        let _ = out_len;
        self.finish(
            "sum_axis",
            vec![data.len()],
            data,
            || Op::SumAxis { a: na, axis, rows, cols },
            na.is_some(),
        )
    }

    // ── structural ops ─────────────────────────────────────────────────

    /// Concatenate two tensors. Rank-1: axis 0 only. Rank-2: axis 0 stacks
    /// rows, axis 1 appends columns.
    pub fn concat(&self, a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
        let (na, nb) = (self.node_of(a, "concat")?, self.node_of(b, "concat")?);
        let (a_shape, b_shape) = (a.shape().to_vec(), b.shape().to_vec());
        let (shape, data): (Vec<usize>, Vec<f64>) = match (a.shape().len(), b.shape().len(), axis) {
            (1, 1, 0) => {
                let mut d = a.values().to_vec();
                d.extend_from_slice(b.values());
                (vec![a.len() + b.len()], d)
            }
            (2, 2, 0) if a.shape()[1] == b.shape()[1] => {
                let mut d = a.values().to_vec();
                d.extend_from_slice(b.values());
                (vec![a.shape()[0] + b.shape()[0], a.shape()[1]], d)
            }
            (2, 2, 1) if a.shape()[0] == b.shape()[0] => {
                let (m, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let mut d = Vec::with_capacity(m * (ca + cb));
                for i in 0..m {
                    d.extend_from_slice(&a.values()[i * ca..(i + 1) * ca]);
                    d.extend_from_slice(&b.values()[i * cb..(i + 1) * cb]);
                }
                (vec![m, ca + cb], d)
            }
            _ => {
                return Err(DiffError::DimensionMismatch {
                    op: "concat",
                    detail: format!("{:?} ++ {:?} along axis {axis}", a.shape(), b.shape()),
                })
            }
        };
        self.finish(
            "concat",
            shape,
            data,
            || Op::Concat { a: na, b: nb, axis, a_shape, b_shape },
            na.is_some() || nb.is_some(),
        )
    }

    /// Contiguous slice of a rank-1 tensor.
    pub fn slice(&self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        if a.shape().len() != 1 || start + len > a.len() || len == 0 {
            return Err(DiffError::DimensionMismatch {
                op: "slice",
                detail: format!("[{start}..{}] of shape {:?}", start + len, a.shape()),
            });
        }
        let na = self.node_of(a, "slice")?;
        let data = a.values()[start..start + len].to_vec();
        self.finish(
            "slice",
            vec![len],
            data,
            || Op::Slice { a: na, start, src_len: a.len() },
            na.is_some(),
        )
    }

    /// Column slice `[*, start..start+len]` of a rank-2 tensor.
    pub fn slice_cols(&self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        if a.shape().len() != 2 || start + len > a.shape()[1] || len == 0 {
            return Err(DiffError::DimensionMismatch {
                op: "slice_cols",
                detail: format!("cols [{start}..{}] of shape {:?}", start + len, a.shape()),
            });
        }
        let na = self.node_of(a, "slice_cols")?;
        let (rows, cols) = (a.shape()[0], a.shape()[1]);
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&a.values()[i * cols + start..i * cols + start + len]);
        }
        self.finish(
            "slice_cols",
            vec![rows, len],
            data,
            || Op::SliceCols { a: na, start, len, rows, cols },
            na.is_some(),
        )
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Returns gradients for every
    /// parameter leaf (by [`ParamId`]) and every input leaf reachable from
    /// `loss`. Deterministic: same graph → bitwise-identical gradients.
    pub fn backward(&self, loss: &Tensor, store: &ParameterStore) -> Result<Gradients> {
        if loss.len() != 1 {
            return Err(DiffError::DimensionMismatch {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", loss.shape()),
            });
        }
        let root = match loss.node {
            Some(n) if loss.tape_epoch == self.epoch => n as usize,
            Some(_) => return Err(DiffError::TapeMismatch { op: "backward" }),
            None => {
                return Err(DiffError::Detached {
                    detail: "loss value is not recorded on this tape".into(),
                })
            }
        };
        let inner = self.inner.borrow();
        let nodes = &inner.nodes;
        let mut adj: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        adj[root] = Some(vec![1.0]);

        let mut grads = Gradients::new(store.len());

        for idx in (0..=root).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &nodes[idx].op {
                Op::LeafParam(pid) => grads.accumulate_param(*pid, &g),
                Op::LeafInput => grads.accumulate_input(idx as u32, &g),
                Op::Add { a, b } => {
                    acc(&mut adj, *a, g.len(), |d| add_assign(d, &g));
                    acc(&mut adj, *b, g.len(), |d| add_assign(d, &g));
                }
                Op::Sub { a, b } => {
                    acc(&mut adj, *a, g.len(), |d| add_assign(d, &g));
                    acc(&mut adj, *b, g.len(), |d| sub_assign(d, &g));
                }
                Op::Mul { a, b, av, bv } => {
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di += g[i] * bv[i];
                        }
                    });
                    acc(&mut adj, *b, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di += g[i] * av[i];
                        }
                    });
                }
                Op::Div { a, b, av, bv } => {
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di += g[i] / bv[i];
                        }
                    });
                    acc(&mut adj, *b, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di -= g[i] * av[i] / (bv[i] * bv[i]);
                        }
                    });
                }
                Op::MatMul { a, b, av, bv, m, k, n } => {
                    let (m, k, n) = (*m, *k, *n);
                    acc(&mut adj, *a, m * k, |d| {
                        // dA = dC · Bᵀ
                        for i in 0..m {
                            for j in 0..n {
                                let gij = g[i * n + j];
                                if gij == 0.0 {
                                    continue;
                                }
                                for p in 0..k {
                                    d[i * k + p] += gij * bv[p * n + j];
                                }
                            }
                        }
                    });
                    acc(&mut adj, *b, k * n, |d| {
                        // dB = Aᵀ · dC
                        for i in 0..m {
                            for p in 0..k {
                                let aip = av[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    d[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                    });
                }
                Op::AddBias { a, b, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    acc(&mut adj, *a, rows * cols, |d| add_assign(d, &g));
                    acc(&mut adj, *b, cols, |d| {
                        for i in 0..rows {
                            for j in 0..cols {
                                d[j] += g[i * cols + j];
                            }
                        }
                    });
                }
                Op::MulRow { a, b, av, bv, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    acc(&mut adj, *a, rows * cols, |d| {
                        for i in 0..rows {
                            for j in 0..cols {
                                d[i * cols + j] += g[i * cols + j] * bv[j];
                            }
                        }
                    });
                    acc(&mut adj, *b, cols, |d| {
                        for i in 0..rows {
                            for j in 0..cols {
                                d[j] += g[i * cols + j] * av[i * cols + j];
                            }
                        }
                    });
                }
                Op::DivRow { a, b, av, bv, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    acc(&mut adj, *a, rows * cols, |d| {
                        for i in 0..rows {
                            for j in 0..cols {
                                d[i * cols + j] += g[i * cols + j] / bv[j];
                            }
                        }
                    });
                    acc(&mut adj, *b, cols, |d| {
                        for i in 0..rows {
                            for j in 0..cols {
                                d[j] -= g[i * cols + j] * av[i * cols + j] / (bv[j] * bv[j]);
                            }
                        }
                    });
                }
                Op::Neg { a } => acc(&mut adj, *a, g.len(), |d| sub_assign(d, &g)),
                Op::Scale { a, c } => {
                    let c = *c;
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di += c * g[i];
                        }
                    });
                }
                Op::AddConst { a } => acc(&mut adj, *a, g.len(), |d| add_assign(d, &g)),
                Op::Unary { a, kind, saved } => {
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            let s = saved[i];
                            let dy = match kind {
                                UnaryKind::Tanh => 1.0 - s * s,
                                UnaryKind::Sigmoid => s * (1.0 - s),
                                UnaryKind::Relu => {
                                    if s > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                UnaryKind::Softplus => 1.0 / (1.0 + (-s).exp()),
                                UnaryKind::Exp => s,
                                UnaryKind::Log => 1.0 / s,
                                UnaryKind::Square => 2.0 * s,
                            };
                            *di += g[i] * dy;
                        }
                    });
                }
                Op::Sum { a, n } => {
                    let g0 = g[0];
                    acc(&mut adj, *a, *n, |d| {
                        for di in d.iter_mut() {
                            *di += g0;
                        }
                    });
                }
                Op::Mean { a, n } => {
                    let g0 = g[0] / *n as f64;
                    acc(&mut adj, *a, *n, |d| {
                        for di in d.iter_mut() {
                            *di += g0;
                        }
                    });
                }
                Op::SumAxis { a, axis, rows, cols } => {
                    let (axis, rows, cols) = (*axis, *rows, *cols);
                    acc(&mut adj, *a, rows * cols, |d| {
                        for i in 0..rows {
                            for j in 0..cols {
                                d[i * cols + j] += if axis == 0 { g[j] } else { g[i] };
                            }
                        }
                    });
                }
                Op::Concat { a, b, axis, a_shape, b_shape } => {
                    let a_len: usize = a_shape.iter().product();
                    let b_len: usize = b_shape.iter().product();
                    if *axis == 1 && a_shape.len() == 2 {
                        let (m, ca, cb) = (a_shape[0], a_shape[1], b_shape[1]);
                        let w = ca + cb;
                        acc(&mut adj, *a, a_len, |d| {
                            for i in 0..m {
                                for j in 0..ca {
                                    d[i * ca + j] += g[i * w + j];
                                }
                            }
                        });
                        acc(&mut adj, *b, b_len, |d| {
                            for i in 0..m {
                                for j in 0..cb {
                                    d[i * cb + j] += g[i * w + ca + j];
                                }
                            }
                        });
                    } else {
                        acc(&mut adj, *a, a_len, |d| add_assign(d, &g[..a_len]));
                        acc(&mut adj, *b, b_len, |d| add_assign(d, &g[a_len..]));
                    }
                }
                Op::Slice { a, start, src_len } => {
                    let (start, src_len, out_len) = (*start, *src_len, nodes[idx].out_len);
                    acc(&mut adj, *a, src_len, |d| {
                        for i in 0..out_len {
                            d[start + i] += g[i];
                        }
                    });
                }
                Op::SliceCols { a, start, len, rows, cols } => {
                    let (start, len, rows, cols) = (*start, *len, *rows, *cols);
                    acc(&mut adj, *a, rows * cols, |d| {
                        for i in 0..rows {
                            for j in 0..len {
                                d[i * cols + start + j] += g[i * len + j];
                            }
                        }
                    });
                }
                Op::Minimum { a, b, av, bv } => {
                    // Ties route to b (see `minimum`).
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            if av[i] < bv[i] {
                                *di += g[i];
                            }
                        }
                    });
                    acc(&mut adj, *b, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            if av[i] >= bv[i] {
                                *di += g[i];
                            }
                        }
                    });
                }
                Op::Clamp { a, lo, hi, saved } => {
                    let (lo, hi) = (*lo, *hi);
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            if saved[i] >= lo && saved[i] <= hi {
                                *di += g[i];
                            }
                        }
                    });
                }
                Op::AddScalar { a, s } => {
                    acc(&mut adj, *a, g.len(), |d| add_assign(d, &g));
                    let total: f64 = g.iter().sum();
                    acc(&mut adj, *s, 1, |d| d[0] += total);
                }
                Op::MulScalar { a, s, av, sv } => {
                    let svv = sv[0];
                    acc(&mut adj, *a, g.len(), |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di += g[i] * svv;
                        }
                    });
                    let dot: f64 = g.iter().zip(av.iter()).map(|(gi, ai)| gi * ai).sum();
                    acc(&mut adj, *s, 1, |d| d[0] += dot);
                }
            }
        }
        Ok(grads)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn push_node(inner: &mut Inner, op: Op, out_len: usize) -> u32 {
    let id = inner.nodes.len() as u32;
    inner.nodes.push(Node { op, out_len });
    id
}

fn attach(mut t: Tensor, node: u32, epoch: u64) -> Tensor {
    t.node = Some(node);
    t.tape_epoch = epoch;
    t
}

fn acc(adj: &mut [Option<Vec<f64>>], idx: In, len: usize, f: impl FnOnce(&mut [f64])) {
    if let Some(i) = idx {
        let slot = adj[i as usize].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }
}

fn add_assign(d: &mut [f64], g: &[f64]) {
    for (di, gi) in d.iter_mut().zip(g) {
        *di += gi;
    }
}

fn sub_assign(d: &mut [f64], g: &[f64]) {
    for (di, gi) in d.iter_mut().zip(g) {
        *di -= gi;
    }
}
