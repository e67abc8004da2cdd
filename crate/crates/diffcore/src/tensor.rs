use std::fmt;
use std::sync::Arc;

use crate::error::DiffError;
use crate::Result;

/// Dense row-major `f64` tensor of rank 0–2.
///
/// Scalars are represented as shape `[1]`. Data is shared (`Arc`), so clones
/// are cheap; mutation happens only through owning containers such as
/// [`crate::ParameterStore`].
///
/// `node` links the value into the tape that produced it (`None` for
/// constants and detached values). The pair `(tape_epoch, node)` is what the
/// backward pass uses; user code never touches it directly.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    pub(crate) node: Option<u32>,
    pub(crate) tape_epoch: u64,
}

impl Tensor {
    /// Builds a detached tensor, validating that the element count matches the
    /// shape and that every value is finite.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 2 {
            return Err(DiffError::DimensionMismatch {
                op: "from_vec",
                detail: format!("rank must be 1 or 2, got shape {shape:?}"),
            });
        }
        if expect != data.len() {
            return Err(DiffError::DimensionMismatch {
                op: "from_vec",
                detail: format!("shape {:?} wants {} elements, got {}", shape, expect, data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(DiffError::NonFinite { op: "from_vec" });
        }
        Ok(Self { shape: shape.to_vec(), data: Arc::new(data), node: None, tape_epoch: 0 })
    }

    /// Length-1 tensor holding a single scalar.
    pub fn scalar(v: f64) -> Result<Self> {
        Self::from_vec(&[1], vec![v])
    }

    /// Rank-1 tensor from a slice.
    pub fn vector(data: &[f64]) -> Result<Self> {
        Self::from_vec(&[data.len()], data.to_vec())
    }

    /// Rank-2 tensor (rows × cols) from a flat row-major slice.
    pub fn matrix(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(&[rows, cols], data.to_vec())
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        Self::from_vec(shape, vec![0.0; n])
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { shape, data: Arc::new(data), node: None, tape_epoch: 0 }
    }

    pub(crate) fn from_shared(shape: Vec<usize>, data: Arc<Vec<f64>>) -> Self {
        Self { shape, data, node: None, tape_epoch: 0 }
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows (rank-2) or 1 (rank-1).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Number of columns (rank-2) or the length (rank-1).
    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            self.shape[0]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// The single element of a length-1 tensor.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(DiffError::DimensionMismatch {
                op: "item",
                detail: format!("expected a scalar, got shape {:?}", self.shape),
            });
        }
        Ok(self.data[0])
    }

    /// Returns the same values with no tape linkage (stops gradient flow).
    pub fn detached(&self) -> Self {
        Self { shape: self.shape.clone(), data: Arc::clone(&self.data), node: None, tape_epoch: 0 }
    }

    /// True if this value participates in some tape's graph.
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.len() <= 8 {
            write!(f, " {:?}", &self.data[..])
        } else {
            write!(f, " [{} values]", self.len())
        }
    }
}
