use std::collections::HashMap;
use std::sync::Arc;

use crate::error::DiffError;
use crate::tensor::Tensor;
use crate::Result;

/// Handle to one named parameter inside a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

struct Entry {
    name: String,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

/// Ordered collection of named parameter tensors.
///
/// Registration order defines a deterministic flat layout used by
/// [`flatten`](Self::flatten)/[`unflatten`](Self::unflatten), gradient
/// vectors, optimizers, and checkpoints. Values are shared copy-on-write, so
/// a tape holding last step's values stays valid after an optimizer update.
pub struct ParameterStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self { entries: Vec::new(), by_name: HashMap::new() }
    }

    /// Registers a parameter; names must be unique within the store.
    pub fn register(&mut self, name: &str, shape: &[usize], init: Vec<f64>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(DiffError::ParameterStore(format!("duplicate parameter name '{name}'")));
        }
        let expect: usize = shape.iter().product();
        if expect != init.len() || init.is_empty() {
            return Err(DiffError::ParameterStore(format!(
                "parameter '{name}': shape {shape:?} wants {expect} values, got {}",
                init.len()
            )));
        }
        if !init.iter().all(|v| v.is_finite()) {
            return Err(DiffError::ParameterStore(format!("parameter '{name}': non-finite init")));
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.to_string(), id.0);
        self.entries.push(Entry { name: name.to_string(), shape: shape.to_vec(), data: Arc::new(init) });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].data
    }

    /// Detached tensor view of a parameter (shares storage).
    pub fn tensor(&self, id: ParamId) -> Tensor {
        let e = &self.entries[id.0];
        Tensor::from_shared(e.shape.clone(), Arc::clone(&e.data))
    }

    /// Overwrites one parameter's values (shape must match).
    pub fn set_values(&mut self, id: ParamId, values: &[f64]) -> Result<()> {
        let e = &mut self.entries[id.0];
        if values.len() != e.data.len() {
            return Err(DiffError::ParameterStore(format!(
                "parameter '{}': expected {} values, got {}",
                e.name,
                e.data.len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(DiffError::ParameterStore(format!("parameter '{}': non-finite values", e.name)));
        }
        Arc::make_mut(&mut e.data).copy_from_slice(values);
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn flat_len(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Concatenates all parameters in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for e in &self.entries {
            out.extend_from_slice(&e.data);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten); the length must match exactly.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(DiffError::ParameterStore(format!(
                "flat vector has {} values, store wants {}",
                flat.len(),
                self.flat_len()
            )));
        }
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(DiffError::ParameterStore("non-finite values in flat vector".into()));
        }
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.data.len();
            Arc::make_mut(&mut e.data).copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Flat-layout offset of a parameter (for slicing gradient vectors).
    pub fn flat_offset(&self, id: ParamId) -> usize {
        self.entries[..id.0].iter().map(|e| e.data.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Deep copy (used for target networks and policy snapshots).
    pub fn deep_clone(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: Arc::new(e.data.as_ref().clone()),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a backward pass: per-parameter gradients plus gradients for any
/// input leaves. Parameters the loss never touched have `None` (read as zero).
pub struct Gradients {
    by_param: Vec<Option<Vec<f64>>>,
    by_input_node: HashMap<u32, Vec<f64>>,
}

impl Gradients {
    pub(crate) fn new(num_params: usize) -> Self {
        Self { by_param: (0..num_params).map(|_| None).collect(), by_input_node: HashMap::new() }
    }

    pub(crate) fn accumulate_param(&mut self, pid: usize, g: &[f64]) {
        match &mut self.by_param[pid] {
            Some(v) => {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi += gi;
                }
            }
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn accumulate_input(&mut self, node: u32, g: &[f64]) {
        let e = self.by_input_node.entry(node).or_insert_with(|| vec![0.0; g.len()]);
        for (vi, gi) in e.iter_mut().zip(g) {
            *vi += gi;
        }
    }

    /// Gradient for one parameter, if the loss depends on it.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(id.0).and_then(|o| o.as_deref())
    }

    /// Gradient for an input leaf created by [`crate::Tape::input`].
    pub fn input_grad(&self, leaf: &Tensor) -> Option<&[f64]> {
        leaf.node.and_then(|n| self.by_input_node.get(&n)).map(|v| v.as_slice())
    }

    /// Gradient in the store's flat layout; untouched parameters are zero.
    pub fn flat(&self, store: &ParameterStore) -> Vec<f64> {
        let mut out = vec![0.0; store.flat_len()];
        let mut off = 0;
        for id in store.ids() {
            let n = store.values(id).len();
            if let Some(g) = self.get(id) {
                out[off..off + n].copy_from_slice(g);
            }
            off += n;
        }
        out
    }
}
