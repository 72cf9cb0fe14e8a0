//! Named, shaped parameter arrays.

use std::collections::HashMap;

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, IxDyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to an entry of a [`ParameterStore`]. Handles are positional, so a
/// gradient store created by [`ParameterStore::zeros_like`] shares them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: ArrayD<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a zero-filled entry.
    pub fn register(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, ArrayD::zeros(IxDyn(shape)))
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value });
        Ok(ParamId(id))
    }

    /// Registers an entry filled from `U(-limit, limit)`.
    pub fn register_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        limit: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let id = self.register(name, shape)?;
        if limit > 0.0 {
            let lim = T::lit(limit);
            for v in self.entries[id.0].value.iter_mut() {
                *v = rng.random_range(-lim..=lim);
            }
        }
        Ok(id)
    }

    /// Glorot-style uniform init for a weight matrix of shape `[fan_out, fan_in, ...]`.
    pub fn register_glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.register_uniform(name, shape, limit, rng)
    }

    pub fn fill(&mut self, id: ParamId, v: T) {
        self.entries[id.0].value.fill(v);
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.entries[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&ArrayD<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn vec(&self, id: ParamId) -> ArrayView1<'_, T> {
        let v = &self.entries[id.0].value;
        v.view()
            .into_shape_with_order(v.len())
            .expect("parameter is contiguous")
    }

    pub fn vec_mut(&mut self, id: ParamId) -> ArrayViewMut1<'_, T> {
        let v = &mut self.entries[id.0].value;
        let n = v.len();
        v.view_mut()
            .into_shape_with_order(n)
            .expect("parameter is contiguous")
    }

    /// 2-D view: first axis kept, remaining axes flattened.
    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, T> {
        let v = &self.entries[id.0].value;
        let rows = v.shape()[0];
        let cols = v.len() / rows.max(1);
        v.view()
            .into_shape_with_order((rows, cols))
            .expect("parameter is contiguous")
    }

    pub fn mat_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, T> {
        let v = &mut self.entries[id.0].value;
        let rows = v.shape()[0];
        let cols = v.len() / rows.max(1);
        v.view_mut()
            .into_shape_with_order((rows, cols))
            .expect("parameter is contiguous")
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: ArrayD::zeros(e.value.raw_dim()),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Elementwise `self += other`; layouts must agree.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.value += &b.value;
        }
    }

    pub fn zero(&mut self) {
        for e in &mut self.entries {
            match e.value.as_slice_mut() {
                Some(s) => s.fill(T::zero()),
                None => e.value.fill(T::zero()),
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for e in &mut self.entries {
            e.value.mapv_inplace(|v| v * s);
        }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.mapv(|v| U::lit(v.to_f64_lossy())),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Checks that `other` has exactly this store's names and shapes, naming
    /// the first offending entry otherwise.
    pub fn check_layout(&self, other: &Self) -> std::result::Result<(), String> {
        for e in &self.entries {
            match other.by_name(&e.name) {
                None => return Err(format!("missing entry `{}`", e.name)),
                Some(v) if v.shape() != e.value.shape() => {
                    return Err(format!(
                        "entry `{}` has shape {:?}, expected {:?}",
                        e.name,
                        v.shape(),
                        e.value.shape()
                    ))
                }
                _ => {}
            }
        }
        if let Some(extra) = other.entries.iter().find(|e| self.id(&e.name).is_none()) {
            return Err(format!("unexpected entry `{}`", extra.name));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.value.iter().all(|v| v.is_finite()))
    }
}
