//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Values live in [`Tensor`]s. Trainable tensors are owned by a
//! [`ParamStore`]; a forward pass binds them into a [`Graph`], which records
//! every primitive so that [`Graph::backward`] can propagate gradients back
//! into the store.

mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod suite;

pub use gradcheck::{finite_difference_check, GradCheckReport, Parameterized};
pub use graph::{CustomBackward, Gradients, Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use suite::{primitive_cases, CaseFn, PrimitiveCase};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; len]).expect("full() called with a zero extent")
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| T::of(v)).collect())
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.values[i * n + i] = T::one();
        }
        t
    }

    /// Uniform initialisation on `[-limit, limit]`.
    pub fn uniform<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let values = (0..len)
            .map(|_| T::of(rng.gen_range(-limit..=limit)))
            .collect();
        Self::new(shape.to_vec(), values).expect("uniform() called with a zero extent")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.values[i * cols..(i + 1) * cols]
    }

    pub fn item(&self) -> Result<T> {
        if self.values.len() != 1 {
            return Err(Error::Shape(format!("item() on shape {:?}", self.shape)));
        }
        Ok(self.values[0])
    }

    pub fn get(&self, index: &[usize]) -> T {
        let mut flat = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < ext, "index {index:?} out of bounds at axis {i}");
            flat = flat * ext + ix;
        }
        self.values[flat]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.values.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape,
                rhs: shape,
            });
        }
        self.shape = shape;
        if let Some(g) = &self.grad {
            debug_assert_eq!(g.len(), len);
        }
        Ok(self)
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn accumulate_grad(&mut self, delta: Option<&[T]>) {
        let grad = self
            .grad
            .get_or_insert_with(|| vec![T::zero(); self.values.len()]);
        if let Some(delta) = delta {
            for (g, &d) in grad.iter_mut().zip(delta) {
                *g += d;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }
}

/// Identifies one parameter by position inside a [`ParamStore`] and its
/// clones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    store: u64,
    index: usize,
}

impl ParamId {
    pub fn index(self) -> usize {
        self.index
    }
}

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Named collection of trainable tensors.
///
/// Each store carries a process-unique identity so one [`Graph`] can mix
/// parameters from several stores and route gradients to the right owner.
#[derive(Debug)]
pub struct ParamStore<T> {
    id: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            names: self.names.clone(),
            tensors: self.tensors.clone(),
            by_name: self.by_name.clone(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            tensors: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub(crate) fn store_id(&self) -> u64 {
        self.id
    }

    /// Registers a trainable tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let index = self.tensors.len();
        self.by_name.insert(name.clone(), index);
        self.names.push(name);
        self.tensors.push(tensor.with_requires_grad());
        ParamId {
            store: self.id,
            index,
        }
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&index| ParamId {
            store: self.id,
            index,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(|index| ParamId {
            store: self.id,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    fn check(&self, id: ParamId) {
        assert!(id.index < self.tensors.len(), "parameter id out of range for this store");
    }

    /// `id` re-labelled as belonging to this store. Ids are positional, so
    /// an id from a store stays valid for every clone of it.
    pub(crate) fn rebind(&self, id: ParamId) -> ParamId {
        self.check(id);
        ParamId {
            store: self.id,
            index: id.index,
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        self.check(id);
        &self.tensors[id.index]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        self.check(id);
        &mut self.tensors[id.index]
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.check(id);
        &self.names[id.index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name).map(|&i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.by_name.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        self.iter()
            .map(|(name, t)| TensorRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                values: t.to_f64_vec(),
            })
            .collect()
    }

    /// Overwrites values from serialised records; every name and shape must
    /// match exactly.
    pub fn load_records(&mut self, records: &[TensorRecord]) -> Result<()> {
        if records.len() != self.tensors.len() {
            return Err(Error::Compatibility(format!(
                "expected {} parameter tensors, found {}",
                self.tensors.len(),
                records.len()
            )));
        }
        for rec in records {
            let index = *self.by_name.get(&rec.name).ok_or_else(|| {
                Error::Compatibility(format!("unknown parameter `{}`", rec.name))
            })?;
            let t = &mut self.tensors[index];
            if t.shape() != rec.shape.as_slice() || rec.values.len() != t.len() {
                return Err(Error::Compatibility(format!(
                    "parameter `{}` has shape {:?}, checkpoint says {:?} with {} values",
                    rec.name,
                    t.shape(),
                    rec.shape,
                    rec.values.len()
                )));
            }
            for (dst, &src) in t.values_mut().iter_mut().zip(&rec.values) {
                *dst = T::of(src);
            }
        }
        Ok(())
    }
}

/// Serialised form of a named tensor: row-major 64-bit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_buffer() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn grad_accumulates_with_matching_shape() {
        let mut t = Tensor::<f64>::zeros(&[2, 2]);
        t.accumulate_grad(Some(&[1.0, 2.0, 3.0, 4.0]));
        t.accumulate_grad(Some(&[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn records_round_trip_and_validate_shapes() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let recs = store.to_records();
        let mut other = ParamStore::<f64>::new();
        other.insert("w", Tensor::zeros(&[2, 2]));
        other.load_records(&recs).unwrap();
        assert_eq!(other.by_name("w").unwrap().values(), &[1.0, 2.0, 3.0, 4.0]);

        let mut wrong = ParamStore::<f64>::new();
        wrong.insert("w", Tensor::zeros(&[4, 1]));
        assert!(matches!(wrong.load_records(&recs), Err(Error::Compatibility(_))));
    }

    #[test]
    fn cloned_store_gets_new_identity() {
        let mut store = ParamStore::<f32>::new();
        store.insert("a", Tensor::zeros(&[1]));
        let copy = store.clone();
        assert_ne!(store.store_id(), copy.store_id());
    }
}
