//! Parameter arena, lazily allocated gradients and seeded initialisation.
//!
//! Layers refer to parameters by [`ParamId`], so two networks holding the same id share one
//! tensor: gradients from both paths land in the same slot and one optimizer update moves both.

use pdanet_core::rng::rng_for;
use pdanet_core::Scalar;
use rand_distr::{Distribution, Normal};

use crate::error::{NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Zero-mean normal with this standard deviation, drawn from a stream keyed by the name.
    Normal(f64),
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    seed: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore { params: Vec::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a parameter. The values depend on `(seed, name)` only, never on registration order.
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(NnError::Validation(format!("parameter {name} registered twice")));
        }
        let len: usize = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![T::zero(); len],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).map_err(|e| NnError::Config(e.to_string()))?;
                let mut rng = rng_for(self.seed, name, 0);
                (0..len).map(|_| T::lit(dist.sample(&mut rng))).collect()
            }
        };
        self.params.push(Param { name: name.to_string(), shape: shape.to_vec(), value });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total scalar count of `ids`, each id counted once.
    pub fn count(&self, ids: &[ParamId]) -> usize {
        let mut ids = ids.to_vec();
        ids.sort();
        ids.dedup();
        ids.iter().map(|&id| self.params[id.0].value.len()).sum()
    }

    /// Copy of every value, for before/after comparisons.
    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }
}

/// Gradient buffers parallel to a [`ParamStore`], allocated on first write.
#[derive(Clone, Debug)]
pub struct Grads<T> {
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Grads { slots: vec![None; store.len()] }
    }

    /// Zero-initialised accumulator for `id`.
    pub fn slot(&mut self, id: ParamId, len: usize) -> &mut [T] {
        self.slots[id.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.slots[id.0].as_deref()
    }

    pub fn touched(&self) -> Vec<ParamId> {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_some()).map(|(i, _)| ParamId(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
