use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{Graph, ParamId};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Normal with std `sqrt(2 / fan_in)`.
    KaimingNormal {
        fan_in: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

/// Trainable tensors of a graph, indexed by [`ParamId`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    shapes: Vec<Shape>,
    values: Vec<Vec<T>>,
}

impl<T: Real> ParamStore<T> {
    /// Seeded initialization following each parameter's [`Init`].
    pub fn init(graph: &Graph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::zeros(graph);
        for (spec, values) in graph.param_specs().iter().zip(store.values.iter_mut()) {
            if let Init::KaimingNormal { fan_in } = spec.init {
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("finite std");
                for v in values.iter_mut() {
                    *v = T::from_f64(dist.sample(&mut rng));
                }
            }
        }
        store
    }

    pub fn zeros(graph: &Graph) -> Self {
        let specs = graph.param_specs();
        ParamStore {
            names: specs.iter().map(|s| s.name.clone()).collect(),
            shapes: specs.iter().map(|s| s.shape.clone()).collect(),
            values: specs.iter().map(|s| vec![T::zero(); s.shape.numel()]).collect(),
        }
    }

    /// Binds named tensors onto the graph's parameter layout. Every slot must
    /// be supplied exactly once with the declared shape.
    pub fn from_named(graph: &Graph, named: &[(String, Tensor)]) -> Result<Self> {
        let mut store = ParamStore::zeros(graph);
        let mut seen = vec![false; store.len()];
        for (name, t) in named {
            let idx = store
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Graph(format!("unknown parameter `{name}`")))?;
            if seen[idx] {
                return Err(Error::Graph(format!("duplicate parameter `{name}`")));
            }
            if t.shape() != &store.shapes[idx] {
                return Err(Error::ShapeMismatch {
                    op: "load parameter",
                    left: t.dims().to_vec(),
                    right: store.shapes[idx].dims().to_vec(),
                });
            }
            if !t.dtype().is_float() {
                return Err(Error::UnsupportedDType {
                    op: "load parameter",
                    dtype: t.dtype(),
                });
            }
            store.values[idx] = t.to_real_vec();
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Graph(format!("missing parameter `{}`", store.names[missing])));
        }
        Ok(store)
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .zip(&self.shapes)
            .zip(&self.values)
            .map(|((n, s), v)| {
                (
                    n.clone(),
                    Tensor::from_vec(s.clone(), v.clone()).expect("layout invariant"),
                )
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|&x| U::from_f64(x.to_f64())).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: ParamId) -> &Shape {
        &self.shapes[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.values
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }
}

/// Per-parameter gradient accumulators, shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    values: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        Gradients {
            values: params.values.iter().map(|v| vec![T::zero(); v.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub(crate) fn take(&mut self, id: ParamId) -> Vec<T> {
        std::mem::take(&mut self.values[id.0])
    }

    pub(crate) fn put(&mut self, id: ParamId, v: Vec<T>) {
        self.values[id.0] = v;
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    /// `self += other`, slot by slot in a fixed order.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for v in self.values.iter_mut().flatten() {
            *v *= k;
        }
    }
}
