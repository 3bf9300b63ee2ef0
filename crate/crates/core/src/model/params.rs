use std::collections::HashMap;

use assan_autograd::{Graph, Real, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Index of a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered model weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Total number of scalar weights.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Records every tensor as a leaf of `graph`; the returned handles are
    /// indexed by [`ParamId`].
    pub fn attach<U: Real>(&self, graph: &mut Graph<U>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| graph.leaf(t.cast(), trainable))
            .collect()
    }

    /// Replaces every tensor with the same-named tensor of `other`, which must
    /// hold exactly the same names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Incompatible(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let src = other
                .by_name(name)
                .ok_or_else(|| Error::Incompatible(format!("missing tensor {name}")))?;
            if src.shape() != t.shape() {
                return Err(Error::Incompatible(format!(
                    "tensor {name}: expected shape {:?}, found {:?}",
                    t.shape(),
                    src.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }
}

/// Weight initialization policy.
#[derive(Clone, Copy, Debug)]
pub struct InitConfig {
    pub std: f64,
    /// Zero the last projection of every residual branch so a fresh network
    /// starts as an identity map around each block.
    pub zero_residual_outputs: bool,
    pub seed: u64,
}

impl InitConfig {
    pub fn standard(seed: u64) -> Self {
        Self {
            std: 0.02,
            zero_residual_outputs: true,
            seed,
        }
    }

    /// Every weight random and of order one; used by gradient checks, where
    /// zero or tiny branches would hide errors.
    pub fn randomized(seed: u64, std: f64) -> Self {
        Self {
            std,
            zero_residual_outputs: false,
            seed,
        }
    }
}

/// Parameter builder shared by all blocks during construction.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore<f32>,
    pub init: InitConfig,
    pub rng: ChaCha8Rng,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore<f32>, init: InitConfig) -> Self {
        Self {
            store,
            init,
            rng: ChaCha8Rng::seed_from_u64(init.seed),
        }
    }

    pub fn weight(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let t = Tensor::trunc_normal(shape, self.init.std, &mut self.rng);
        self.store.add(name, t)
    }

    /// Weight of a residual branch's final projection.
    pub fn output_weight(&mut self, name: &str, shape: &[usize]) -> ParamId {
        if self.init.zero_residual_outputs {
            self.store.add(name, Tensor::zeros(shape))
        } else {
            self.weight(name, shape)
        }
    }

    /// Biases start at zero, except in randomized mode.
    pub fn bias(&mut self, name: &str, len: usize) -> ParamId {
        if self.init.zero_residual_outputs {
            self.store.add(name, Tensor::zeros(&[len]))
        } else {
            self.weight(name, &[len])
        }
    }

    pub fn constant(&mut self, name: &str, value: Tensor<f32>) -> ParamId {
        self.store.add(name, value)
    }
}
