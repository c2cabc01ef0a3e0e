//! Named learnable tensors.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, RealMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Bias vectors start at zero instead of a random draw.
    pub bias: bool,
}

impl TensorSpec {
    pub fn weight(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        TensorSpec {
            name: name.into(),
            rows,
            cols,
            bias: false,
        }
    }

    pub fn bias(name: impl Into<String>, rows: usize) -> Self {
        TensorSpec {
            name: name.into(),
            rows,
            cols: 1,
            bias: true,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every learnable tensor of a model, in a fixed order. Vectors are stored
/// as single-column matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    specs: Vec<TensorSpec>,
    tensors: Vec<RealMatrix>,
    index: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn from_fn(specs: Vec<TensorSpec>, mut f: impl FnMut(&TensorSpec) -> RealMatrix) -> Self {
        let tensors = specs.iter().map(|s| f(s)).collect();
        let index = specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        ParameterSet {
            specs,
            tensors,
            index,
        }
    }

    pub fn zeros(specs: Vec<TensorSpec>) -> Self {
        Self::from_fn(specs, |s| RealMatrix::zeros(s.rows, s.cols))
    }

    /// Rebuilds a set from stored tensors, checking shapes against `specs`.
    pub fn from_tensors(specs: Vec<TensorSpec>, tensors: Vec<RealMatrix>) -> Result<Self> {
        if specs.len() != tensors.len() {
            return Err(Error::Archive(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if t.shape() != (s.rows, s.cols) {
                return Err(Error::Archive(format!(
                    "tensor {} has shape {}x{}, expected {}x{}",
                    s.name,
                    t.rows(),
                    t.cols(),
                    s.rows,
                    s.cols
                )));
            }
        }
        let mut tensors = tensors.into_iter();
        Ok(Self::from_fn(specs, |_| tensors.next().expect("length checked")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, i: usize) -> &TensorSpec {
        &self.specs[i]
    }

    pub fn get(&self, i: usize) -> &RealMatrix {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut RealMatrix {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&RealMatrix> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TensorSpec, &RealMatrix)> {
        self.specs.iter().zip(&self.tensors)
    }

    pub fn total_size(&self) -> usize {
        self.tensors.iter().map(RealMatrix::len).sum()
    }

    /// Registers every tensor as a borrowed input node, in set order.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> Vec<NodeId> {
        self.tensors.iter().map(|t| g.param(t)).collect()
    }
}
