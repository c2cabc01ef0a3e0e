//! GRU cell with a leaky-rectified candidate, and the bidirectional memory
//! encoder that turns token embeddings into headword vectors.
//!
//! Cell equations, with `in` the input and `h` the previous state:
//!
//! ```text
//! z  = σ(W_z·in + U_z·h + b_z)
//! r  = σ(W_r·in + U_r·h + b_r)
//! c  = LReL(W_h·in + U_h·(r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ c
//! ```

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::numerics::{Graph, NodeId, RealMatrix, RealVector};

/// Graph handles for one GRU's tensors.
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub w_z: NodeId,
    pub u_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub u_r: NodeId,
    pub b_r: NodeId,
    pub w_h: NodeId,
    pub u_h: NodeId,
    pub b_h: NodeId,
}

fn gate(g: &mut Graph, w: NodeId, u: NodeId, b: NodeId, input: NodeId, h: NodeId) -> Result<NodeId> {
    let wi = g.matvec(w, input)?;
    let uh = g.matvec(u, h)?;
    let s = g.add(wi, uh)?;
    g.add(s, b)
}

pub fn gru_step(g: &mut Graph, p: &GruNodes, h_prev: NodeId, input: NodeId) -> Result<NodeId> {
    let z_pre = gate(g, p.w_z, p.u_z, p.b_z, input, h_prev)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.w_r, p.u_r, p.b_r, input, h_prev)?;
    let r = g.sigmoid(r_pre);
    let rh = g.hadamard(r, h_prev)?;
    let c_pre = gate(g, p.w_h, p.u_h, p.b_h, input, rh)?;
    let c = g.lrel(c_pre);
    // h + z ⊙ (c − h) == (1 − z) ⊙ h + z ⊙ c
    let delta = g.sub(c, h_prev)?;
    let step = g.hadamard(z, delta)?;
    g.add(h_prev, step)
}

/// Runs the left-to-right and right-to-left recurrences over `x_0..x_n`
/// (position 0 is ROOT) and returns `m_j = [h^l_j; h^r_j]` for every position.
pub fn encode_memory(
    g: &mut Graph,
    x: &[NodeId],
    left: &GruNodes,
    right: &GruNodes,
    hidden: usize,
) -> Result<Vec<NodeId>> {
    let n1 = x.len();
    let mut forward = Vec::with_capacity(n1);
    let mut h = g.zeros(hidden);
    for &xj in x {
        h = gru_step(g, left, h, xj)?;
        forward.push(h);
    }
    let mut backward = vec![h; n1];
    let mut h = g.zeros(hidden);
    for j in (0..n1).rev() {
        h = gru_step(g, right, h, x[j])?;
        backward[j] = h;
    }
    forward
        .into_iter()
        .zip(backward)
        .map(|(l, r)| g.concat(&[l, r]))
        .collect()
}

/// Owned GRU weights, for use outside a full model.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: RealMatrix,
    pub u_z: RealMatrix,
    pub b_z: RealMatrix,
    pub w_r: RealMatrix,
    pub u_r: RealMatrix,
    pub b_r: RealMatrix,
    pub w_h: RealMatrix,
    pub u_h: RealMatrix,
    pub b_h: RealMatrix,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || RealMatrix::zeros(hidden_dim, input_dim);
        let u = || RealMatrix::zeros(hidden_dim, hidden_dim);
        let b = || RealMatrix::zeros(hidden_dim, 1);
        GruParams {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    /// Gaussian weights and biases with standard deviation `std`.
    pub fn random(input_dim: usize, hidden_dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        let mut p = Self::zeros(input_dim, hidden_dim);
        for m in p.tensors_mut() {
            for v in m.as_mut_slice() {
                *v = normal.sample(rng);
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn tensors(&self) -> [&RealMatrix; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h,
            &self.u_h, &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut RealMatrix; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> GruNodes {
        GruNodes {
            w_z: g.param(&self.w_z),
            u_z: g.param(&self.u_z),
            b_z: g.param(&self.b_z),
            w_r: g.param(&self.w_r),
            u_r: g.param(&self.u_r),
            b_r: g.param(&self.b_r),
            w_h: g.param(&self.w_h),
            u_h: g.param(&self.u_h),
            b_h: g.param(&self.b_h),
        }
    }

    pub fn step(&self, h_prev: &RealVector, input: &RealVector) -> Result<RealVector> {
        let mut g = Graph::new();
        let nodes = self.bind(&mut g);
        let h = g.input_vector(h_prev.clone());
        let x = g.input_vector(input.clone());
        let out = gru_step(&mut g, &nodes, h, x)?;
        Ok(g.vector(out))
    }
}

/// Headword vectors `m_0..m_n`; `m_0` belongs to ROOT.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorySequence {
    pub vectors: Vec<RealVector>,
}

impl MemorySequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, RealVector::dim)
    }
}

/// Value-level memory encoding with owned parameters.
pub fn encode_memory_values(
    x: &[RealVector],
    left: &GruParams,
    right: &GruParams,
) -> Result<MemorySequence> {
    let mut g = Graph::new();
    let l = left.bind(&mut g);
    let r = right.bind(&mut g);
    let xs: Vec<NodeId> = x.iter().map(|v| g.input_vector(v.clone())).collect();
    let m = encode_memory(&mut g, &xs, &l, &r, left.hidden_dim())?;
    Ok(MemorySequence {
        vectors: m.into_iter().map(|id| g.vector(id)).collect(),
    })
}
