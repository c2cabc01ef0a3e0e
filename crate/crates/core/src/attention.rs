//! Directional query components and the relation classifier.
//!
//! Each query recurrence reads `[soft_{t∓1}; x_t]`, attends over the memory
//! with `s_{t,j} = v·tanh(C·m_j + D·q_t)`, normalizes the scores into a
//! headword distribution, and forms the soft headword embedding as the
//! distribution-weighted memory sum.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::{gru_step, GruNodes, GruParams};
use crate::error::Result;
use crate::numerics::{Graph, NodeId, RealMatrix, RealVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

#[derive(Clone, Copy, Debug)]
pub struct QueryNodes {
    pub gru: GruNodes,
    pub c: NodeId,
    pub d: NodeId,
    pub v: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct RelationNodes {
    pub u: NodeId,
    pub w: NodeId,
    pub bias: NodeId,
}

/// Query-side options shared by both directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryOptions {
    /// Feed the previous soft headword embedding into the recurrence.
    pub feed_soft_head: bool,
    /// Include `m_0` (ROOT) in the soft headword sum.
    pub soft_head_root: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            feed_soft_head: true,
            soft_head_root: true,
        }
    }
}

/// Memory vectors with their `C·m_j` keys precomputed for one query
/// component. Keys do not depend on `t`, so they are built once.
pub struct ProjectedMemory {
    pub items: Vec<NodeId>,
    pub keys: Vec<NodeId>,
}

pub fn project_memory(g: &mut Graph, memory: &[NodeId], c: NodeId) -> Result<ProjectedMemory> {
    let keys = memory
        .iter()
        .map(|&m| g.matvec(c, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectedMemory {
        items: memory.to_vec(),
        keys,
    })
}

/// Headword distribution over `m_0..m_n` for query `q`. Adds the number of
/// score evaluations to `counter`.
pub fn attend(
    g: &mut Graph,
    q: NodeId,
    memory: &ProjectedMemory,
    params: &QueryNodes,
    counter: &mut usize,
) -> Result<NodeId> {
    let dq = g.matvec(params.d, q)?;
    let mut scores = Vec::with_capacity(memory.keys.len());
    for &key in &memory.keys {
        let pre = g.add(key, dq)?;
        let act = g.tanh(pre);
        scores.push(g.dot(params.v, act)?);
        *counter += 1;
    }
    let s = g.concat(&scores)?;
    g.softmax(s)
}

pub fn soft_head(
    g: &mut Graph,
    a: NodeId,
    memory: &ProjectedMemory,
    include_root: bool,
) -> Result<NodeId> {
    if include_root || memory.items.len() == 1 {
        g.weighted_sum(a, 0, &memory.items)
    } else {
        g.weighted_sum(a, 1, &memory.items[1..])
    }
}

/// Per-token outputs of one query component, indexed by `t - 1` in sentence
/// order whichever way the recurrence ran.
#[derive(Clone, Debug, Default)]
pub struct QueryTrace {
    pub q: Vec<NodeId>,
    pub a: Vec<NodeId>,
    pub soft: Vec<NodeId>,
}

/// Runs one query component over `x_1..x_n`.
pub fn run_query(
    g: &mut Graph,
    direction: Direction,
    memory: &ProjectedMemory,
    x: &[NodeId],
    params: &QueryNodes,
    options: QueryOptions,
    counter: &mut usize,
) -> Result<QueryTrace> {
    let n = x.len();
    let hidden = g.value(params.v).rows();
    let mem_dim = g.value(memory.items[0]).rows();
    let order: Vec<usize> = match direction {
        Direction::LeftToRight => (0..n).collect(),
        Direction::RightToLeft => (0..n).rev().collect(),
    };
    let mut steps: Vec<Option<(NodeId, NodeId, NodeId)>> = vec![None; n];
    let zero_soft = g.zeros(mem_dim);
    let mut q = g.zeros(hidden);
    let mut prev_soft = zero_soft;
    for t in order {
        let fed = if options.feed_soft_head { prev_soft } else { zero_soft };
        let input = g.concat(&[fed, x[t]])?;
        q = gru_step(g, &params.gru, q, input)?;
        let a = attend(g, q, memory, params, counter)?;
        let soft = soft_head(g, a, memory, options.soft_head_root)?;
        steps[t] = Some((q, a, soft));
        prev_soft = soft;
    }
    let mut trace = QueryTrace::default();
    for (q, a, soft) in steps.into_iter().flatten() {
        trace.q.push(q);
        trace.a.push(a);
        trace.soft.push(soft);
    }
    Ok(trace)
}

/// `softmax(U·[soft_l; soft_r] + W·[q_l; q_r] + bias)`.
pub fn predict_relation(
    g: &mut Graph,
    soft_l: NodeId,
    soft_r: NodeId,
    q_l: NodeId,
    q_r: NodeId,
    params: &RelationNodes,
) -> Result<NodeId> {
    let soft = g.concat(&[soft_l, soft_r])?;
    let q = g.concat(&[q_l, q_r])?;
    let us = g.matvec(params.u, soft)?;
    let wq = g.matvec(params.w, q)?;
    let s = g.add(us, wq)?;
    let s = g.add(s, params.bias)?;
    g.softmax(s)
}

/// Owned query-component weights.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryParams {
    pub gru: GruParams,
    pub c: RealMatrix,
    pub d: RealMatrix,
    pub v: RealMatrix,
}

impl QueryParams {
    /// `hidden` is `d`; the memory dimension is `2d`; the GRU reads `2d + d`.
    pub fn zeros(hidden: usize) -> Self {
        let e = 2 * hidden;
        QueryParams {
            gru: GruParams::zeros(e + hidden, hidden),
            c: RealMatrix::zeros(hidden, e),
            d: RealMatrix::zeros(hidden, hidden),
            v: RealMatrix::zeros(hidden, 1),
        }
    }

    pub fn random(hidden: usize, std: f64, rng: &mut impl Rng) -> Self {
        let e = 2 * hidden;
        let normal = Normal::new(0.0, std).expect("valid std");
        let mut draw = |rows, cols| RealMatrix::from_fn(rows, cols, |_, _| normal.sample(rng));
        let c = draw(hidden, e);
        let d = draw(hidden, hidden);
        let v = draw(hidden, 1);
        QueryParams {
            gru: GruParams::random(e + hidden, hidden, std, rng),
            c,
            d,
            v,
        }
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> QueryNodes {
        QueryNodes {
            gru: self.gru.bind(g),
            c: g.param(&self.c),
            d: g.param(&self.d),
            v: g.param(&self.v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationParams {
    pub u: RealMatrix,
    pub w: RealMatrix,
    pub bias: RealMatrix,
}

impl RelationParams {
    pub fn zeros(labels: usize, hidden: usize) -> Self {
        RelationParams {
            u: RealMatrix::zeros(labels, 4 * hidden),
            w: RealMatrix::zeros(labels, 2 * hidden),
            bias: RealMatrix::zeros(labels, 1),
        }
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> RelationNodes {
        RelationNodes {
            u: g.param(&self.u),
            w: g.param(&self.w),
            bias: g.param(&self.bias),
        }
    }

    pub fn predict(
        &self,
        soft_l: &RealVector,
        soft_r: &RealVector,
        q_l: &RealVector,
        q_r: &RealVector,
    ) -> Result<RealVector> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let ins: Vec<NodeId> = [soft_l, soft_r, q_l, q_r]
            .iter()
            .map(|v| g.input_vector((*v).clone()))
            .collect();
        let y = predict_relation(&mut g, ins[0], ins[1], ins[2], ins[3], &p)?;
        Ok(g.vector(y))
    }
}

/// Value-level [`attend`] for a fixed memory.
pub fn attend_values(q: &RealVector, memory: &[RealVector], params: &QueryParams) -> Result<RealVector> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let items: Vec<NodeId> = memory.iter().map(|m| g.input_vector(m.clone())).collect();
    let projected = project_memory(&mut g, &items, p.c)?;
    let qn = g.input_vector(q.clone());
    let mut count = 0;
    let a = attend(&mut g, qn, &projected, &p, &mut count)?;
    Ok(g.vector(a))
}

pub fn soft_head_values(a: &RealVector, memory: &[RealVector], include_root: bool) -> Result<RealVector> {
    let mut g = Graph::new();
    let items: Vec<NodeId> = memory.iter().map(|m| g.input_vector(m.clone())).collect();
    let an = g.input_vector(a.clone());
    let projected = ProjectedMemory {
        keys: Vec::new(),
        items,
    };
    let s = soft_head(&mut g, an, &projected, include_root)?;
    Ok(g.vector(s))
}

/// Value-level query trace: `(q_t, a_t, soft_t)` for `t = 1..n`.
pub type QueryValues = Vec<(RealVector, RealVector, RealVector)>;

pub fn run_query_values(
    direction: Direction,
    memory: &[RealVector],
    x: &[RealVector],
    params: &QueryParams,
    options: QueryOptions,
) -> Result<(QueryValues, usize)> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let items: Vec<NodeId> = memory.iter().map(|m| g.input_vector(m.clone())).collect();
    let projected = project_memory(&mut g, &items, p.c)?;
    let xs: Vec<NodeId> = x.iter().map(|v| g.input_vector(v.clone())).collect();
    let mut count = 0;
    let trace = run_query(&mut g, direction, &projected, &xs, &p, options, &mut count)?;
    let values = (0..x.len())
        .map(|t| (g.vector(trace.q[t]), g.vector(trace.a[t]), g.vector(trace.soft[t])))
        .collect();
    Ok((values, count))
}
