//! Full parser network: parameter layout, sentence encoding, forward pass.

use std::fmt;
use std::str::FromStr;

use crate::attention::{
    predict_relation, project_memory, run_query, Direction, QueryNodes, QueryOptions, QueryTrace,
    RelationNodes,
};
use crate::corpus::{Channel, Sentence, Vocabulary, ROOT};
use crate::decoder::{combine_scores, label_arcs, single_scores, ArcScores, DecodeMode, ParseTree};
use crate::embedding::{token_embed, EmbeddingNodes, TokenIds};
use crate::encoder::{encode_memory, GruNodes};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, RealMatrix, RealVector};
use crate::params::{ParameterSet, TensorSpec};

/// Which query components take part in training and decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Directions {
    Both,
    LeftToRight,
    RightToLeft,
}

impl Directions {
    pub fn uses(self, d: Direction) -> bool {
        matches!(
            (self, d),
            (Directions::Both, _)
                | (Directions::LeftToRight, Direction::LeftToRight)
                | (Directions::RightToLeft, Direction::RightToLeft)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Directions::Both => "both",
            Directions::LeftToRight => "l2r",
            Directions::RightToLeft => "r2l",
        }
    }
}

impl fmt::Display for Directions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Directions {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Directions::Both),
            "l2r" => Ok(Directions::LeftToRight),
            "r2l" => Ok(Directions::RightToLeft),
            other => Err(Error::Config(format!(
                "directions must be both, l2r or r2l, got '{}'",
                other
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// `d`: hidden size of every recurrence and of the token embeddings.
    pub hidden: usize,
    /// `p_add`: row count of the additive embedding tables.
    pub embed_dim: usize,
    pub directions: Directions,
    pub query: QueryOptions,
}

impl ModelConfig {
    pub fn new(hidden: usize) -> Self {
        ModelConfig {
            hidden,
            embed_dim: hidden,
            directions: Directions::Both,
            query: QueryOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GruIdx {
    w_z: usize,
    u_z: usize,
    b_z: usize,
    w_r: usize,
    u_r: usize,
    b_r: usize,
    w_h: usize,
    u_h: usize,
    b_h: usize,
}

impl GruIdx {
    fn push(specs: &mut Vec<TensorSpec>, prefix: &str, input: usize, hidden: usize) -> Self {
        let mut add = |spec: TensorSpec| {
            specs.push(spec);
            specs.len() - 1
        };
        let w = |g: &str| TensorSpec::weight(format!("{}.w_{}", prefix, g), hidden, input);
        let u = |g: &str| TensorSpec::weight(format!("{}.u_{}", prefix, g), hidden, hidden);
        let b = |g: &str| TensorSpec::bias(format!("{}.b_{}", prefix, g), hidden);
        GruIdx {
            w_z: add(w("z")),
            u_z: add(u("z")),
            b_z: add(b("z")),
            w_r: add(w("r")),
            u_r: add(u("r")),
            b_r: add(b("r")),
            w_h: add(w("h")),
            u_h: add(u("h")),
            b_h: add(b("h")),
        }
    }

    fn nodes(&self, n: &[NodeId]) -> GruNodes {
        GruNodes {
            w_z: n[self.w_z],
            u_z: n[self.u_z],
            b_z: n[self.b_z],
            w_r: n[self.w_r],
            u_r: n[self.u_r],
            b_r: n[self.b_r],
            w_h: n[self.w_h],
            u_h: n[self.u_h],
            b_h: n[self.b_h],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QueryIdx {
    gru: GruIdx,
    c: usize,
    d: usize,
    v: usize,
}

impl QueryIdx {
    fn push(specs: &mut Vec<TensorSpec>, prefix: &str, hidden: usize) -> Self {
        let e = 2 * hidden;
        let gru = GruIdx::push(specs, &format!("{}.gru", prefix), e + hidden, hidden);
        specs.push(TensorSpec::weight(format!("{}.c", prefix), hidden, e));
        let c = specs.len() - 1;
        specs.push(TensorSpec::weight(format!("{}.d", prefix), hidden, hidden));
        let d = specs.len() - 1;
        specs.push(TensorSpec::weight(format!("{}.v", prefix), hidden, 1));
        let v = specs.len() - 1;
        QueryIdx { gru, c, d, v }
    }

    fn nodes(&self, n: &[NodeId]) -> QueryNodes {
        QueryNodes {
            gru: self.gru.nodes(n),
            c: n[self.c],
            d: n[self.d],
            v: n[self.v],
        }
    }
}

/// Positions of every tensor inside the [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Layout {
    tables: Vec<(Channel, usize)>,
    projection: usize,
    projection_bias: usize,
    memory_l2r: GruIdx,
    memory_r2l: GruIdx,
    query_l2r: QueryIdx,
    query_r2l: QueryIdx,
    relation_u: usize,
    relation_w: usize,
    relation_bias: usize,
    specs: Vec<TensorSpec>,
}

impl Layout {
    pub fn new(config: &ModelConfig, vocab: &Vocabulary) -> Self {
        let d = config.hidden;
        let p = config.embed_dim;
        let mut specs = Vec::new();
        let mut tables = Vec::new();
        for (channel, table) in vocab.channels() {
            specs.push(TensorSpec::weight(format!("embed.{}", channel), p, table.len()));
            tables.push((channel, specs.len() - 1));
        }
        specs.push(TensorSpec::weight("project.weight", d, p));
        let projection = specs.len() - 1;
        specs.push(TensorSpec::bias("project.bias", d));
        let projection_bias = specs.len() - 1;
        let memory_l2r = GruIdx::push(&mut specs, "memory.l2r", d, d);
        let memory_r2l = GruIdx::push(&mut specs, "memory.r2l", d, d);
        let query_l2r = QueryIdx::push(&mut specs, "query.l2r", d);
        let query_r2l = QueryIdx::push(&mut specs, "query.r2l", d);
        let m = vocab.relations().len();
        specs.push(TensorSpec::weight("relation.u", m, 4 * d));
        let relation_u = specs.len() - 1;
        specs.push(TensorSpec::weight("relation.w", m, 2 * d));
        let relation_w = specs.len() - 1;
        specs.push(TensorSpec::bias("relation.bias", m));
        let relation_bias = specs.len() - 1;
        Layout {
            tables,
            projection,
            projection_bias,
            memory_l2r,
            memory_r2l,
            query_l2r,
            query_r2l,
            relation_u,
            relation_w,
            relation_bias,
            specs,
        }
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn table_index(&self, channel: Channel) -> Option<usize> {
        self.tables.iter().find(|(c, _)| *c == channel).map(|(_, i)| *i)
    }

    /// Tensor indices owned by one query component.
    pub fn query_tensors(&self, d: Direction) -> Vec<usize> {
        let q = match d {
            Direction::LeftToRight => self.query_l2r,
            Direction::RightToLeft => self.query_r2l,
        };
        let g = q.gru;
        vec![
            g.w_z, g.u_z, g.b_z, g.w_r, g.u_r, g.b_r, g.w_h, g.u_h, g.b_h, q.c, q.d, q.v,
        ]
    }
}

/// Sentence converted to vocabulary ids. Position 0 is ROOT.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSentence {
    pub tokens: Vec<TokenIds>,
    pub heads: Vec<usize>,
    pub rels: Vec<usize>,
}

impl EncodedSentence {
    /// Number of real tokens.
    pub fn len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-sentence outputs as plain values.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    /// `n x (n+1)` headword probabilities per direction; absent when the
    /// direction is disabled.
    pub a_l: Option<RealMatrix>,
    pub a_r: Option<RealMatrix>,
    pub q_l: Vec<RealVector>,
    pub q_r: Vec<RealVector>,
    pub soft_l: Vec<RealVector>,
    pub soft_r: Vec<RealVector>,
    /// `n x m` relation distributions.
    pub y: RealMatrix,
    pub score_evaluations: usize,
}

/// The recorded graph of one sentence.
pub struct Forward<'a> {
    pub graph: Graph<'a>,
    /// Node of every parameter tensor, in [`ParameterSet`] order.
    pub params: Vec<NodeId>,
    pub left: Option<QueryTrace>,
    pub right: Option<QueryTrace>,
    pub y: Vec<NodeId>,
    pub score_evaluations: usize,
}

fn rows_to_matrix(g: &Graph, rows: &[NodeId]) -> RealMatrix {
    let cols = rows.first().map_or(0, |&r| g.value(r).rows());
    let data = rows.iter().flat_map(|&r| g.value(r).as_slice().to_vec()).collect();
    RealMatrix::from_vec(rows.len(), cols, data).expect("uniform rows")
}

impl AttentionRecord {
    /// Arc scores from whichever directions ran.
    pub fn arc_scores(&self) -> Result<ArcScores> {
        match (&self.a_l, &self.a_r) {
            (Some(l), Some(r)) => combine_scores(l, r),
            (Some(a), None) | (None, Some(a)) => single_scores(a),
            (None, None) => Err(Error::Contract("no attention direction ran".to_owned())),
        }
    }
}

impl Forward<'_> {
    pub fn record(&self) -> AttentionRecord {
        let g = &self.graph;
        let vectors = |ids: &[NodeId]| ids.iter().map(|&i| g.vector(i)).collect::<Vec<_>>();
        let side = |t: &Option<QueryTrace>| match t {
            Some(t) => (Some(rows_to_matrix(g, &t.a)), vectors(&t.q), vectors(&t.soft)),
            None => (None, Vec::new(), Vec::new()),
        };
        let (a_l, q_l, soft_l) = side(&self.left);
        let (a_r, q_r, soft_r) = side(&self.right);
        AttentionRecord {
            a_l,
            a_r,
            q_l,
            q_r,
            soft_l,
            soft_r,
            y: rows_to_matrix(g, &self.y),
            score_evaluations: self.score_evaluations,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub layout: Layout,
    pub params: ParameterSet,
}

impl Model {
    /// A model with all-zero parameters; see `trainer::init_params`.
    pub fn zeros(config: ModelConfig, vocab: Vocabulary) -> Self {
        let layout = Layout::new(&config, &vocab);
        let params = ParameterSet::zeros(layout.specs().to_vec());
        Model {
            config,
            vocab,
            layout,
            params,
        }
    }

    pub fn with_params(config: ModelConfig, vocab: Vocabulary, params: ParameterSet) -> Result<Self> {
        let layout = Layout::new(&config, &vocab);
        if params.specs() != layout.specs() {
            return Err(Error::Archive(
                "parameter tensors do not match the model layout".to_owned(),
            ));
        }
        Ok(Model {
            config,
            vocab,
            layout,
            params,
        })
    }

    pub fn relation_count(&self) -> usize {
        self.vocab.relations().len()
    }

    pub fn encode(&self, sentence: &Sentence) -> EncodedSentence {
        let channels = self.vocab.active_channels();
        let mut tokens = Vec::with_capacity(sentence.len() + 1);
        tokens.push(TokenIds(channels.iter().map(|_| vec![ROOT]).collect()));
        for token in sentence.tokens() {
            let ids = channels
                .iter()
                .map(|&c| {
                    let table = self.vocab.channel(c).expect("active channel");
                    c.strings(token).into_iter().map(|s| table.lookup(s)).collect()
                })
                .collect();
            tokens.push(TokenIds(ids));
        }
        let relations = self.vocab.relations();
        EncodedSentence {
            tokens,
            heads: sentence.heads(),
            rels: sentence
                .tokens()
                .iter()
                .map(|t| relations.lookup_or_unk(&t.rel))
                .collect(),
        }
    }

    pub fn forward<'a>(&'a self, sentence: &EncodedSentence) -> Result<Forward<'a>> {
        if sentence.is_empty() {
            return Err(Error::Contract("cannot run an empty sentence".to_owned()));
        }
        let mut g = Graph::new();
        let nodes = self.params.bind(&mut g);
        let l = &self.layout;
        let d = self.config.hidden;

        let embed = EmbeddingNodes {
            tables: l.tables.iter().map(|(c, i)| (*c, nodes[*i])).collect(),
            projection: nodes[l.projection],
            bias: nodes[l.projection_bias],
        };
        let x = sentence
            .tokens
            .iter()
            .map(|ids| token_embed(&mut g, &embed, ids))
            .collect::<Result<Vec<_>>>()?;
        let memory = encode_memory(
            &mut g,
            &x,
            &l.memory_l2r.nodes(&nodes),
            &l.memory_r2l.nodes(&nodes),
            d,
        )?;

        let mut count = 0;
        let mut run = |g: &mut Graph<'a>, dir: Direction, idx: &QueryIdx| -> Result<Option<QueryTrace>> {
            if !self.config.directions.uses(dir) {
                return Ok(None);
            }
            let q = idx.nodes(&nodes);
            let projected = project_memory(g, &memory, q.c)?;
            run_query(g, dir, &projected, &x[1..], &q, self.config.query, &mut count).map(Some)
        };
        let left = run(&mut g, Direction::LeftToRight, &l.query_l2r)?;
        let right = run(&mut g, Direction::RightToLeft, &l.query_r2l)?;

        let rel = RelationNodes {
            u: nodes[l.relation_u],
            w: nodes[l.relation_w],
            bias: nodes[l.relation_bias],
        };
        let zero_soft = g.zeros(2 * d);
        let zero_q = g.zeros(d);
        let pick = |t: &Option<QueryTrace>, i: usize| match t {
            Some(t) => (t.soft[i], t.q[i]),
            None => (zero_soft, zero_q),
        };
        let mut y = Vec::with_capacity(sentence.len());
        for i in 0..sentence.len() {
            let (soft_l, q_l) = pick(&left, i);
            let (soft_r, q_r) = pick(&right, i);
            y.push(predict_relation(&mut g, soft_l, soft_r, q_l, q_r, &rel)?);
        }

        Ok(Forward {
            graph: g,
            params: nodes,
            left,
            right,
            y,
            score_evaluations: count,
        })
    }
}

impl Model {
    /// Decodes heads with `mode` and labels every arc.
    pub fn parse(&self, sentence: &Sentence, mode: DecodeMode, single_root: bool) -> Result<ParseTree> {
        if sentence.is_empty() {
            return Ok(ParseTree {
                heads: Vec::new(),
                rels: Vec::new(),
            });
        }
        let record = self.forward(&self.encode(sentence))?.record();
        let scores = record.arc_scores()?;
        if scores.floored > 0 {
            log::debug!("{} attention probabilities floored before log", scores.floored);
        }
        let heads = mode.decode(&scores, single_root);
        let rels = label_arcs(&heads, &record.y)?;
        Ok(ParseTree { heads, rels })
    }
}
