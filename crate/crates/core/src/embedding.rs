//! Additive token embeddings and pretrained vector loading.
//!
//! A token's input is the sum of one table column per active channel (one per
//! atom for FEATS), projected into model space:
//! `x = LReL(P · Σ E_c[:, id_c] + b)`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::{Channel, ChannelVocab};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, RealMatrix, RealVector};

/// Column ids of one token, one list per active channel, in the same order
/// as the embedding tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIds(pub Vec<Vec<usize>>);

#[derive(Clone, Debug)]
pub struct EmbeddingNodes {
    pub tables: Vec<(Channel, NodeId)>,
    pub projection: NodeId,
    pub bias: NodeId,
}

pub fn token_embed(g: &mut Graph, nodes: &EmbeddingNodes, ids: &TokenIds) -> Result<NodeId> {
    if ids.0.len() != nodes.tables.len() {
        return Err(Error::Contract(format!(
            "{} id lists for {} embedding tables",
            ids.0.len(),
            nodes.tables.len()
        )));
    }
    let additive_dim = g.value(nodes.projection).cols();
    let mut sum: Option<NodeId> = None;
    for ((_, table), channel_ids) in nodes.tables.iter().zip(&ids.0) {
        for &id in channel_ids {
            let col = g.column(*table, id)?;
            sum = Some(match sum {
                Some(acc) => g.add(acc, col)?,
                None => col,
            });
        }
    }
    let sum = match sum {
        Some(s) => s,
        None => g.zeros(additive_dim),
    };
    let projected = g.matvec(nodes.projection, sum)?;
    let shifted = g.add(projected, nodes.bias)?;
    Ok(g.lrel(shifted))
}

/// Owned embedding parameters for use outside a full model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTables {
    /// `p_add x V_c` per channel.
    pub tables: Vec<(Channel, RealMatrix)>,
    /// `d x p_add`.
    pub projection: RealMatrix,
    pub bias: RealMatrix,
}

impl EmbeddingTables {
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> EmbeddingNodes {
        EmbeddingNodes {
            tables: self.tables.iter().map(|(c, m)| (*c, g.param(m))).collect(),
            projection: g.param(&self.projection),
            bias: g.param(&self.bias),
        }
    }

    pub fn embed(&self, ids: &TokenIds) -> Result<RealVector> {
        let mut g = Graph::new();
        let nodes = self.bind(&mut g);
        let x = token_embed(&mut g, &nodes, ids)?;
        Ok(g.vector(x))
    }
}

/// Overwrites columns of the form table with pretrained vectors.
///
/// Accepts the plain text format: an optional `count dim` header, then one
/// `word v_1 .. v_k` line per word. Only words already in `vocab` are used;
/// the unknown-token column is never touched. Returns how many columns were
/// overwritten.
pub fn load_pretrained(path: impl AsRef<Path>, form: &mut RealMatrix, vocab: &ChannelVocab) -> Result<usize> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pretrained(BufReader::new(file), &path.display().to_string(), form, vocab)
}

pub fn read_pretrained(
    reader: impl BufRead,
    name: &str,
    form: &mut RealMatrix,
    vocab: &ChannelVocab,
) -> Result<usize> {
    let dim = form.rows();
    let mut seen = vec![false; form.cols()];
    let mut count = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let header_dim: usize = fields[1].parse().expect("checked");
            if header_dim != dim {
                return Err(Error::parse(
                    name,
                    lineno,
                    format!("dimension mismatch: expected {}, found {}", dim, header_dim),
                ));
            }
            continue;
        }
        let found = fields.len() - 1;
        if found != dim {
            return Err(Error::parse(
                name,
                lineno,
                format!("dimension mismatch: expected {}, found {}", dim, found),
            ));
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(name, lineno, format!("malformed vector: {}", e)))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(name, lineno, "non-finite vector entry"));
        }
        if !vocab.contains(fields[0]) {
            continue;
        }
        let id = vocab.lookup(fields[0]);
        form.set_column(id, &values);
        if !seen[id] {
            seen[id] = true;
            count += 1;
        }
    }
    Ok(count)
}
