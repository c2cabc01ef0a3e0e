//! Graph-based dependency parsing with bi-directional attention.
//!
//! A bidirectional GRU encodes every token (plus a ROOT position) into a
//! memory of headword vectors. Two query recurrences, one per direction,
//! attend over that memory to produce headword distributions for each
//! modifier. Training maximizes the likelihood of the gold head under both
//! directions, which pushes the two distributions to agree; decoding combines
//! them as arc scores and runs a greedy or maximum-spanning-tree search.

pub mod attention;
pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod params;
pub mod trainer;

pub use error::{Error, Result};
