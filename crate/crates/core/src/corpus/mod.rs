//! Treebank ingestion, vocabularies, dev splits, and tree queries.

mod conll;
mod split;
mod tree;
mod vocab;

pub use conll::{parse_conll, read_conll, write_conll, write_conll_to, write_gold_to};
pub use split::{dev_size, split_dev, CorpusSplit, Lcg, DEV_FRACTION, MIN_SPLIT_SENTENCES};
pub use tree::{crossed_arcs, is_tree};
pub use vocab::{build_vocab, Channel, ChannelVocab, LabelVocab, Vocabulary, ROOT, UNK};

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub form: String,
    pub lemma: Option<String>,
    pub cpos: Option<String>,
    pub fpos: String,
    pub feats: Vec<String>,
    /// Gold head position, 0 for ROOT.
    pub head: usize,
    pub rel: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    pub fn is_tree(&self) -> bool {
        is_tree(&self.heads())
    }

    pub fn crossed_arcs(&self) -> std::collections::BTreeSet<usize> {
        crossed_arcs(&self.heads())
    }
}
