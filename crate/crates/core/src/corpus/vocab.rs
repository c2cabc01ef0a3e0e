//! Per-channel string tables with singleton replacement.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use super::{Sentence, Token};
use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const ROOT: usize = 1;

const UNK_NAME: &str = "<unk>";
const ROOT_NAME: &str = "<root>";
const ABSENT: &str = "_";

/// Token feature channels that can feed the additive embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Form,
    Lemma,
    Cpos,
    Fpos,
    Feats,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Form,
        Channel::Lemma,
        Channel::Cpos,
        Channel::Fpos,
        Channel::Feats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Form => "form",
            Channel::Lemma => "lemma",
            Channel::Cpos => "cpos",
            Channel::Fpos => "fpos",
            Channel::Feats => "feats",
        }
    }

    pub fn is_pos(self) -> bool {
        matches!(self, Channel::Cpos | Channel::Fpos)
    }

    /// The token's strings on this channel. FEATS yields one string per
    /// atom; other channels yield exactly one, with `_` for absent values.
    pub fn strings(self, token: &Token) -> Vec<&str> {
        match self {
            Channel::Form => vec![token.form.as_str()],
            Channel::Lemma => vec![token.lemma.as_deref().unwrap_or(ABSENT)],
            Channel::Cpos => vec![token.cpos.as_deref().unwrap_or(ABSENT)],
            Channel::Fpos => vec![token.fpos.as_str()],
            Channel::Feats => token.feats.iter().map(String::as_str).collect(),
        }
    }

    /// Whether any token of the corpus carries a value on this channel.
    pub fn present_in(self, sentences: &[Sentence]) -> bool {
        sentences.iter().flat_map(|s| s.tokens()).any(|t| match self {
            Channel::Form | Channel::Fpos => true,
            Channel::Lemma => t.lemma.is_some(),
            Channel::Cpos => t.cpos.is_some(),
            Channel::Feats => !t.feats.is_empty(),
        })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel '{}'", s)))
    }
}

/// Dense id table. Ids 0 and 1 are reserved for the unknown token and ROOT.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelVocab {
    strings: Vec<String>,
    ids: HashMap<String, usize>,
}

impl ChannelVocab {
    fn with_reserved() -> Self {
        ChannelVocab {
            strings: vec![UNK_NAME.to_owned(), ROOT_NAME.to_owned()],
            ids: HashMap::new(),
        }
    }

    /// Rebuilds a table from its serialized string list.
    pub fn from_strings(strings: Vec<String>) -> Result<Self> {
        if strings.len() < 2 {
            return Err(Error::Archive(
                "vocabulary lacks reserved entries".to_owned(),
            ));
        }
        let ids = strings
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(ChannelVocab { strings, ids })
    }

    fn push(&mut self, s: &str) {
        if !self.ids.contains_key(s) {
            self.ids.insert(s.to_owned(), self.strings.len());
            self.strings.push(s.to_owned());
        }
    }

    /// Never fails: unseen strings map to [`UNK`].
    pub fn lookup(&self, s: &str) -> usize {
        self.ids.get(s).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, s: &str) -> bool {
        self.ids.contains_key(s)
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn string(&self, id: usize) -> &str {
        &self.strings[id]
    }

    pub fn strings(&self) -> &[String] {
        &self.strings
    }
}

/// Relation labels. Every training label is kept; id 0 stands for labels
/// never seen in training.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVocab {
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Archive("empty relation vocabulary".to_owned()));
        }
        let ids = labels
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(LabelVocab { labels, ids })
    }

    pub fn lookup(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    /// Id of `label`, or [`UNK`] when unseen.
    pub fn lookup_or_unk(&self, label: &str) -> usize {
        self.lookup(label).unwrap_or(UNK)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    channels: BTreeMap<Channel, ChannelVocab>,
    relations: LabelVocab,
}

impl Vocabulary {
    pub fn from_parts(channels: BTreeMap<Channel, ChannelVocab>, relations: LabelVocab) -> Self {
        Vocabulary {
            channels,
            relations,
        }
    }

    pub fn channel(&self, channel: Channel) -> Option<&ChannelVocab> {
        self.channels.get(&channel)
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, &ChannelVocab)> {
        self.channels.iter().map(|(c, v)| (*c, v))
    }

    pub fn active_channels(&self) -> Vec<Channel> {
        self.channels.keys().copied().collect()
    }

    pub fn relations(&self) -> &LabelVocab {
        &self.relations
    }
}

/// Builds vocabularies over `channels` from training sentences. Strings seen
/// once are left out so that they resolve to the unknown id.
pub fn build_vocab(train: &[Sentence], channels: &[Channel]) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::Corpus(
            "cannot build a vocabulary from an empty training set".to_owned(),
        ));
    }
    let mut tables = BTreeMap::new();
    for &channel in channels {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for token in train.iter().flat_map(|s| s.tokens()) {
            for s in channel.strings(token) {
                *counts.entry(s).or_default() += 1;
            }
        }
        let mut table = ChannelVocab::with_reserved();
        for (s, _) in counts.into_iter().filter(|&(_, c)| c >= 2) {
            table.push(s);
        }
        tables.insert(channel, table);
    }

    let mut labels: Vec<String> = train
        .iter()
        .flat_map(|s| s.tokens())
        .map(|t| t.rel.clone())
        .collect();
    labels.sort();
    labels.dedup();
    labels.insert(0, UNK_NAME.to_owned());
    let relations = LabelVocab::from_labels(labels)?;

    Ok(Vocabulary {
        channels: tables,
        relations,
    })
}
