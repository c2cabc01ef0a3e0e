use super::Sentence;
use crate::error::{Error, Result};

pub const DEV_FRACTION: f64 = 0.05;
pub const MIN_SPLIT_SENTENCES: usize = 20;

#[derive(Clone, Debug)]
pub struct CorpusSplit {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub seed: u64,
}

/// 64-bit linear congruential generator (Knuth's MMIX constants). Used for
/// dev splits so they come out the same on every platform.
#[derive(Clone, Debug)]
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    /// Uniform in `0..bound` from the high bits.
    pub fn below(&mut self, bound: usize) -> usize {
        let hi = self.next_u64() >> 32;
        ((hi * bound as u64) >> 32) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn dev_size(total: usize) -> usize {
    (total as f64 * DEV_FRACTION).round() as usize
}

/// Holds out a uniformly drawn 5% of the sentences. Both halves keep the
/// input order.
pub fn split_dev(sentences: &[Sentence], seed: u64) -> Result<CorpusSplit> {
    if sentences.len() < MIN_SPLIT_SENTENCES {
        return Err(Error::Corpus(format!(
            "need at least {} sentences to hold out a dev set, got {}",
            MIN_SPLIT_SENTENCES,
            sentences.len()
        )));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    Lcg::new(seed).shuffle(&mut order);
    let mut is_dev = vec![false; sentences.len()];
    for &i in &order[..dev_size(sentences.len())] {
        is_dev[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (s, dev_flag) in sentences.iter().zip(is_dev) {
        if dev_flag {
            dev.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok(CorpusSplit { train, dev, seed })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::corpus::Token;

    fn sentences(n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| {
                Sentence::new(vec![Token {
                    form: format!("w{}", i),
                    lemma: None,
                    cpos: None,
                    fpos: "X".to_owned(),
                    feats: vec![],
                    head: 0,
                    rel: "root".to_owned(),
                }])
            })
            .collect()
    }

    fn dev_forms(split: &CorpusSplit) -> Vec<String> {
        split.dev.iter().map(|s| s.tokens()[0].form.clone()).collect()
    }

    #[test]
    fn five_percent_rounded() {
        assert_eq!(split_dev(&sentences(100), 1).unwrap().dev.len(), 5);
        assert_eq!(split_dev(&sentences(40), 1).unwrap().dev.len(), 2);
        let s = split_dev(&sentences(100), 3).unwrap();
        assert_eq!(s.train.len() + s.dev.len(), 100);
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let input = sentences(57);
        let s = split_dev(&input, 9).unwrap();
        let mut all: Vec<String> = s
            .train
            .iter()
            .chain(&s.dev)
            .map(|s| s.tokens()[0].form.clone())
            .collect();
        all.sort();
        let mut expected: Vec<String> = input.iter().map(|s| s.tokens()[0].form.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn deterministic_per_seed() {
        let input = sentences(100);
        assert_eq!(
            dev_forms(&split_dev(&input, 42).unwrap()),
            dev_forms(&split_dev(&input, 42).unwrap())
        );
    }

    #[test]
    fn seeds_vary_the_split() {
        let input = sentences(100);
        let distinct: HashSet<Vec<String>> = (0..20)
            .map(|seed| dev_forms(&split_dev(&input, seed).unwrap()))
            .collect();
        assert!(distinct.len() >= 2);
    }

    #[test]
    fn too_few_sentences() {
        assert!(split_dev(&sentences(19), 0).is_err());
    }
}
