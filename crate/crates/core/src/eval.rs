//! Attachment scores with punctuation excluded, split by crossed arcs.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{P}+$").expect("valid pattern"))
}

/// False iff every character of `form` is Unicode punctuation.
pub fn is_scoring_token(form: &str) -> bool {
    !punctuation().is_match(form)
}

/// Raw counts over scoring tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub total: usize,
    pub counted: usize,
    pub head_correct: usize,
    pub label_correct: usize,
    pub crossed: usize,
    pub crossed_correct: usize,
    pub uncrossed_correct: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub counts: EvalCounts,
    /// Rates are `None` when their denominator is zero.
    pub uas: Option<f64>,
    pub las: Option<f64>,
    pub crossed_recall: Option<f64>,
    pub uncrossed_recall: Option<f64>,
    pub pct_crossed: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_counts(c: EvalCounts) -> Self {
        EvalReport {
            counts: c,
            uas: ratio(c.head_correct, c.counted),
            las: ratio(c.label_correct, c.counted),
            crossed_recall: ratio(c.crossed_correct, c.crossed),
            uncrossed_recall: ratio(c.uncrossed_correct, c.counted - c.crossed),
            pct_crossed: ratio(c.crossed, c.counted),
        }
    }

    fn rates(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("uas", self.uas),
            ("las", self.las),
            ("crossed_recall", self.crossed_recall),
            ("uncrossed_recall", self.uncrossed_recall),
            ("pct_crossed", self.pct_crossed),
        ]
    }

    /// `key<TAB>value` lines. `decimals` switches rates to percentages
    /// rounded for display; otherwise they are written at full precision.
    pub fn to_tsv(&self, decimals: Option<usize>) -> String {
        let mut out = String::new();
        for (key, value) in self.rates() {
            let text = match (value, decimals) {
                (None, _) => "n/a".to_owned(),
                (Some(v), Some(d)) => format!("{:.*}", d, 100.0 * v),
                (Some(v), None) => format!("{}", v),
            };
            writeln!(out, "{}\t{}", key, text).expect("string write");
        }
        writeln!(out, "counted_tokens\t{}", self.counts.counted).expect("string write");
        writeln!(out, "total_tokens\t{}", self.counts.total).expect("string write");
        out
    }
}

/// Scores `predicted` against `gold`, sentence by sentence. Only HEAD and
/// DEPREL of the predictions are read.
pub fn score(gold: &[Sentence], predicted: &[Sentence]) -> Result<EvalReport> {
    if gold.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut c = EvalCounts::default();
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Contract(format!(
                "sentence {}: gold has {} tokens, prediction has {}",
                i + 1,
                g.len(),
                p.len()
            )));
        }
        let crossed = g.crossed_arcs();
        for (t, (gt, pt)) in g.tokens().iter().zip(p.tokens()).enumerate() {
            c.total += 1;
            if !is_scoring_token(&gt.form) {
                continue;
            }
            c.counted += 1;
            let head_ok = gt.head == pt.head;
            c.head_correct += head_ok as usize;
            c.label_correct += (head_ok && gt.rel == pt.rel) as usize;
            if crossed.contains(&(t + 1)) {
                c.crossed += 1;
                c.crossed_correct += head_ok as usize;
            } else {
                c.uncrossed_correct += head_ok as usize;
            }
        }
    }
    Ok(EvalReport::from_counts(c))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::Token;

    fn sentence(forms: &[&str], heads: &[usize], rels: &[&str]) -> Sentence {
        Sentence::new(
            forms
                .iter()
                .zip(heads)
                .zip(rels)
                .map(|((f, &h), r)| Token {
                    form: f.to_string(),
                    lemma: None,
                    cpos: None,
                    fpos: "X".to_owned(),
                    feats: vec![],
                    head: h,
                    rel: r.to_string(),
                })
                .collect(),
        )
    }

    #[test]
    fn scoring_tokens() {
        assert!(!is_scoring_token(","));
        assert!(!is_scoring_token("..."));
        assert!(!is_scoring_token("«"));
        assert!(is_scoring_token("runs"));
        assert!(is_scoring_token("e.g."));
        assert!(is_scoring_token("$"));
    }

    #[test]
    fn punctuation_error_is_ignored() {
        let gold = sentence(&["a", "b", ",", "c"], &[2, 0, 2, 2], &["x", "root", "p", "y"]);
        let pred = sentence(&["a", "b", ",", "c"], &[2, 0, 1, 2], &["x", "root", "p", "y"]);
        let r = score(&[gold], &[pred]).unwrap();
        assert_eq!(r.counts.counted, 3);
        assert_eq!(r.uas, Some(1.0));
        assert_eq!(r.las, Some(1.0));
    }

    #[test]
    fn identical_and_projective() {
        let gold = sentence(&["a", "b", "c"], &[2, 0, 2], &["x", "root", "y"]);
        let r = score(&[gold.clone()], &[gold]).unwrap();
        assert_eq!((r.uas, r.las), (Some(1.0), Some(1.0)));
        assert_eq!(r.pct_crossed, Some(0.0));
        assert_eq!(r.crossed_recall, None);
        assert!(r.to_tsv(Some(2)).contains("uas\t100.00\n"));
        assert!(r.to_tsv(None).contains("crossed_recall\tn/a\n"));
    }

    #[test]
    fn length_mismatch_names_sentence() {
        let a = sentence(&["a"], &[0], &["root"]);
        let b = sentence(&["a", "b"], &[0, 1], &["root", "x"]);
        let err = score(&[a.clone(), a.clone()], &[a, b]).unwrap_err();
        assert!(err.to_string().contains("sentence 2"), "{}", err);
    }

    fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<usize> {
        // attach each node in a random order to an already attached one
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(rng);
        let mut heads = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            heads[v - 1] = if k == 0 { 0 } else { order[rng.gen_range(0..k)] };
        }
        heads
    }

    fn random_corpus(rng: &mut impl Rng) -> (Vec<Sentence>, Vec<Sentence>) {
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..30 {
            let n = rng.gen_range(1..=9);
            let forms: Vec<&str> = (0..n).map(|_| if rng.gen_bool(0.15) { "." } else { "w" }).collect();
            let labels = ["a", "b"];
            let g_rels: Vec<&str> = (0..n).map(|_| labels[rng.gen_range(0..2)]).collect();
            let p_rels: Vec<&str> = (0..n).map(|_| labels[rng.gen_range(0..2)]).collect();
            gold.push(sentence(&forms, &random_tree(n, rng), &g_rels));
            pred.push(sentence(&forms, &random_tree(n, rng), &p_rels));
        }
        (gold, pred)
    }

    #[test]
    fn report_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (gold, pred) = random_corpus(&mut rng);
            let r = score(&gold, &pred).unwrap();
            let (uas, las) = (r.uas.unwrap(), r.las.unwrap());
            assert!(las <= uas);
            let share = r.pct_crossed.unwrap();
            let combined = share * r.crossed_recall.unwrap_or(0.0)
                + (1.0 - share) * r.uncrossed_recall.unwrap_or(0.0);
            assert_abs_diff_eq!(uas, combined, epsilon = 1e-12);

            let mut idx: Vec<usize> = (0..gold.len()).collect();
            idx.shuffle(&mut rng);
            let g2: Vec<_> = idx.iter().map(|&i| gold[i].clone()).collect();
            let p2: Vec<_> = idx.iter().map(|&i| pred[i].clone()).collect();
            assert_eq!(score(&g2, &p2).unwrap(), r);
        }
    }
}
