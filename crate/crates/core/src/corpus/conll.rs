//! CoNLL-X reading and writing.
//!
//! Ten tab-separated columns per token, `_` for absent values, sentences
//! separated by blank lines. PHEAD and PDEPREL are not kept; they are written
//! back as `_`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Sentence, Token};
use crate::error::{Error, Result};

const ABSENT: &str = "_";

fn optional(field: &str) -> Option<String> {
    if field == ABSENT {
        None
    } else {
        Some(field.to_owned())
    }
}

pub fn read_conll(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_conll(file, &path.display().to_string())
}

/// Parses CoNLL-X text; `name` labels error messages.
pub fn parse_conll(reader: impl Read, name: &str) -> Result<Vec<Sentence>> {
    let reader = BufReader::new(reader);
    let mut sentences = Vec::new();
    let mut pending: Vec<(usize, Token)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !pending.is_empty() {
                sentences.push(finish_sentence(std::mem::take(&mut pending), name)?);
            }
            continue;
        }
        let token = parse_token(line, name, lineno, pending.len() + 1)?;
        pending.push((lineno, token));
    }
    if !pending.is_empty() {
        sentences.push(finish_sentence(pending, name)?);
    }
    Ok(sentences)
}

fn parse_token(line: &str, name: &str, lineno: usize, expected_id: usize) -> Result<Token> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(Error::parse(
            name,
            lineno,
            format!("expected 10 tab-separated columns, found {}", cols.len()),
        ));
    }
    let id: usize = cols[0]
        .parse()
        .map_err(|_| Error::parse(name, lineno, format!("non-integer ID '{}'", cols[0])))?;
    if id != expected_id {
        return Err(Error::parse(
            name,
            lineno,
            format!("non-contiguous ID: expected {}, found {}", expected_id, id),
        ));
    }
    if cols[1].is_empty() {
        return Err(Error::parse(name, lineno, "empty FORM"));
    }
    let head: usize = cols[6]
        .parse()
        .map_err(|_| Error::parse(name, lineno, format!("non-integer HEAD '{}'", cols[6])))?;
    if head == id {
        return Err(Error::parse(name, lineno, format!("token {} heads itself", id)));
    }
    let feats = if cols[5] == ABSENT {
        Vec::new()
    } else {
        cols[5].split('|').map(str::to_owned).collect()
    };
    Ok(Token {
        form: cols[1].to_owned(),
        lemma: optional(cols[2]),
        cpos: optional(cols[3]),
        fpos: cols[4].to_owned(),
        feats,
        head,
        rel: cols[7].to_owned(),
    })
}

fn finish_sentence(tokens: Vec<(usize, Token)>, name: &str) -> Result<Sentence> {
    let n = tokens.len();
    for (lineno, token) in &tokens {
        if token.head > n {
            return Err(Error::parse(
                name,
                *lineno,
                format!("HEAD {} out of range for sentence of length {}", token.head, n),
            ));
        }
    }
    Ok(Sentence::new(tokens.into_iter().map(|(_, t)| t).collect()))
}

fn format_token(out: &mut impl Write, id: usize, token: &Token, head: usize, rel: &str) -> std::io::Result<()> {
    let feats = if token.feats.is_empty() {
        ABSENT.to_owned()
    } else {
        token.feats.join("|")
    };
    writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t_\t_",
        id,
        token.form,
        token.lemma.as_deref().unwrap_or(ABSENT),
        token.cpos.as_deref().unwrap_or(ABSENT),
        token.fpos,
        feats,
        head,
        rel
    )
}

/// Writes sentences with predicted heads and relation labels.
pub fn write_conll_to(
    out: &mut impl Write,
    sentences: &[Sentence],
    heads: &[Vec<usize>],
    rels: &[Vec<String>],
) -> Result<()> {
    if heads.len() != sentences.len() || rels.len() != sentences.len() {
        return Err(Error::Contract(format!(
            "{} sentences but {} head rows and {} label rows",
            sentences.len(),
            heads.len(),
            rels.len()
        )));
    }
    let io = |e| Error::io("<output>", e);
    for (i, sentence) in sentences.iter().enumerate() {
        if heads[i].len() != sentence.len() || rels[i].len() != sentence.len() {
            return Err(Error::Contract(format!(
                "sentence {}: {} tokens, {} heads, {} labels",
                i,
                sentence.len(),
                heads[i].len(),
                rels[i].len()
            )));
        }
        for (t, token) in sentence.tokens().iter().enumerate() {
            format_token(out, t + 1, token, heads[i][t], &rels[i][t]).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}

pub fn write_conll(
    path: impl AsRef<Path>,
    sentences: &[Sentence],
    heads: &[Vec<usize>],
    rels: &[Vec<String>],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_conll_to(&mut out, sentences, heads, rels)?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes sentences with their gold annotation.
pub fn write_gold_to(out: &mut impl Write, sentences: &[Sentence]) -> Result<()> {
    let heads: Vec<Vec<usize>> = sentences.iter().map(Sentence::heads).collect();
    let rels: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| s.tokens().iter().map(|t| t.rel.clone()).collect())
        .collect();
    write_conll_to(out, sentences, &heads, &rels)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "1\tHe\t_\tP\tPRP\t_\t2\tnsubj\t_\t_\n2\truns\t_\tV\tVBZ\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn reads_two_token_sentence() {
        let s = parse_conll(TWO.as_bytes(), "mem").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 2);
        assert_eq!(s[0].heads(), vec![2, 0]);
        let he = &s[0].tokens()[0];
        assert_eq!(he.form, "He");
        assert_eq!(he.lemma, None);
        assert_eq!(he.cpos.as_deref(), Some("P"));
        assert_eq!(he.fpos, "PRP");
        assert!(he.feats.is_empty());
        assert_eq!(he.rel, "nsubj");
    }

    #[test]
    fn empty_input_yields_no_sentences() {
        assert!(parse_conll("".as_bytes(), "mem").unwrap().is_empty());
        assert!(parse_conll("\n\n".as_bytes(), "mem").unwrap().is_empty());
    }

    #[test]
    fn splits_feats_on_pipe() {
        let text = "1\tx\tx\tN\tNN\tcase=nom|num=sg\t0\troot\t_\t_\n";
        let s = parse_conll(text.as_bytes(), "mem").unwrap();
        assert_eq!(s[0].tokens()[0].feats, vec!["case=nom", "num=sg"]);
    }

    fn err_line(text: &str) -> usize {
        match parse_conll(text.as_bytes(), "mem") {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {:?}", other.map(|s| s.len())),
        }
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(err_line("1\ta\t_\tN\tNN\t_\tx\troot\t_\t_\n"), 1);
        assert_eq!(
            err_line("1\ta\t_\tN\tNN\t_\t0\troot\t_\t_\n2\tb\t_\tN\tNN\t_\t5\tdep\t_\t_\n"),
            2
        );
        assert_eq!(
            err_line("1\ta\t_\tN\tNN\t_\t0\troot\t_\t_\n3\tb\t_\tN\tNN\t_\t1\tdep\t_\t_\n"),
            2
        );
        assert_eq!(err_line("\n\n1\ta\t_\tN\tNN\t_\t0\n"), 3);
    }

    #[test]
    fn writes_predicted_columns() {
        let s = parse_conll(TWO.as_bytes(), "mem").unwrap();
        let mut out = Vec::new();
        write_conll_to(
            &mut out,
            &s,
            &[vec![0, 1]],
            &[vec!["root".to_owned(), "obj".to_owned()]],
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "1\tHe\t_\tP\tPRP\t_\t0\troot\t_\t_\n2\truns\t_\tV\tVBZ\t_\t1\tobj\t_\t_\n\n"
        );
    }

    #[test]
    fn single_token_root_head() {
        let s = parse_conll("1\tGo\t_\tV\tVB\t_\t0\troot\t_\t_\n".as_bytes(), "mem").unwrap();
        let mut out = Vec::new();
        write_conll_to(&mut out, &s, &[vec![0]], &[vec!["root".to_owned()]]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.split('\t').nth(6), Some("0"));
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let s = parse_conll(TWO.as_bytes(), "mem").unwrap();
        let mut out = Vec::new();
        let err = write_conll_to(&mut out, &s, &[vec![0]], &[vec!["root".to_owned()]]);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn gold_round_trip() {
        let mut out = Vec::new();
        write_gold_to(&mut out, &parse_conll(TWO.as_bytes(), "mem").unwrap()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), TWO);
    }
}
