//! Arc scoring and tree decoding.

use std::fmt;
use std::str::FromStr;

use crate::corpus::is_tree;
use crate::error::{Error, Result};
use crate::numerics::{argmax, RealMatrix};

/// Smallest probability fed to `ln`.
pub const PROB_FLOOR: f64 = 1e-300;

/// `score[t][j]` for modifiers `t = 1..n` and heads `j = 0..n`. Row `t - 1`
/// of the backing matrix holds modifier `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScores {
    scores: RealMatrix,
    /// Probabilities that had to be raised to [`PROB_FLOOR`].
    pub floored: usize,
}

impl ArcScores {
    /// Wraps raw scores. Self-arcs are masked.
    pub fn from_matrix(mut scores: RealMatrix) -> Result<Self> {
        let (n, cols) = scores.shape();
        if cols != n + 1 {
            return Err(Error::Dimension {
                op: "arc-scores",
                left: dims((n, cols)),
                right: dims((n, n + 1)),
            });
        }
        for t in 1..=n {
            scores.set(t - 1, t, f64::NEG_INFINITY);
        }
        Ok(ArcScores { scores, floored: 0 })
    }

    pub fn len(&self) -> usize {
        self.scores.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Score of the arc `head -> modifier`; `modifier` is 1-based.
    pub fn get(&self, modifier: usize, head: usize) -> f64 {
        self.scores.get(modifier - 1, head)
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.scores
    }

    /// Sum of the chosen arc scores.
    pub fn total(&self, heads: &[usize]) -> f64 {
        heads.iter().enumerate().map(|(i, &h)| self.get(i + 1, h)).sum()
    }

    /// Adds `c` to every score.
    pub fn shifted(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.scores.as_mut_slice().iter_mut().for_each(|v| *v += c);
        s
    }
}

fn dims((r, c): (usize, usize)) -> String {
    format!("{}x{}", r, c)
}

fn check_attention(a: &RealMatrix) -> Result<()> {
    let (n, cols) = a.shape();
    if cols != n + 1 {
        return Err(Error::Dimension {
            op: "attention",
            left: dims((n, cols)),
            right: dims((n, n + 1)),
        });
    }
    Ok(())
}

fn floored_log(p: f64, floored: &mut usize) -> f64 {
    if p < PROB_FLOOR {
        *floored += 1;
        PROB_FLOOR.ln()
    } else {
        p.ln()
    }
}

/// `log a^l[t][j] + log a^r[t][j]`.
pub fn combine_scores(a_l: &RealMatrix, a_r: &RealMatrix) -> Result<ArcScores> {
    check_attention(a_l)?;
    if a_l.shape() != a_r.shape() {
        return Err(Error::Dimension {
            op: "combine-scores",
            left: dims(a_l.shape()),
            right: dims(a_r.shape()),
        });
    }
    let mut floored = 0;
    let data = a_l
        .as_slice()
        .iter()
        .zip(a_r.as_slice())
        .map(|(&l, &r)| floored_log(l, &mut floored) + floored_log(r, &mut floored))
        .collect();
    let (n, cols) = a_l.shape();
    let mut s = ArcScores::from_matrix(RealMatrix::from_vec(n, cols, data)?)?;
    s.floored = floored;
    Ok(s)
}

/// Scores from a single direction: `log a[t][j]`.
pub fn single_scores(a: &RealMatrix) -> Result<ArcScores> {
    check_attention(a)?;
    let mut floored = 0;
    let data = a.as_slice().iter().map(|&p| floored_log(p, &mut floored)).collect();
    let (n, cols) = a.shape();
    let mut s = ArcScores::from_matrix(RealMatrix::from_vec(n, cols, data)?)?;
    s.floored = floored;
    Ok(s)
}

/// Per-modifier argmax. The result may contain cycles.
pub fn greedy_decode(scores: &ArcScores) -> Vec<usize> {
    (1..=scores.len())
        .map(|t| argmax(scores.scores.row(t - 1)).expect("row has n + 1 entries"))
        .collect()
}

/// Maximum spanning arborescence rooted at 0.
pub fn mst_decode(scores: &ArcScores, single_root: bool) -> Vec<usize> {
    let n = scores.len();
    if !single_root || n <= 1 {
        return arborescence(scores);
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for child in 1..=n {
        let mut masked = scores.clone();
        for t in (1..=n).filter(|&t| t != child) {
            masked.scores.set(t - 1, 0, f64::NEG_INFINITY);
        }
        let heads = arborescence(&masked);
        let total = scores.total(&heads);
        if best.as_ref().map_or(true, |(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    best.expect("n >= 2").1
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Fresh,
    OnPath,
    Done,
}

/// Chu-Liu-Edmonds with dense contraction. Every node (original or
/// contracted) picks its best incoming edge once, and contracting a cycle
/// `C` costs `O(V·|C|)`, so the whole search is `O(n²)`.
fn arborescence(scores: &ArcScores) -> Vec<usize> {
    let n1 = scores.len() + 1;
    if n1 == 1 {
        return Vec::new();
    }
    let cap = 2 * n1;
    // w[dst][src] with the original arc each entry stands for
    let mut w = vec![f64::NEG_INFINITY; cap * cap];
    let mut orig = vec![(0usize, 0usize); cap * cap];
    for d in 1..n1 {
        for s in 0..n1 {
            if s != d {
                w[d * cap + s] = scores.get(d, s);
                orig[d * cap + s] = (s, d);
            }
        }
    }

    let mut active: Vec<usize> = (0..n1).collect();
    let mut mark = vec![Mark::Fresh; cap];
    let mut parent = vec![usize::MAX; cap];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cap];
    let mut in_edge = vec![(0usize, 0usize); cap];
    let mut in_w = vec![0.0; cap];
    let mut next = n1;
    mark[0] = Mark::Done;

    for start in 1..n1 {
        if mark[start] != Mark::Fresh {
            continue;
        }
        let mut path = vec![start];
        mark[start] = Mark::OnPath;
        while let Some(&a) = path.last() {
            let mut best = usize::MAX;
            let mut best_w = f64::NEG_INFINITY;
            for &u in &active {
                let x = w[a * cap + u];
                if u != a && (best == usize::MAX || x > best_w) {
                    best = u;
                    best_w = x;
                }
            }
            in_edge[a] = orig[a * cap + best];
            in_w[a] = best_w;
            match mark[best] {
                Mark::Done => {
                    for &v in &path {
                        mark[v] = Mark::Done;
                    }
                    break;
                }
                Mark::Fresh => {
                    mark[best] = Mark::OnPath;
                    path.push(best);
                }
                Mark::OnPath => {
                    let pos = path.iter().position(|&v| v == best).expect("on path");
                    let cycle: Vec<usize> = path.drain(pos..).collect();
                    let c = next;
                    next += 1;
                    active.retain(|v| !cycle.contains(v));
                    for &u in &active {
                        let mut inc = (f64::NEG_INFINITY, usize::MAX);
                        let mut out = (f64::NEG_INFINITY, usize::MAX);
                        for &v in &cycle {
                            let x = w[v * cap + u] - in_w[v];
                            if inc.1 == usize::MAX || x > inc.0 {
                                inc = (x, v);
                            }
                            let y = w[u * cap + v];
                            if out.1 == usize::MAX || y > out.0 {
                                out = (y, v);
                            }
                        }
                        w[c * cap + u] = inc.0;
                        orig[c * cap + u] = orig[inc.1 * cap + u];
                        w[u * cap + c] = out.0;
                        orig[u * cap + c] = orig[u * cap + out.1];
                    }
                    for &v in &cycle {
                        parent[v] = c;
                    }
                    members[c] = cycle;
                    active.push(c);
                    mark[c] = Mark::OnPath;
                    path.push(c);
                }
            }
        }
    }

    // Expand from the newest contraction down: the member holding the
    // entering arc's head end takes that arc, the rest keep their cycle arcs.
    for c in (n1..next).rev() {
        let (s, d) = in_edge[c];
        let mut v = d;
        while parent[v] != c {
            v = parent[v];
        }
        in_edge[v] = (s, d);
    }
    (1..n1).map(|v| in_edge[v].0).collect()
}

/// Best tree by enumerating every head assignment. Exponential; for
/// checking [`mst_decode`] on small inputs.
pub fn exhaustive_decode(scores: &ArcScores, single_root: bool) -> Option<Vec<usize>> {
    let n = scores.len();
    let mut heads = vec![0; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let roots = heads.iter().filter(|&&h| h == 0).count();
        if (!single_root || roots == 1) && is_tree(&heads) {
            let total = scores.total(&heads);
            if best.as_ref().map_or(true, |(b, _)| total > *b) {
                best = Some((total, heads.clone()));
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return best.map(|(_, h)| h);
            }
            heads[i] += 1;
            if heads[i] == i + 1 {
                heads[i] += 1;
            }
            if heads[i] <= n {
                break;
            }
            heads[i] = 0;
            i += 1;
        }
    }
}

/// `rel[t] = argmax_r y[t][r]`, one row of `y` per modifier.
pub fn label_arcs(heads: &[usize], y: &RealMatrix) -> Result<Vec<usize>> {
    if heads.len() != y.rows() {
        return Err(Error::Contract(format!(
            "{} heads but {} relation rows",
            heads.len(),
            y.rows()
        )));
    }
    Ok((0..y.rows())
        .map(|t| argmax(y.row(t)).expect("at least one relation"))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseTree {
    pub heads: Vec<usize>,
    pub rels: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Mst,
}

impl DecodeMode {
    pub fn decode(self, scores: &ArcScores, single_root: bool) -> Vec<usize> {
        match self {
            DecodeMode::Greedy => greedy_decode(scores),
            DecodeMode::Mst => mst_decode(scores, single_root),
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Mst => "mst",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "mst" => Ok(DecodeMode::Mst),
            other => Err(Error::Config(format!(
                "decode mode must be greedy or mst, got '{}'",
                other
            ))),
        }
    }
}

/// Two tokens that each prefer the other as head: greedy decoding returns
/// the cycle `[2, 1]`.
pub fn cycle_fixture() -> ArcScores {
    let m = RealMatrix::from_vec(
        2,
        3,
        vec![
            (0.3f64).ln(), 0.0, (0.7f64).ln(), //
            (0.2f64).ln(), (0.8f64).ln(), 0.0,
        ],
    )
    .expect("2x3");
    ArcScores::from_matrix(m).expect("square plus root")
}
