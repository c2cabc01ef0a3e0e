//! Structural queries over head arrays.
//!
//! Heads are indexed by token position minus one: `heads[t - 1]` is the head
//! of token `t`, and `0` denotes ROOT.

use std::collections::BTreeSet;

/// True when every token reaches ROOT without revisiting a node. Several
/// ROOT children are allowed.
pub fn is_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    // 0 = unvisited, 1 = on current path, 2 = known to reach ROOT
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            let head = heads[node - 1];
            if head > n || head == node {
                return false;
            }
            node = head;
        }
        if state[node] == 1 {
            return false;
        }
        for p in path {
            state[p] = 2;
        }
    }
    true
}

/// Tokens whose arc interleaves with another arc.
///
/// Arcs (h, m) and (h', m') cross when exactly one endpoint of one arc lies
/// strictly inside the span of the other and the other endpoint lies strictly
/// outside it. Arcs attached to ROOT are never counted: ROOT dominates every
/// token, so those arcs are projective by definition.
pub fn crossed_arcs(heads: &[usize]) -> BTreeSet<usize> {
    let n = heads.len();
    let mut crossed = BTreeSet::new();
    for a in 1..=n {
        let ha = heads[a - 1];
        if ha == 0 {
            continue;
        }
        let (lo, hi) = (ha.min(a), ha.max(a));
        for b in 1..=n {
            let hb = heads[b - 1];
            if b == a || hb == 0 {
                continue;
            }
            let inside = |x: usize| lo < x && x < hi;
            let outside = |x: usize| x < lo || x > hi;
            if (inside(b) && outside(hb)) || (inside(hb) && outside(b)) {
                crossed.insert(a);
                crossed.insert(b);
            }
        }
    }
    crossed
}
