//! Brute-force oracles shared by the property and acceptance tests. They
//! work on plain index lists and never call into the library under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use dualpath::{LanguageTag, NodeId, Origin, QNode, SubQuestionGraph};

pub fn node_id(prefix: &str, i: usize) -> NodeId {
    NodeId::indexed(prefix, i)
}

/// Graph with nodes `<prefix>:0..n` and the given edges (all must be legal).
pub fn build_graph(prefix: &str, lang: &str, n: usize, edges: &[(usize, usize)]) -> SubQuestionGraph {
    let lang = LanguageTag::new(lang).unwrap();
    let origin = if lang.is_english() { Origin::English } else { Origin::Source };
    let mut g = SubQuestionGraph::new();
    for i in 0..n {
        g.add_node(QNode::new(node_id(prefix, i), lang.clone(), format!("q{i}"), origin))
            .unwrap();
    }
    for &(a, b) in edges {
        g.add_edge(&node_id(prefix, a), &node_id(prefix, b)).unwrap();
    }
    g
}

pub fn reaches(edges: &BTreeSet<(usize, usize)>, from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = BTreeSet::new();
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        if seen.insert(x) {
            stack.extend(edges.iter().filter(|(a, _)| *a == x).map(|(_, b)| *b));
        }
    }
    false
}

pub fn is_acyclic(nodes: &BTreeSet<usize>, edges: &BTreeSet<(usize, usize)>) -> bool {
    edges.iter().all(|&(a, b)| a != b && !reaches(edges, b, a)) && edges.iter().all(|(a, b)| nodes.contains(a) && nodes.contains(b))
}

/// Is `order` a permutation of `0..n` respecting every edge?
pub fn is_valid_order(n: usize, edges: &BTreeSet<(usize, usize)>, order: &[usize]) -> bool {
    if order.len() != n {
        return false;
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &x) in order.iter().enumerate() {
        if x >= n || pos[x] != usize::MAX {
            return false;
        }
        pos[x] = i;
    }
    edges.iter().all(|&(a, b)| pos[a] < pos[b])
}

/// Every valid topological order, in lexicographic order.
pub fn all_orders(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<usize>> {
    fn go(n: usize, preds: &[u64], prefix: &mut Vec<usize>, used: u64, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for x in 0..n {
            if used & (1 << x) != 0 || preds[x] & !used != 0 {
                continue;
            }
            prefix.push(x);
            go(n, preds, prefix, used | (1 << x), out);
            prefix.pop();
        }
    }
    assert!(n <= 64, "enumeration is for small graphs");
    let mut preds = vec![0u64; n];
    for &(a, b) in edges {
        preds[b] |= 1 << a;
    }
    let mut out = Vec::new();
    go(n, &preds, &mut Vec::new(), 0, &mut out);
    out
}

/// The lexicographically smallest valid order, found by depth-first search
/// that stops at the first complete order.
pub fn first_order(n: usize, edges: &BTreeSet<(usize, usize)>) -> Option<Vec<usize>> {
    fn go(n: usize, edges: &BTreeSet<(usize, usize)>, prefix: &mut Vec<usize>, used: &mut Vec<bool>) -> bool {
        if prefix.len() == n {
            return true;
        }
        for x in 0..n {
            if used[x] || edges.iter().any(|&(a, b)| b == x && !used[a]) {
                continue;
            }
            used[x] = true;
            prefix.push(x);
            if go(n, edges, prefix, used) {
                return true;
            }
            prefix.pop();
            used[x] = false;
        }
        false
    }
    let mut prefix = Vec::new();
    go(n, edges, &mut prefix, &mut vec![false; n]).then_some(prefix)
}

/// Result of the reference greedy fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFusion {
    /// (row, col) pairs in merge order.
    pub merges: Vec<(usize, usize)>,
    pub skipped: Vec<(usize, usize)>,
    pub node_count: usize,
    /// Edges over the surviving nodes; source nodes are `0..rows`, English
    /// nodes `rows..rows+cols`.
    pub edges: BTreeSet<(usize, usize)>,
}

/// Reference fusion: repeatedly take the best eligible unfused pair (ties to
/// the smallest (row, col)), stop at similarity ≤ τ, skip pairs whose
/// contraction would leave a cycle.
pub fn oracle_fuse(
    rows: usize,
    src_edges: &[(usize, usize)],
    cols: usize,
    en_edges: &[(usize, usize)],
    sim: &[Vec<f64>],
    tau: f64,
) -> OracleFusion {
    let mut nodes: BTreeSet<usize> = (0..rows + cols).collect();
    let mut edges: BTreeSet<(usize, usize)> = src_edges
        .iter()
        .copied()
        .chain(en_edges.iter().map(|&(a, b)| (rows + a, rows + b)))
        .collect();
    let mut used_r = BTreeSet::new();
    let mut used_c = BTreeSet::new();
    let mut ineligible = BTreeSet::new();
    let mut merges = Vec::new();
    let mut skipped = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for r in 0..rows {
            for c in 0..cols {
                if used_r.contains(&r) || used_c.contains(&c) || ineligible.contains(&(r, c)) {
                    continue;
                }
                best = match best {
                    Some((br, bc)) if sim[br][bc] >= sim[r][c] => Some((br, bc)),
                    _ => Some((r, c)),
                };
            }
        }
        let Some((r, c)) = best else { break };
        if sim[r][c] <= tau {
            break;
        }
        let absorbed = rows + c;
        let contracted: BTreeSet<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| {
                let f = |x| if x == absorbed { r } else { x };
                (f(a), f(b))
            })
            .filter(|(a, b)| a != b)
            .collect();
        let mut remaining = nodes.clone();
        remaining.remove(&absorbed);
        if !is_acyclic(&remaining, &contracted) {
            ineligible.insert((r, c));
            skipped.push((r, c));
            continue;
        }
        edges = contracted;
        nodes = remaining;
        used_r.insert(r);
        used_c.insert(c);
        merges.push((r, c));
    }
    OracleFusion {
        merges,
        skipped,
        node_count: nodes.len(),
        edges,
    }
}

/// Exhaustive cosine scan: top `k` (id, score), ties to the smaller id.
pub fn exhaustive_top_k(docs: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            (id.clone(), dot / (norm(v) * qn))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}
