mod common;

use std::collections::BTreeSet;

use dualpath::fusion::{fuse, fuse_with_matrix, FusionConfig, SimilarityMatrix};
use dualpath::{NodeId, Origin, SubQuestionGraph};
use proptest::prelude::*;

use common::{build_graph, node_id, oracle_fuse};

/// Random DAG: only forward edges i -> j with i < j, then relabelled by a
/// permutation so edge direction is not correlated with id order.
fn dag(max: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (
            Just(n),
            prop::collection::vec(any::<bool>(), m),
            Just(pairs),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
            .prop_map(|(n, keep, pairs, perm)| {
                let edges = pairs
                    .into_iter()
                    .zip(keep)
                    .filter(|(_, k)| *k)
                    .map(|((a, b), _)| (perm[a], perm[b]))
                    .collect();
                (n, edges)
            })
    })
}

/// Similarities on a 0.05 grid in [-0.2, 1.0] so ties and values exactly
/// at common thresholds occur often.
fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec((-4i32..=20).prop_map(|x| x as f64 * 0.05), cols), rows)
}

/// Node count and edge list.
type Dag = (usize, Vec<(usize, usize)>);

fn case() -> impl Strategy<Value = (Dag, Dag, Vec<Vec<f64>>)> {
    (dag(6), dag(6)).prop_flat_map(|(s, e)| {
        let (r, c) = (s.0, e.0);
        (Just(s), Just(e), matrix(r, c))
    })
}

fn run(s: &(usize, Vec<(usize, usize)>), e: &(usize, Vec<(usize, usize)>), m: &[Vec<f64>], tau: f64) -> (SubQuestionGraph, dualpath::Fusion) {
    let src = build_graph("de", "de", s.0, &s.1);
    let en = build_graph("en", "en", e.0, &e.1);
    let matrix = SimilarityMatrix::new(
        (0..s.0).map(|i| node_id("de", i)).collect(),
        (0..e.0).map(|i| node_id("en", i)).collect(),
        m.to_vec(),
    )
    .unwrap();
    let fused = fuse_with_matrix(&src, &en, &matrix, FusionConfig::new(tau).unwrap()).unwrap();
    (src, fused)
}

fn index(rows: usize, id: &NodeId) -> usize {
    let (prefix, k) = id.as_str().rsplit_once(':').unwrap();
    let k: usize = k.parse().unwrap();
    if prefix == "de" {
        k
    } else {
        rows + k
    }
}

const TAUS: [f64; 4] = [0.0, 0.5, 0.8, 0.95];

proptest! {
    #[test]
    fn matches_reference_greedy((s, e, m) in case()) {
        for tau in TAUS {
            let (_, fused) = run(&s, &e, &m, tau);
            let oracle = oracle_fuse(s.0, &s.1, e.0, &e.1, &m, tau);
            let merges: Vec<(usize, usize)> = fused
                .merges
                .iter()
                .map(|mg| (index(s.0, &mg.source), index(s.0, &mg.english) - s.0))
                .collect();
            prop_assert_eq!(&merges, &oracle.merges, "tau {}", tau);
            prop_assert_eq!(fused.graph.len(), oracle.node_count);
            let edges: BTreeSet<(usize, usize)> = fused
                .graph
                .edges()
                .map(|(a, b)| (index(s.0, a), index(s.0, b)))
                .collect();
            prop_assert_eq!(edges, oracle.edges);
        }
    }

    #[test]
    fn structural_invariants((s, e, m) in case()) {
        let mut previous: Option<Vec<(NodeId, NodeId)>> = None;
        for tau in TAUS {
            let (_, fused) = run(&s, &e, &m, tau);
            let sources: BTreeSet<_> = fused.merges.iter().map(|x| &x.source).collect();
            let english: BTreeSet<_> = fused.merges.iter().map(|x| &x.english).collect();
            prop_assert_eq!(sources.len(), fused.merges.len());
            prop_assert_eq!(english.len(), fused.merges.len());
            prop_assert_eq!(fused.graph.len(), s.0 + e.0 - fused.merges.len());
            prop_assert!(fused.merges.iter().all(|x| x.similarity > tau));
            prop_assert!(fused.graph.topological_sort().is_ok());
            for mg in &fused.merges {
                let node = fused.graph.node(&mg.source).unwrap();
                prop_assert_eq!(node.origin, Origin::Fused);
                prop_assert!(node.is_bilingual());
                prop_assert!(!fused.graph.contains(&mg.english));
            }
            // a stricter threshold keeps a prefix of the looser merge list
            let pairs: Vec<_> = fused.merges.iter().map(|x| (x.source.clone(), x.english.clone())).collect();
            if let Some(looser) = &previous {
                prop_assert!(pairs.len() <= looser.len());
                prop_assert_eq!(&pairs[..], &looser[..pairs.len()]);
            }
            previous = Some(pairs);
        }
    }
}

#[test]
fn two_by_two_hand_example() {
    // cos = [[1.0, 0.0], [0.8, 0.6]], tau = 0.8: only (de:0, en:0) exceeds it,
    // and 0.8 itself does not.
    let (_, fused) = run(&(2, vec![]), &(2, vec![]), &[vec![1.0, 0.0], vec![0.8, 0.6]], 0.8);
    assert_eq!(fused.merges.len(), 1);
    assert_eq!(fused.merges[0].source, node_id("de", 0));
    assert_eq!(fused.merges[0].english, node_id("en", 0));
    assert_eq!(fused.graph.len(), 3);
}

#[test]
fn embedding_driven_fusion_matches_the_hand_example() {
    use dualpath::backends::ScriptedEmbedder;
    let src = build_graph("de", "de", 2, &[]);
    let en = build_graph("en", "en", 2, &[]);
    // both graphs label nodes q0, q1: give each node its own vector
    let mut src = src;
    src.node_mut(&node_id("de", 1)).unwrap().texts.values_mut().for_each(|t| *t = "s1".into());
    let mut en = en;
    en.node_mut(&node_id("en", 0)).unwrap().texts.values_mut().for_each(|t| *t = "e0".into());
    en.node_mut(&node_id("en", 1)).unwrap().texts.values_mut().for_each(|t| *t = "e1".into());
    let embedder = ScriptedEmbedder::new(2)
        .with_vector("q0", vec![1.0, 0.0])
        .with_vector("s1", vec![0.8, 0.6])
        .with_vector("e0", vec![1.0, 0.0])
        .with_vector("e1", vec![0.0, 1.0]);
    // cosines: de:0·en:0 = 1, de:0·en:1 = 0, de:1·en:0 = 0.8, de:1·en:1 = 0.6
    let fused = fuse(&src, &en, FusionConfig::default(), &embedder).unwrap();
    assert_eq!(fused.merges.len(), 1);
    assert_eq!(embedder.call_count(), 1, "one batched embedding call");
}

#[test]
fn cycle_creating_pairs_are_skipped() {
    // de:0 -> de:1 and en:1 -> en:0; fusing both pairs would need a cycle
    let m = vec![vec![0.99, 0.0], vec![0.0, 0.98]];
    let (_, fused) = run(&(2, vec![(0, 1)]), &(2, vec![(1, 0)]), &m, 0.8);
    assert_eq!(fused.merges.len(), 1);
    assert_eq!(fused.skipped.len(), 1);
    assert!(fused.graph.topological_sort().is_ok());
}
