mod common;

use std::collections::BTreeSet;

use dualpath::{GraphError, SubQuestionGraph};
use proptest::prelude::*;

use common::{build_graph, first_order, is_valid_order, node_id, reaches};

fn edge_attempts(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_nodes).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..40)))
}

fn indices(order: &[dualpath::NodeId]) -> Vec<usize> {
    order
        .iter()
        .map(|id| id.as_str().rsplit_once(':').unwrap().1.parse().unwrap())
        .collect()
}

proptest! {
    #[test]
    fn insertions_never_create_cycles((n, attempts) in edge_attempts(10)) {
        let mut g = build_graph("n", "en", n, &[]);
        let mut edges = BTreeSet::new();
        for (a, b) in attempts {
            let legal = a != b && !reaches(&edges, b, a);
            match g.add_edge(&node_id("n", a), &node_id("n", b)) {
                Ok(()) => {
                    prop_assert!(legal, "accepted {a}->{b}");
                    edges.insert((a, b));
                }
                Err(GraphError::SelfLoop(_)) | Err(GraphError::WouldCreateCycle { .. }) => {
                    prop_assert!(!legal, "rejected legal edge {a}->{b}");
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
            prop_assert!(g.topological_sort().is_ok());
        }
        prop_assert_eq!(g.edge_count(), edges.len());
    }

    #[test]
    fn sort_is_the_smallest_valid_order((n, attempts) in edge_attempts(8)) {
        let mut g = build_graph("n", "en", n, &[]);
        let mut edges = BTreeSet::new();
        for (a, b) in attempts {
            if g.add_edge(&node_id("n", a), &node_id("n", b)).is_ok() {
                edges.insert((a, b));
            }
        }
        let order = indices(&g.topological_sort().unwrap());
        prop_assert!(is_valid_order(n, &edges, &order));
        prop_assert_eq!(Some(order), first_order(n, &edges));
    }

    #[test]
    fn json_round_trip((n, attempts) in edge_attempts(8)) {
        let mut g = build_graph("n", "en", n, &[]);
        for (a, b) in attempts {
            let _ = g.add_edge(&node_id("n", a), &node_id("n", b));
        }
        let text = serde_json::to_string(&g).unwrap();
        let back: SubQuestionGraph = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn contraction_keeps_acyclicity(
        (n, attempts) in edge_attempts(8),
        keep in 0usize..8,
        absorbed in 0usize..8,
    ) {
        let mut g = build_graph("n", "en", n, &[]);
        for (a, b) in attempts {
            let _ = g.add_edge(&node_id("n", a), &node_id("n", b));
        }
        let (keep, absorbed) = (keep % n, absorbed % n);
        prop_assume!(keep != absorbed);
        let before = g.len();
        match g.contract(&node_id("n", keep), &node_id("n", absorbed)) {
            Ok(_) => {
                prop_assert_eq!(g.len(), before - 1);
                prop_assert!(g.topological_sort().is_ok());
            }
            Err(GraphError::WouldCreateCycle { .. }) => prop_assert_eq!(g.len(), before),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn unknown_nodes_are_rejected() {
    let mut g = build_graph("n", "en", 2, &[(0, 1)]);
    assert!(matches!(
        g.add_edge(&node_id("n", 0), &node_id("n", 7)),
        Err(GraphError::UnknownNode(_))
    ));
}

#[test]
fn dot_lists_every_edge() {
    let g = build_graph("n", "en", 3, &[(0, 1), (1, 2)]);
    let dot = g.to_dot();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), 2);
}
