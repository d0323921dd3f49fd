//! Cross-lingual node fusion.
//!
//! The source-language and English graphs are placed side by side and the
//! most similar (source, English) node pair is merged repeatedly while its
//! cosine similarity strictly exceeds `tau`. Matching is one-to-one and
//! greedy; a merge that would close a cycle is skipped. Unmatched nodes of
//! either graph stay in the fused graph.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, EmbedRequest, Embedder};
use crate::qgraph::{GraphError, NodeId, Origin, SubQuestionGraph};
use crate::slots;

pub const DEFAULT_TAU: f64 = 0.8;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("fusion threshold {0} is outside [0, 1]")]
    InvalidTau(f64),
    #[error("cannot fuse an empty graph")]
    EmptyGraph,
    #[error("similarity matrix does not match the graphs: {0}")]
    BadMatrix(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub tau: f64,
}

impl FusionConfig {
    pub fn new(tau: f64) -> Result<Self, FusionError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(FusionError::InvalidTau(tau));
        }
        Ok(Self { tau })
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

/// Cosine similarities between source nodes (rows) and English nodes
/// (columns), both in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub rows: Vec<NodeId>,
    pub cols: Vec<NodeId>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn new(rows: Vec<NodeId>, cols: Vec<NodeId>, values: Vec<Vec<f64>>) -> Result<Self, FusionError> {
        if values.len() != rows.len() || values.iter().any(|r| r.len() != cols.len()) {
            return Err(FusionError::BadMatrix("dimensions differ from id lists".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FusionError::BadMatrix("non-finite similarity".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Text used to embed a node: its own-language text with slots shown as `<k>`.
pub fn embedding_text(graph: &SubQuestionGraph, id: &NodeId) -> String {
    slots::display(graph.node(id).expect("id from graph").primary_text())
}

/// Embed every node once (one batch) and compute all pairwise cosines.
pub fn similarity_matrix(
    source: &SubQuestionGraph,
    english: &SubQuestionGraph,
    embedder: &dyn Embedder,
) -> Result<SimilarityMatrix, FusionError> {
    if source.is_empty() || english.is_empty() {
        return Err(FusionError::EmptyGraph);
    }
    let rows: Vec<NodeId> = source.node_ids().cloned().collect();
    let cols: Vec<NodeId> = english.node_ids().cloned().collect();
    let texts = rows
        .iter()
        .map(|id| embedding_text(source, id))
        .chain(cols.iter().map(|id| embedding_text(english, id)));
    let vectors = embedder.embed(&EmbedRequest::new(texts)?)?;
    if vectors.len() != rows.len() + cols.len() {
        return Err(BackendError::Protocol("embedding count differs from batch size".into()).into());
    }
    let (row_vecs, col_vecs) = vectors.split_at(rows.len());
    let values = row_vecs
        .iter()
        .map(|r| col_vecs.iter().map(|c| cosine(r, c)).collect())
        .collect();
    SimilarityMatrix::new(rows, cols, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub source: NodeId,
    pub english: NodeId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub graph: SubQuestionGraph,
    pub merges: Vec<Merge>,
    /// Pairs above the threshold that were skipped because merging them
    /// would have created a cycle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Merge>,
}

/// Greedy fusion over a precomputed similarity matrix.
pub fn fuse_with_matrix(
    source: &SubQuestionGraph,
    english: &SubQuestionGraph,
    matrix: &SimilarityMatrix,
    cfg: FusionConfig,
) -> Result<Fusion, FusionError> {
    let src_ids: Vec<NodeId> = source.node_ids().cloned().collect();
    let en_ids: Vec<NodeId> = english.node_ids().cloned().collect();
    if matrix.rows != src_ids || matrix.cols != en_ids {
        return Err(FusionError::BadMatrix("row/column ids differ from graph ids".into()));
    }
    let mut graph = SubQuestionGraph::disjoint_union(source, english)?;

    let mut pairs: Vec<(usize, usize)> = (0..src_ids.len())
        .flat_map(|r| (0..en_ids.len()).map(move |c| (r, c)))
        .collect();
    // Highest similarity first; ties go to the smallest (row id, col id).
    pairs.sort_by(|&(ra, ca), &(rb, cb)| {
        matrix
            .get(rb, cb)
            .total_cmp(&matrix.get(ra, ca))
            .then_with(|| (&src_ids[ra], &en_ids[ca]).cmp(&(&src_ids[rb], &en_ids[cb])))
    });

    let mut used_rows = BTreeSet::new();
    let mut used_cols = BTreeSet::new();
    let mut merges = Vec::new();
    let mut skipped = Vec::new();
    for (r, c) in pairs {
        let similarity = matrix.get(r, c);
        if similarity <= cfg.tau {
            break;
        }
        if used_rows.contains(&r) || used_cols.contains(&c) {
            continue;
        }
        let (keep, absorbed) = (&src_ids[r], &en_ids[c]);
        let record = Merge {
            source: keep.clone(),
            english: absorbed.clone(),
            similarity,
        };
        let removed = match graph.contract(keep, absorbed) {
            Ok(node) => node,
            Err(GraphError::WouldCreateCycle { .. }) => {
                skipped.push(record);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let kept = graph.node_mut(keep).expect("kept node survives contraction");
        for (lang, text) in removed.texts {
            kept.texts.entry(lang).or_insert(text);
        }
        if kept.is_bilingual() {
            kept.origin = Origin::Fused;
        }
        let ids: Vec<NodeId> = graph.node_ids().cloned().collect();
        for id in ids {
            let node = graph.node_mut(&id).expect("listed id");
            for text in node.texts.values_mut() {
                *text = slots::rename(text, absorbed, keep);
            }
        }
        used_rows.insert(r);
        used_cols.insert(c);
        merges.push(record);
    }
    Ok(Fusion { graph, merges, skipped })
}

/// Embed, then fuse.
pub fn fuse(
    source: &SubQuestionGraph,
    english: &SubQuestionGraph,
    cfg: FusionConfig,
    embedder: &dyn Embedder,
) -> Result<Fusion, FusionError> {
    let matrix = similarity_matrix(source, english, embedder)?;
    fuse_with_matrix(source, english, &matrix, cfg)
}

/// Execution order of the fused graph.
pub fn sequence(fused: &SubQuestionGraph) -> Result<Vec<NodeId>, GraphError> {
    fused.topological_sort()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedEmbedder;
    use crate::qgraph::{LanguageTag, QNode};

    fn single(id: &str, lang: &str, text: &str) -> SubQuestionGraph {
        let mut g = SubQuestionGraph::new();
        let lang = LanguageTag::new(lang).unwrap();
        let origin = if lang.is_english() { Origin::English } else { Origin::Source };
        g.add_node(QNode::new(NodeId::from(id), lang, text, origin)).unwrap();
        g
    }

    fn pair(prefix: &str, lang: &str, a: &str, b: &str) -> SubQuestionGraph {
        let mut g = single(&format!("{prefix}:1"), lang, a);
        let l = LanguageTag::new(lang).unwrap();
        let origin = if l.is_english() { Origin::English } else { Origin::Source };
        g.add_node(QNode::new(NodeId::indexed(prefix, 2), l, b, origin)).unwrap();
        g
    }

    #[test]
    fn identical_texts_give_unit_diagonal() {
        let e = ScriptedEmbedder::new(64);
        let s = pair("de", "de", "who directed inception", "when was he born");
        let en = pair("en", "en", "who directed inception", "when was he born");
        let m = similarity_matrix(&s, &en, &e).unwrap();
        assert!((m.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((m.get(1, 1) - 1.0).abs() < 1e-12);
        assert_eq!(e.call_count(), 1);
    }

    #[test]
    fn orthogonal_vectors_give_zeros() {
        let e = ScriptedEmbedder::new(4)
            .with_vector("a", vec![1.0, 0.0, 0.0, 0.0])
            .with_vector("b", vec![0.0, 1.0, 0.0, 0.0])
            .with_vector("c", vec![0.0, 0.0, 1.0, 0.0])
            .with_vector("d", vec![0.0, 0.0, 0.0, 1.0]);
        let m = similarity_matrix(&pair("de", "de", "a", "b"), &pair("en", "en", "c", "d"), &e).unwrap();
        assert!(m.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_picked_two_by_two() {
        let e = ScriptedEmbedder::new(2)
            .with_vector("s1", vec![1.0, 0.0])
            .with_vector("s2", vec![0.8, 0.6])
            .with_vector("e1", vec![1.0, 0.0])
            .with_vector("e2", vec![0.0, 1.0]);
        let (s, en) = (pair("de", "de", "s1", "s2"), pair("en", "en", "e1", "e2"));
        let m = similarity_matrix(&s, &en, &e).unwrap();
        let expected = [[1.0, 0.0], [0.8, 0.6]];
        for (r, row) in expected.iter().enumerate() {
            for (c, want) in row.iter().enumerate() {
                assert!((m.get(r, c) - want).abs() < 1e-12);
            }
        }
        let f = fuse_with_matrix(&s, &en, &m, FusionConfig::default()).unwrap();
        assert_eq!(f.merges.len(), 1);
        assert_eq!(f.merges[0].source, NodeId::from("de:1"));
        assert_eq!(f.merges[0].english, NodeId::from("en:1"));
        assert_eq!(f.graph.len(), 3);
        let fused = f.graph.node(&NodeId::from("de:1")).unwrap();
        assert_eq!(fused.origin, Origin::Fused);
        assert_eq!(fused.texts.len(), 2);
    }

    #[test]
    fn single_identical_nodes_merge() {
        let e = ScriptedEmbedder::new(32);
        let f = fuse(&single("de:1", "de", "wer?"), &single("en:1", "en", "wer?"), FusionConfig::default(), &e).unwrap();
        assert_eq!(f.graph.len(), 1);
        assert_eq!(f.graph.edge_count(), 0);
        assert!(f.graph.nodes().next().unwrap().is_bilingual());
    }

    #[test]
    fn threshold_is_strict() {
        let s = single("de:1", "de", "x");
        let en = single("en:1", "en", "y");
        let m = SimilarityMatrix::new(vec!["de:1".into()], vec!["en:1".into()], vec![vec![0.8]]).unwrap();
        let f = fuse_with_matrix(&s, &en, &m, FusionConfig::new(0.8).unwrap()).unwrap();
        assert!(f.merges.is_empty());
        assert_eq!(f.graph.len(), 2);
    }

    #[test]
    fn cycle_creating_merge_is_skipped() {
        // de:1 -> de:2 and en:1 -> en:2; pairing (de:1,en:2) and (de:2,en:1)
        // would give de:1 -> de:2 -> de:1.
        let mut s = pair("de", "de", "a", "b");
        s.add_edge(&"de:1".into(), &"de:2".into()).unwrap();
        let mut en = pair("en", "en", "c", "d");
        en.add_edge(&"en:1".into(), &"en:2".into()).unwrap();
        let m = SimilarityMatrix::new(
            vec!["de:1".into(), "de:2".into()],
            vec!["en:1".into(), "en:2".into()],
            vec![vec![0.1, 0.99], vec![0.95, 0.1]],
        )
        .unwrap();
        let f = fuse_with_matrix(&s, &en, &m, FusionConfig::default()).unwrap();
        assert_eq!(f.merges.len(), 1);
        assert_eq!(f.skipped.len(), 1);
        assert!(f.graph.topological_sort().is_ok());
    }

    #[test]
    fn slots_follow_merged_nodes() {
        let mut s = single("de:1", "de", "Wer?");
        let mut en = pair("en", "en", "Who?", "When was <en:1> born?");
        en.add_edge(&"en:1".into(), &"en:2".into()).unwrap();
        s.node_mut(&"de:1".into()).unwrap();
        let m = SimilarityMatrix::new(
            vec!["de:1".into()],
            vec!["en:1".into(), "en:2".into()],
            vec![vec![0.9, 0.1]],
        )
        .unwrap();
        let f = fuse_with_matrix(&s, &en, &m, FusionConfig::default()).unwrap();
        let n = f.graph.node(&"en:2".into()).unwrap();
        assert_eq!(n.primary_text(), "When was <de:1> born?");
        assert!(f.graph.has_edge(&"de:1".into(), &"en:2".into()));
    }

    #[test]
    fn bad_inputs() {
        assert!(FusionConfig::new(1.5).is_err());
        assert!(SimilarityMatrix::new(vec!["a".into()], vec!["b".into()], vec![vec![f64::NAN]]).is_err());
        let e = ScriptedEmbedder::new(4);
        assert!(matches!(
            similarity_matrix(&SubQuestionGraph::new(), &single("en:1", "en", "x"), &e),
            Err(FusionError::EmptyGraph)
        ));
    }
}
