//! Per-language corpora and exact dense retrieval.
//!
//! Corpora are JSONL files (`<dataset>.<lang>.jsonl`), one
//! `{"id", "title", "text"}` object per line. Passage vectors are stored
//! unit-normalized so cosine similarity is a plain dot product. Built
//! indexes are cached in a binary sidecar (`<corpus>.idx`) keyed on the
//! corpus modification time and the embedder fingerprint.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, EmbedRequest, Embedder};
use crate::qgraph::LanguageTag;

const SIDECAR_MAGIC: &[u8; 8] = b"DPIDX\x00\x01\x00";
const EMBED_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate document id `{id}` on line {line}")]
    DuplicateId { line: usize, id: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
    pub lang: LanguageTag,
}

#[derive(Deserialize)]
struct CorpusLine {
    id: Option<String>,
    #[serde(default)]
    title: Option<String>,
    text: Option<String>,
}

/// Conventional corpus location for a dataset and language.
pub fn corpus_path(dir: &Path, dataset: &str, lang: &LanguageTag) -> PathBuf {
    dir.join(format!("{dataset}.{lang}.jsonl"))
}

pub fn sidecar_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.as_os_str().to_owned();
    name.push(".idx");
    PathBuf::from(name)
}

/// Parse a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn read_corpus(path: &Path, lang: &LanguageTag) -> Result<Vec<Document>, RetrievalError> {
    let io = |e: std::io::Error| RetrievalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RetrievalError::MalformedRecord { line: line_no, reason };
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let id = rec.id.ok_or_else(|| malformed("missing \"id\"".into()))?;
        let text = rec.text.ok_or_else(|| malformed("missing \"text\"".into()))?;
        if text.trim().is_empty() {
            return Err(malformed("blank \"text\"".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(RetrievalError::DuplicateId { line: line_no, id });
        }
        docs.push(Document {
            id,
            title: rec.title.unwrap_or_default(),
            text,
            lang: lang.clone(),
        });
    }
    Ok(docs)
}

/// Flat (exhaustive) cosine index over one language's passages.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    lang: LanguageTag,
    documents: Vec<Document>,
    /// Row-major, one unit vector per document.
    vectors: Vec<f64>,
    dimension: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub doc: &'a Document,
    pub score: f64,
}

impl CorpusIndex {
    /// Assemble an index from precomputed vectors; vectors are normalized here.
    pub fn from_parts(
        lang: LanguageTag,
        documents: Vec<Document>,
        vectors: Vec<Vec<f64>>,
        dimension: usize,
    ) -> Result<Self, RetrievalError> {
        Self::assemble(lang, documents, vectors, dimension, true)
    }

    /// Vectors read back from a sidecar are already unit length; normalizing
    /// again could move the last bit and make cached runs diverge.
    fn assemble(
        lang: LanguageTag,
        documents: Vec<Document>,
        vectors: Vec<Vec<f64>>,
        dimension: usize,
        normalize: bool,
    ) -> Result<Self, RetrievalError> {
        if documents.len() != vectors.len() {
            return Err(RetrievalError::Invariant(format!(
                "{} documents but {} vectors",
                documents.len(),
                vectors.len()
            )));
        }
        if dimension == 0 {
            return Err(RetrievalError::Invariant("dimension must be positive".into()));
        }
        let mut flat = Vec::with_capacity(vectors.len() * dimension);
        for mut v in vectors {
            if v.len() != dimension {
                return Err(BackendError::DimensionMismatch {
                    expected: dimension,
                    got: v.len(),
                }
                .into());
            }
            if normalize {
                crate::backends::normalize(&mut v)?;
            }
            flat.extend(v);
        }
        Ok(Self {
            lang,
            documents,
            vectors: flat,
            dimension,
        })
    }

    /// Embed `documents` (in batches) and index them in memory.
    pub fn from_documents(
        lang: LanguageTag,
        documents: Vec<Document>,
        embedder: &dyn Embedder,
    ) -> Result<Self, RetrievalError> {
        let mut vectors = Vec::with_capacity(documents.len());
        for chunk in documents.chunks(EMBED_BATCH) {
            let req = EmbedRequest::new(chunk.iter().map(|d| d.text.clone()))?;
            vectors.extend(embedder.embed(&req)?);
        }
        let dimension = vectors.first().map_or_else(|| embedder.dimension(), Vec::len);
        Self::from_parts(lang, documents, vectors, dimension.max(1))
    }

    pub fn lang(&self) -> &LanguageTag {
        &self.lang
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        &self.vectors[row * self.dimension..(row + 1) * self.dimension]
    }

    /// Top-`k` documents by cosine similarity to an already-embedded query.
    /// Ties go to the smaller document id.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<Hit<'_>>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        if query.len() != self.dimension {
            return Err(BackendError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            }
            .into());
        }
        let mut query = query.to_vec();
        crate::backends::normalize(&mut query)?;
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|row| (row, dot(self.vector(row), &query)))
            .collect();
        scored.sort_by(|(ra, sa), (rb, sb)| {
            sb.total_cmp(sa)
                .then_with(|| self.documents[*ra].id.cmp(&self.documents[*rb].id))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(row, score)| Hit {
                doc: &self.documents[row],
                score,
            })
            .collect())
    }

    fn write_sidecar(&self, path: &Path, stamp: &CorpusStamp, fingerprint: &str) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(64 + self.vectors.len() * 8);
        buf.extend_from_slice(SIDECAR_MAGIC);
        buf.extend_from_slice(&stamp.mtime_nanos.to_le_bytes());
        buf.extend_from_slice(&stamp.len.to_le_bytes());
        write_str(&mut buf, fingerprint);
        buf.extend_from_slice(&(self.documents.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dimension as u64).to_le_bytes());
        for doc in &self.documents {
            write_str(&mut buf, &doc.id);
        }
        for x in &self.vectors {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let tmp = path.with_extension("idx.tmp");
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(tmp, path)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CorpusStamp {
    mtime_nanos: u128,
    len: u64,
}

impl CorpusStamp {
    fn of(path: &Path) -> std::io::Result<Self> {
        let meta = fs::metadata(path)?;
        let mtime_nanos = meta
            .modified()?
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        Ok(Self {
            mtime_nanos,
            len: meta.len(),
        })
    }
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn u128(&mut self) -> Option<u128> {
        Some(u128::from_le_bytes(self.take(16)?.try_into().ok()?))
    }

    fn string(&mut self) -> Option<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).ok()
    }
}

/// Vectors from a sidecar, if it is still valid for this corpus and embedder.
fn read_sidecar(
    path: &Path,
    stamp: &CorpusStamp,
    fingerprint: &str,
    documents: &[Document],
) -> Option<(Vec<Vec<f64>>, usize)> {
    let mut bytes = Vec::new();
    fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
    let mut cur = Cursor(&bytes);
    if cur.take(SIDECAR_MAGIC.len())? != SIDECAR_MAGIC {
        return None;
    }
    if cur.u128()? != stamp.mtime_nanos || cur.u64()? != stamp.len || cur.string()? != fingerprint {
        return None;
    }
    let n = cur.u64()? as usize;
    let dim = cur.u64()? as usize;
    if n != documents.len() || dim == 0 {
        return None;
    }
    for doc in documents {
        if cur.string()? != doc.id {
            return None;
        }
    }
    let mut vectors = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = cur.take(dim * 8)?;
        vectors.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        );
    }
    cur.0.is_empty().then_some((vectors, dim))
}

/// Build (or load from the sidecar cache) the index for one corpus file.
/// Returns the index and whether the cache was used.
pub fn load_or_build(
    corpus: &Path,
    lang: &LanguageTag,
    embedder: &dyn Embedder,
) -> Result<(CorpusIndex, bool), RetrievalError> {
    let io = |e: std::io::Error| RetrievalError::Io {
        path: corpus.to_path_buf(),
        message: e.to_string(),
    };
    let documents = read_corpus(corpus, lang)?;
    let stamp = CorpusStamp::of(corpus).map_err(io)?;
    let fingerprint = embedder.identity().fingerprint();
    let sidecar = sidecar_path(corpus);
    if let Some((vectors, dim)) = read_sidecar(&sidecar, &stamp, &fingerprint, &documents) {
        log::debug!("{}: using cached index", corpus.display());
        return Ok((CorpusIndex::assemble(lang.clone(), documents, vectors, dim, false)?, true));
    }
    let index = CorpusIndex::from_documents(lang.clone(), documents, embedder)?;
    if let Err(e) = index.write_sidecar(&sidecar, &stamp, &fingerprint) {
        log::warn!("{}: could not write index cache: {e}", sidecar.display());
    }
    Ok((index, false))
}

pub fn build_index(corpus: &Path, lang: &LanguageTag, embedder: &dyn Embedder) -> Result<CorpusIndex, RetrievalError> {
    load_or_build(corpus, lang, embedder).map(|(index, _)| index)
}

/// Embed `query` and return the `k` best passages.
pub fn retrieve<'a>(
    index: &'a CorpusIndex,
    query: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<Hit<'a>>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let mut vectors = embedder.embed(&EmbedRequest::new([query])?)?;
    let v = vectors.pop().ok_or(BackendError::EmptyResponse)?;
    index.search(&v, k)
}

/// Indexes available to the pipeline, one per language.
pub type IndexSet = BTreeMap<LanguageTag, Arc<CorpusIndex>>;
