//! Hybrid sparse + dense retrieval over chunks.
//!
//! Every chunk is held twice: as BM25 postings and as a unit vector from the
//! configured [`Embedder`]. Queries can use either side or fuse both with
//! reciprocal rank fusion or a weighted score blend. Ties are always broken
//! by ascending chunk id.

mod dense;
mod embed;
mod persist;
mod sparse;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::postproc::Chunk;

pub use dense::{dot, DenseIndex};
pub use embed::{hash_embed, normalize, EmbedError, Embedder, HashEmbedder, DEFAULT_HASH_DIM, MIN_HASH_DIM};
pub use persist::{load_index, save_index, INDEX_FORMAT_VERSION};
pub use sparse::{bm25_idf, bm25_term_score, CorpusStats, SparseIndex, BM25_B, BM25_K1};

/// Reciprocal rank fusion constant.
pub const RRF_C: f64 = 60.0;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("embedder dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index was built with embedder `{expected}`, got `{got}`")]
    EmbedderMismatch { expected: String, got: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("index I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitSource {
    Sparse,
    Dense,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
    pub source: HitSource,
}

/// How a query is answered. Text form: `sparse`, `dense`, `rrf`, or
/// `weighted:<alpha>` with alpha in [0, 1] weighting the sparse side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RetrievalMode {
    Sparse,
    Dense,
    Rrf,
    Weighted { alpha: f64 },
}

impl Default for RetrievalMode {
    fn default() -> Self {
        RetrievalMode::Rrf
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalMode::Sparse => f.write_str("sparse"),
            RetrievalMode::Dense => f.write_str("dense"),
            RetrievalMode::Rrf => f.write_str("rrf"),
            RetrievalMode::Weighted { alpha } => write!(f, "weighted:{alpha}"),
        }
    }
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" => Ok(RetrievalMode::Sparse),
            "dense" => Ok(RetrievalMode::Dense),
            "rrf" | "hybrid" => Ok(RetrievalMode::Rrf),
            other => {
                let alpha = other
                    .strip_prefix("weighted:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown retrieval mode `{other}`"))?;
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(format!("weighted alpha must lie in [0, 1], got {alpha}"));
                }
                Ok(RetrievalMode::Weighted { alpha })
            }
        }
    }
}

impl Serialize for RetrievalMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RetrievalMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Sorts descending by score, ascending by id, keeps the top `k` and assigns
/// ranks.
pub fn rank_scores(mut scored: Vec<(String, f64)>, k: usize, source: HitSource) -> Vec<RetrievalHit> {
    scored.sort_by(by_score_then_id);
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (chunk_id, score))| RetrievalHit { chunk_id, score, rank: i + 1, source })
        .collect()
}

/// `sum over lists of 1 / (C + rank)`, lists a chunk is absent from add 0.
pub fn rrf_fuse(lists: &[&[RetrievalHit]]) -> Vec<(String, f64)> {
    let mut fused: BTreeMap<&str, f64> = BTreeMap::new();
    for list in lists {
        for hit in *list {
            *fused.entry(hit.chunk_id.as_str()).or_insert(0.0) += 1.0 / (RRF_C + hit.rank as f64);
        }
    }
    fused.into_iter().map(|(id, s)| (id.to_string(), s)).collect()
}

/// `alpha * sparse/max(sparse) + (1 - alpha) * minmax(dense)`.
///
/// BM25 is bounded below by 0, which is the score of every chunk missing
/// from the sparse list, so the sparse side is min-max normalised with 0 as
/// its minimum. Dense scores use the observed minimum and maximum; a
/// constant list normalises to 1. Candidates with a fused score of 0 carry no
/// evidence from either side and are dropped.
pub fn weighted_fuse(sparse: &[(String, f64)], dense: &[(String, f64)], alpha: f64) -> Vec<(String, f64)> {
    let smax = sparse.iter().map(|x| x.1).fold(0.0f64, f64::max);
    let dmin = dense.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let dmax = dense.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let mut fused: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, s) in sparse {
        let norm = if smax > 0.0 { s / smax } else { 0.0 };
        *fused.entry(id.as_str()).or_insert(0.0) += alpha * norm;
    }
    for (id, d) in dense {
        let norm = if dmax > dmin { (d - dmin) / (dmax - dmin) } else { 1.0 };
        *fused.entry(id.as_str()).or_insert(0.0) += (1.0 - alpha) * norm;
    }
    fused.into_iter().filter(|(_, s)| *s > 0.0).map(|(id, s)| (id.to_string(), s)).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HybridIndex {
    chunks: BTreeMap<String, Chunk>,
    sparse: SparseIndex,
    dense: DenseIndex,
    embedder: Option<String>,
}

impl HybridIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dense.dim()
    }

    pub fn embedder_identity(&self) -> Option<&str> {
        self.embedder.as_deref()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunks.get(chunk_id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.dense
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), IndexError> {
        if let Some(expected) = &self.embedder {
            let got = embedder.identity();
            if *expected != got {
                return Err(IndexError::EmbedderMismatch { expected: expected.clone(), got });
            }
            if embedder.dim() != self.dense.dim() {
                return Err(IndexError::DimensionMismatch { expected: self.dense.dim(), got: embedder.dim() });
            }
        }
        Ok(())
    }

    /// Adds or replaces chunks in both sub-indexes.
    pub fn add_chunks(&mut self, chunks: &[Chunk], embedder: &dyn Embedder) -> Result<(), IndexError> {
        self.check_embedder(embedder)?;
        if chunks.is_empty() {
            return Ok(());
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        for v in &vectors {
            if v.len() != embedder.dim() {
                return Err(IndexError::DimensionMismatch { expected: embedder.dim(), got: v.len() });
            }
        }
        if self.embedder.is_none() {
            self.embedder = Some(embedder.identity());
            self.dense = DenseIndex::new(embedder.dim());
        }
        for (chunk, mut v) in chunks.iter().zip(vectors) {
            normalize(&mut v);
            self.sparse.insert(&chunk.chunk_id, &chunk.text);
            self.dense.insert(&chunk.chunk_id, v);
            self.chunks.insert(chunk.chunk_id.clone(), chunk.clone());
        }
        Ok(())
    }

    pub fn search_sparse(&self, query: &str, k: usize) -> Vec<RetrievalHit> {
        rank_scores(self.sparse.score_all(query), k, HitSource::Sparse)
    }

    fn dense_scores(&self, query: &str, embedder: &dyn Embedder) -> Result<Vec<(String, f64)>, IndexError> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        self.check_embedder(embedder)?;
        let mut q = embedder.embed(query)?;
        if q.len() != self.dense.dim() {
            return Err(IndexError::DimensionMismatch { expected: self.dense.dim(), got: q.len() });
        }
        normalize(&mut q);
        Ok(self.dense.score_all(&q))
    }

    pub fn search_dense(&self, query: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<RetrievalHit>, IndexError> {
        Ok(rank_scores(self.dense_scores(query, embedder)?, k, HitSource::Dense))
    }

    pub fn search_hybrid(
        &self,
        query: &str,
        k: usize,
        mode: RetrievalMode,
        embedder: &dyn Embedder,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        match mode {
            RetrievalMode::Sparse => Ok(self.search_sparse(query, k)),
            RetrievalMode::Dense => self.search_dense(query, k, embedder),
            RetrievalMode::Rrf => {
                let all = self.len();
                let sparse = self.search_sparse(query, all);
                let dense = self.search_dense(query, all, embedder)?;
                Ok(rank_scores(rrf_fuse(&[&sparse, &dense]), k, HitSource::Hybrid))
            }
            RetrievalMode::Weighted { alpha } => {
                let sparse = self.sparse.score_all(query);
                let dense = self.dense_scores(query, embedder)?;
                Ok(rank_scores(weighted_fuse(&sparse, &dense, alpha), k, HitSource::Hybrid))
            }
        }
    }

    /// Dispatches on `mode`; the single entry point used by services.
    pub fn search(
        &self,
        query: &str,
        k: usize,
        mode: RetrievalMode,
        embedder: &dyn Embedder,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        self.search_hybrid(query, k, mode, embedder)
    }

    pub(crate) fn from_parts(
        chunks: BTreeMap<String, Chunk>,
        sparse: SparseIndex,
        dense: DenseIndex,
        embedder: Option<String>,
    ) -> Self {
        Self { chunks, sparse, dense, embedder }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: id.into(),
            text: text.into(),
            token_span: (0, text.split_whitespace().count().max(1)),
            tags: vec![],
            modal_refs: vec![],
        }
    }

    fn fruit() -> HybridIndex {
        let mut idx = HybridIndex::new();
        idx.add_chunks(
            &[chunk("d1", "apple apple pie"), chunk("d2", "apple tart"), chunk("d3", "banana bread")],
            &HashEmbedder::default(),
        )
        .unwrap();
        idx
    }

    #[test]
    fn add_three_chunks() {
        let idx = fruit();
        assert_eq!(idx.sparse().stats().n_docs, 3);
        assert_eq!(idx.dense().len(), 3);
    }

    #[test]
    fn readd_replaces() {
        let mut idx = fruit();
        idx.add_chunks(&[chunk("d1", "cherry")], &HashEmbedder::default()).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.sparse().df("apple"), 1);
        assert_eq!(idx.sparse().df("cherry"), 1);
        assert_eq!(idx.dense().get("d1").unwrap(), HashEmbedder::default().embed("cherry").unwrap().as_slice());
        assert!(idx.sparse().is_consistent());
    }

    #[test]
    fn empty_chunk_gets_e0() {
        let mut idx = HybridIndex::new();
        idx.add_chunks(&[chunk("e", "")], &HashEmbedder::default()).unwrap();
        assert_eq!(idx.sparse().doc_len("e"), Some(0));
        let v = idx.dense().get("e").unwrap();
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn sparse_ordering_on_fruit_corpus() {
        let hits = fruit().search_sparse("apple", 10);
        let ids: Vec<_> = hits.iter().map(|h| h.chunk_id.as_str()).collect();
        assert_eq!(ids, vec!["d1", "d2"]);
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn sparse_edge_cases() {
        assert!(fruit().search_sparse("kiwi", 5).is_empty());
        assert!(HybridIndex::new().search_sparse("apple", 5).is_empty());
        let mut one = HybridIndex::new();
        one.add_chunks(&[chunk("only", "apple")], &HashEmbedder::default()).unwrap();
        assert_eq!(one.search_sparse("apple", 5).len(), 1);
    }

    #[test]
    fn dense_self_similarity() {
        let idx = fruit();
        let hits = idx.search_dense("banana bread", 3, &HashEmbedder::default()).unwrap();
        assert_eq!(hits[0].chunk_id, "d3");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    struct Axis(usize);

    impl Embedder for Axis {
        fn identity(&self) -> String {
            "axis".into()
        }
        fn dim(&self) -> usize {
            8
        }
        fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
            let mut v = vec![0.0; 8];
            v[if text == "query" { self.0 } else { text.len() % 8 }] = 1.0;
            Ok(v)
        }
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        let mut idx = HybridIndex::new();
        idx.add_chunks(&[chunk("a", "xx")], &Axis(5)).unwrap();
        let hits = idx.search_dense("query", 1, &Axis(5)).unwrap();
        assert_eq!(hits[0].score, 0.0);
    }

    #[test]
    fn embedder_mismatch_is_rejected() {
        let idx = fruit();
        assert!(matches!(idx.search_dense("q", 1, &Axis(0)), Err(IndexError::EmbedderMismatch { .. })));
        let mut idx = fruit();
        assert!(matches!(idx.add_chunks(&[chunk("z", "z")], &HashEmbedder::new(32)), Err(IndexError::EmbedderMismatch { .. })));
    }

    #[test]
    fn rrf_formula() {
        let sparse = vec![RetrievalHit { chunk_id: "x".into(), score: 3.0, rank: 1, source: HitSource::Sparse }];
        let dense = vec![
            RetrievalHit { chunk_id: "y".into(), score: 0.9, rank: 1, source: HitSource::Dense },
            RetrievalHit { chunk_id: "x".into(), score: 0.8, rank: 2, source: HitSource::Dense },
        ];
        let fused: BTreeMap<_, _> = rrf_fuse(&[&sparse, &dense]).into_iter().collect();
        assert!((fused["x"] - (1.0 / 61.0 + 1.0 / 62.0)).abs() < 1e-15);
        assert!((fused["x"] - 0.032_522_4).abs() < 1e-7);
        let only: BTreeMap<_, _> = rrf_fuse(&[&sparse, &[]]).into_iter().collect();
        assert_eq!(only["x"], 1.0 / 61.0);
    }

    #[test]
    fn weighted_alpha_one_is_sparse_order() {
        let idx = fruit();
        let e = HashEmbedder::default();
        let weighted = idx.search_hybrid("apple pie", 10, RetrievalMode::Weighted { alpha: 1.0 }, &e).unwrap();
        let sparse = idx.search_sparse("apple pie", 10);
        let a: Vec<_> = weighted.iter().map(|h| &h.chunk_id).collect();
        let b: Vec<_> = sparse.iter().map(|h| &h.chunk_id).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_text_form() {
        for m in ["sparse", "dense", "rrf", "weighted:0.25"] {
            assert_eq!(m.parse::<RetrievalMode>().unwrap().to_string(), m);
        }
        assert!("weighted:2".parse::<RetrievalMode>().is_err());
        assert!("bm42".parse::<RetrievalMode>().is_err());
        let json = serde_json::to_string(&RetrievalMode::Weighted { alpha: 0.5 }).unwrap();
        assert_eq!(json, "\"weighted:0.5\"");
    }
}
