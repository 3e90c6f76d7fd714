//! Inverted index scored with Okapi BM25.

use std::collections::{BTreeMap, BTreeSet};

use crate::text::terms;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
pub fn bm25_idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

pub fn bm25_term_score(tf: u32, doc_len: u32, avg_len: f64, idf: f64) -> f64 {
    let tf = f64::from(tf);
    let norm = if avg_len > 0.0 { f64::from(doc_len) / avg_len } else { 0.0 };
    idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub total_len: u64,
    pub avg_len: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseIndex {
    /// term -> chunk_id -> term frequency; inner maps keep postings sorted by id.
    postings: BTreeMap<String, BTreeMap<String, u32>>,
    /// chunk_id -> term frequencies of that chunk.
    forward: BTreeMap<String, BTreeMap<String, u32>>,
    total_len: u64,
}

impl SparseIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        let n_docs = self.forward.len();
        CorpusStats {
            n_docs,
            total_len: self.total_len,
            avg_len: if n_docs == 0 { 0.0 } else { self.total_len as f64 / n_docs as f64 },
        }
    }

    pub fn doc_len(&self, chunk_id: &str) -> Option<u32> {
        self.forward.get(chunk_id).map(|tfs| tfs.values().sum())
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeMap::len)
    }

    pub fn postings(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p))
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = &str> {
        self.forward.keys().map(String::as_str)
    }

    pub fn remove(&mut self, chunk_id: &str) {
        if let Some(tfs) = self.forward.remove(chunk_id) {
            for (term, tf) in tfs {
                self.total_len -= u64::from(tf);
                if let Some(list) = self.postings.get_mut(&term) {
                    list.remove(chunk_id);
                    if list.is_empty() {
                        self.postings.remove(&term);
                    }
                }
            }
        }
    }

    /// Indexes `text` under `chunk_id`, replacing any previous entry.
    pub fn insert(&mut self, chunk_id: &str, text: &str) {
        let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
        for t in terms(text) {
            *tfs.entry(t).or_insert(0) += 1;
        }
        self.insert_frequencies(chunk_id, tfs);
    }

    pub(crate) fn insert_frequencies(&mut self, chunk_id: &str, tfs: BTreeMap<String, u32>) {
        self.remove(chunk_id);
        for (term, &tf) in &tfs {
            self.total_len += u64::from(tf);
            self.postings.entry(term.clone()).or_default().insert(chunk_id.to_string(), tf);
        }
        self.forward.insert(chunk_id.to_string(), tfs);
    }

    /// True when postings and the forward map describe the same corpus and
    /// the cached total length matches a recomputation.
    pub fn is_consistent(&self) -> bool {
        let mut rebuilt: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        let mut total = 0u64;
        for (id, tfs) in &self.forward {
            for (term, &tf) in tfs {
                total += u64::from(tf);
                rebuilt.entry(term.clone()).or_default().insert(id.clone(), tf);
            }
        }
        rebuilt == self.postings && total == self.total_len
    }

    /// BM25 score of every chunk containing at least one query term.
    pub fn score_all(&self, query: &str) -> Vec<(String, f64)> {
        let stats = self.stats();
        let query_terms: BTreeSet<String> = terms(query).into_iter().collect();
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for term in &query_terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = bm25_idf(stats.n_docs, list.len());
            for (id, &tf) in list {
                let dl = self.doc_len(id).unwrap_or(0);
                *scores.entry(id.as_str()).or_insert(0.0) += bm25_term_score(tf, dl, stats.avg_len, idf);
            }
        }
        scores.into_iter().map(|(id, s)| (id.to_string(), s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replacing_a_chunk_keeps_stats_consistent() {
        let mut idx = SparseIndex::new();
        idx.insert("a", "apple apple pie");
        idx.insert("b", "apple tart");
        assert_eq!(idx.stats().n_docs, 2);
        assert_eq!(idx.df("apple"), 2);
        idx.insert("a", "banana");
        assert_eq!(idx.stats().n_docs, 2);
        assert_eq!(idx.df("apple"), 1);
        assert_eq!(idx.df("pie"), 0);
        assert_eq!(idx.stats().total_len, 3);
        assert!(idx.is_consistent());
    }

    #[test]
    fn empty_text_has_zero_terms() {
        let mut idx = SparseIndex::new();
        idx.insert("e", "");
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.doc_len("e"), Some(0));
        assert!(idx.score_all("anything").is_empty());
    }

    #[test]
    fn idf_is_positive() {
        for n in 1..20 {
            for df in 1..=n {
                assert!(bm25_idf(n, df) > 0.0);
            }
        }
    }
}
