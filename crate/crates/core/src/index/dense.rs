use std::collections::BTreeMap;

/// Exact brute-force vector store. Vectors are unit-norm so cosine
/// similarity is the dot product.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

impl DenseIndex {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, chunk_id: &str) -> Option<&[f32]> {
        self.vectors.get(chunk_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Caller guarantees `vector.len() == dim`.
    pub fn insert(&mut self, chunk_id: &str, vector: Vec<f32>) {
        debug_assert_eq!(vector.len(), self.dim);
        self.vectors.insert(chunk_id.to_string(), vector);
    }

    pub fn remove(&mut self, chunk_id: &str) {
        self.vectors.remove(chunk_id);
    }

    /// Cosine similarity of `query` against every stored vector.
    pub fn score_all(&self, query: &[f32]) -> Vec<(String, f64)> {
        self.vectors.iter().map(|(id, v)| (id.clone(), dot(query, v))).collect()
    }
}
