//! On-disk layout of a [`HybridIndex`]:
//!
//! ```text
//! <dir>/manifest.json    format tag, version, embedder identity, dim, checksums
//! <dir>/chunks.jsonl     one chunk record per line, ascending chunk id
//! <dir>/postings.jsonl   {"term": .., "postings": [[chunk_id, tf], ..]} per term
//! <dir>/vectors.f32      dim little-endian f32 per chunk, chunk order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DenseIndex, HybridIndex, IndexError, SparseIndex};
use crate::postproc::Chunk;

pub const INDEX_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "mmore-hybrid-index";

const MANIFEST: &str = "manifest.json";
const CHUNKS: &str = "chunks.jsonl";
const POSTINGS: &str = "postings.jsonl";
const VECTORS: &str = "vectors.f32";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    embedder: Option<String>,
    dim: usize,
    chunk_count: usize,
    checksums: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct PostingLine {
    term: String,
    postings: Vec<(String, u32)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::CorruptIndex(msg.into())
}

pub fn save_index(index: &HybridIndex, dir: &Path) -> Result<(), IndexError> {
    fs::create_dir_all(dir)?;

    let mut chunks = Vec::new();
    let mut vectors = Vec::with_capacity(index.len() * index.dim() * 4);
    for chunk in index.chunks() {
        serde_json::to_writer(&mut chunks, chunk).map_err(std::io::Error::from)?;
        chunks.push(b'\n');
        let v = index.dense().get(&chunk.chunk_id).ok_or_else(|| corrupt("chunk without vector"))?;
        for x in v {
            vectors.extend_from_slice(&x.to_le_bytes());
        }
    }

    let mut postings = Vec::new();
    for (term, list) in index.sparse().postings() {
        let line = PostingLine {
            term: term.to_string(),
            postings: list.iter().map(|(id, &tf)| (id.clone(), tf)).collect(),
        };
        serde_json::to_writer(&mut postings, &line).map_err(std::io::Error::from)?;
        postings.push(b'\n');
    }

    let mut checksums = BTreeMap::new();
    for (name, bytes) in [(CHUNKS, &chunks), (POSTINGS, &postings), (VECTORS, &vectors)] {
        checksums.insert(name.to_string(), sha256_hex(bytes));
        fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: INDEX_FORMAT_VERSION,
        embedder: index.embedder_identity().map(str::to_string),
        dim: index.dim(),
        chunk_count: index.len(),
        checksums,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::from)?;
    // Manifest last: a directory without one is never mistaken for an index.
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>, IndexError> {
    let bytes = fs::read(dir.join(name)).map_err(|e| corrupt(format!("{name}: {e}")))?;
    let expected = manifest.checksums.get(name).ok_or_else(|| corrupt(format!("no checksum for {name}")))?;
    if sha256_hex(&bytes) != *expected {
        return Err(corrupt(format!("{name}: checksum mismatch")));
    }
    Ok(bytes)
}

pub fn load_index(dir: &Path) -> Result<HybridIndex, IndexError> {
    let raw = fs::read(dir.join(MANIFEST))?;
    let manifest: Manifest =
        serde_json::from_slice(&raw).map_err(|e| corrupt(format!("manifest: {e}")))?;
    if manifest.format != FORMAT_TAG {
        return Err(corrupt(format!("unexpected format tag `{}`", manifest.format)));
    }
    if manifest.version != INDEX_FORMAT_VERSION {
        return Err(IndexError::VersionMismatch { expected: INDEX_FORMAT_VERSION, found: manifest.version });
    }

    let chunk_bytes = read_checked(dir, CHUNKS, &manifest)?;
    let posting_bytes = read_checked(dir, POSTINGS, &manifest)?;
    let vector_bytes = read_checked(dir, VECTORS, &manifest)?;

    let mut chunks = BTreeMap::new();
    for line in chunk_bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        let c: Chunk = serde_json::from_slice(line).map_err(|e| corrupt(format!("chunks: {e}")))?;
        chunks.insert(c.chunk_id.clone(), c);
    }
    if chunks.len() != manifest.chunk_count {
        return Err(corrupt(format!("manifest lists {} chunks, found {}", manifest.chunk_count, chunks.len())));
    }

    let mut forward: BTreeMap<String, BTreeMap<String, u32>> =
        chunks.keys().map(|id| (id.clone(), BTreeMap::new())).collect();
    for line in posting_bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        let p: PostingLine = serde_json::from_slice(line).map_err(|e| corrupt(format!("postings: {e}")))?;
        for (id, tf) in p.postings {
            forward
                .get_mut(&id)
                .ok_or_else(|| corrupt(format!("posting for unknown chunk `{id}`")))?
                .insert(p.term.clone(), tf);
        }
    }
    let mut sparse = SparseIndex::new();
    for (id, tfs) in forward {
        sparse.insert_frequencies(&id, tfs);
    }

    let dim = manifest.dim;
    if vector_bytes.len() != chunks.len() * dim * 4 {
        return Err(corrupt("vector file size does not match chunk count and dimension"));
    }
    let mut dense = DenseIndex::new(dim);
    if dim > 0 {
        for (id, raw) in chunks.keys().zip(vector_bytes.chunks_exact(dim * 4)) {
            let v = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            dense.insert(id, v);
        }
    }

    Ok(HybridIndex::from_parts(chunks, sparse, dense, manifest.embedder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{HashEmbedder, RetrievalMode};

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: "doc".into(),
            text: text.into(),
            token_span: (0, 1),
            tags: vec!["t".into()],
            modal_refs: vec![],
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let e = HashEmbedder::default();
        let mut idx = HybridIndex::new();
        idx.add_chunks(&[chunk("a", "red fox jumps"), chunk("b", "lazy dog sleeps"), chunk("c", "")], &e)
            .unwrap();
        save_index(&idx, dir.path()).unwrap();
        let back = load_index(dir.path()).unwrap();
        assert_eq!(back, idx);
        for mode in [RetrievalMode::Sparse, RetrievalMode::Dense, RetrievalMode::Rrf] {
            assert_eq!(back.search("fox dog", 3, mode, &e).unwrap(), idx.search("fox dog", 3, mode, &e).unwrap());
        }
    }

    #[test]
    fn empty_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&HybridIndex::new(), dir.path()).unwrap();
        let back = load_index(dir.path()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, HybridIndex::new());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let mut idx = HybridIndex::new();
        idx.add_chunks(&[chunk("a", "some text")], &HashEmbedder::default()).unwrap();
        save_index(&idx, dir.path()).unwrap();
        let path = dir.path().join(VECTORS);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_index(dir.path()), Err(IndexError::CorruptIndex(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&HybridIndex::new(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_index(dir.path()), Err(IndexError::VersionMismatch { found: 99, .. })));
    }
}
