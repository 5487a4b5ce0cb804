//! Embedding provider abstraction and exact flat nearest-neighbor search.
//!
//! Search is an exhaustive scan over squared L2 distances with an inclusive
//! distance threshold; approximation structures are out of scope. The
//! [`HashedStubEmbedder`] is a deterministic, network-free provider used by
//! tests and the `--stub-gateways` mode: token frequencies hashed into a
//! fixed-dimension vector, L2-normalized.
//!
//! Build is single-writer; a built index is immutable and safely searchable
//! from many threads.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{self, Cursor};
use crate::error::{Error, Result, Stage};
use crate::fsutil;
use crate::text::tokenize;
use crate::types::{assign_ranks, ScoredHit};

const MAGIC: &[u8] = b"FRVX";
const VERSION: u32 = 1;

/// A fixed-dimension embedding. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn validate(&self, expected_dim: usize) -> Result<()> {
        if self.dim() != expected_dim {
            return Err(Error::DimMismatch {
                expected: expected_dim,
                actual: self.dim(),
            });
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::integrity(
                Stage::Embed,
                "embedding contains a non-finite value",
            ));
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Squared L2 distance, accumulated in f64.
    pub fn squared_distance(&self, other: &EmbeddingVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum()
    }
}

/// Identity and batching parameters of an embedding provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub provider: String,
    pub model: String,
    pub dim: usize,
    pub batch_size: usize,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec {
            provider: "stub".into(),
            model: "text-embedding-3-small".into(),
            dim: 1024,
            batch_size: 32,
        }
    }
}

impl EmbedderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("embedding batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// An embedding provider. Implementations must be deterministic per input or
/// document otherwise; every vector they return has `spec().dim` entries.
pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    /// Embed one batch of texts, order-preserving, one vector per input.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Embed arbitrarily many texts by slicing into `spec().batch_size` batches,
/// verifying count and dimension of every returned vector.
pub fn embed_all(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    let spec = embedder.spec();
    spec.validate()?;
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(spec.batch_size) {
        let vectors = embedder.embed_batch(batch)?;
        if vectors.len() != batch.len() {
            return Err(Error::integrity(
                Stage::Embed,
                format!(
                    "provider returned {} vectors for a batch of {}",
                    vectors.len(),
                    batch.len()
                ),
            ));
        }
        for v in &vectors {
            v.validate(spec.dim)?;
        }
        out.extend(vectors);
    }
    Ok(out)
}

/// 64-bit FNV-1a; stable across builds, unlike the std hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic offline embedder: hashed-token frequency projection,
/// L2-normalized. Token-free inputs map to the first basis vector so every
/// output has unit norm.
#[derive(Debug, Clone)]
pub struct HashedStubEmbedder {
    spec: EmbedderSpec,
}

impl HashedStubEmbedder {
    pub fn new(dim: usize, batch_size: usize) -> Self {
        HashedStubEmbedder {
            spec: EmbedderSpec {
                provider: "stub".into(),
                model: "hashed-token-projection".into(),
                dim,
                batch_size,
            },
        }
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let dim = self.spec.dim;
        let mut values = vec![0f32; dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            values[0] = 1.0;
            return EmbeddingVector(values);
        }
        for tok in tokens {
            let bucket = (fnv1a(tok.as_bytes()) % dim as u64) as usize;
            values[bucket] += 1.0;
        }
        let norm = values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        for v in &mut values {
            *v = (*v as f64 / norm) as f32;
        }
        EmbeddingVector(values)
    }
}

impl Default for HashedStubEmbedder {
    fn default() -> Self {
        HashedStubEmbedder::new(1024, 32)
    }
}

impl Embedder for HashedStubEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Validation("embed_batch requires >= 1 text".into()));
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Exact flat vector index: `(chunk_ref, vector)` entries of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<(String, EmbeddingVector)>,
    refs: HashSet<String>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Result<VectorIndex> {
        if dim == 0 {
            return Err(Error::Config("vector index dim must be positive".into()));
        }
        Ok(VectorIndex {
            dim,
            entries: Vec::new(),
            refs: HashSet::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }

    /// Append entries. Rejects dimension mismatches and refs already present.
    pub fn add(&mut self, pairs: impl IntoIterator<Item = (String, EmbeddingVector)>) -> Result<()> {
        for (chunk_ref, vector) in pairs {
            if vector.dim() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    actual: vector.dim(),
                });
            }
            if !self.refs.insert(chunk_ref.clone()) {
                return Err(Error::DuplicateChunkRef(chunk_ref));
            }
            self.entries.push((chunk_ref, vector));
        }
        Ok(())
    }

    /// Exhaustive search: the up-to-`top_k` entries with the smallest squared
    /// L2 distance to `query`, restricted to `distance <= threshold`
    /// (inclusive), ranked by ascending distance with ties broken by
    /// ascending chunk id. The hit score stores the distance.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        top_k: usize,
        distance_threshold: f64,
    ) -> Result<Vec<ScoredHit>> {
        if top_k == 0 {
            return Err(Error::Validation("top_k must be at least 1".into()));
        }
        if !(distance_threshold >= 0.0) {
            return Err(Error::Validation(
                "distance_threshold must be non-negative".into(),
            ));
        }
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }

        let mut hits: Vec<(String, f64)> = self
            .entries
            .iter()
            .map(|(id, v)| (id.clone(), query.squared_distance(v)))
            .filter(|(_, d)| *d <= distance_threshold)
            .collect();
        hits.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .expect("distances are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        hits.truncate(top_k);
        Ok(assign_ranks(hits))
    }

    /// Serialize to the versioned binary layout:
    /// `magic "FRVX" | version u32 | dim u32 | count u64 | ref id table
    /// (count x str) | count x dim little-endian f32`. `str` is a u32 byte
    /// length followed by UTF-8 bytes. Round-trips bit-identically.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        binio::put_u32(&mut buf, VERSION);
        binio::put_u32(&mut buf, self.dim as u32);
        binio::put_u64(&mut buf, self.entries.len() as u64);
        for (id, _) in &self.entries {
            binio::put_str(&mut buf, id);
        }
        for (_, v) in &self.entries {
            for &x in &v.0 {
                binio::put_f32(&mut buf, x);
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<VectorIndex> {
        let mut cur = Cursor::new(bytes, path);
        cur.expect_magic(MAGIC)?;
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::CorruptIndex {
                path: path.to_string(),
                message: format!("unsupported version {version}"),
            });
        }
        let dim = cur.u32()? as usize;
        let count = cur.u64()? as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(cur.str()?);
        }
        let mut entries = Vec::with_capacity(count);
        for id in ids {
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(cur.f32()?);
            }
            entries.push((id, EmbeddingVector(values)));
        }
        cur.finish()?;

        let refs: HashSet<String> = entries.iter().map(|(id, _)| id.clone()).collect();
        if refs.len() != entries.len() {
            return Err(Error::CorruptIndex {
                path: path.to_string(),
                message: "duplicate chunk refs".into(),
            });
        }
        Ok(VectorIndex { dim, entries, refs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<VectorIndex> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        VectorIndex::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector(values.to_vec())
    }

    fn small_index() -> VectorIndex {
        let mut index = VectorIndex::new(3).unwrap();
        index
            .add(vec![
                ("a".to_string(), vec_of(&[1.0, 0.0, 0.0])),
                ("b".to_string(), vec_of(&[0.0, 1.0, 0.0])),
                ("c".to_string(), vec_of(&[0.0, 0.0, 1.0])),
            ])
            .unwrap();
        index
    }

    #[test]
    fn stub_is_deterministic_per_text() {
        let stub = HashedStubEmbedder::new(64, 32);
        let out = stub
            .embed_batch(&["net revenue".into(), "net revenue".into()])
            .unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn stub_outputs_unit_norm_vectors() {
        let stub = HashedStubEmbedder::new(64, 32);
        for text in ["", "one", "a b c d e f g", "重複 重複 token"] {
            let v = &stub.embed_batch(&[text.into()]).unwrap()[0];
            assert!(
                (v.l2_norm() - 1.0).abs() < 1e-6,
                "norm for {text:?} was {}",
                v.l2_norm()
            );
        }
    }

    #[test]
    fn embed_all_rejects_wrong_dimension_from_provider() {
        struct Short;
        impl Embedder for Short {
            fn spec(&self) -> &EmbedderSpec {
                static SPEC: std::sync::OnceLock<EmbedderSpec> = std::sync::OnceLock::new();
                SPEC.get_or_init(|| EmbedderSpec {
                    provider: "test".into(),
                    model: "short".into(),
                    dim: 1024,
                    batch_size: 8,
                })
            }
            fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
                Ok(texts.iter().map(|_| EmbeddingVector(vec![0.0; 512])).collect())
            }
        }
        let err = embed_all(&Short, &["x".into()]).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { expected: 1024, actual: 512 }));
    }

    #[test]
    fn add_counts_and_rejects_duplicates_and_dim_mismatch() {
        let mut index = small_index();
        assert_eq!(index.len(), 3);

        let err = index
            .add(vec![("a".to_string(), vec_of(&[1.0, 0.0, 0.0]))])
            .unwrap_err();
        match err {
            Error::DuplicateChunkRef(id) => assert_eq!(id, "a"),
            other => panic!("expected DuplicateChunkRef, got {other:?}"),
        }

        let err = index
            .add(vec![("d".to_string(), vec_of(&[1.0, 0.0]))])
            .unwrap_err();
        assert!(matches!(err, Error::DimMismatch { .. }));
    }

    #[test]
    fn identity_query_returns_distance_zero_at_rank_one() {
        let index = small_index();
        let hits = index.search(&vec_of(&[0.0, 1.0, 0.0]), 5, 2.0).unwrap();
        assert_eq!(hits[0].chunk_ref, "b");
        assert_eq!(hits[0].score, 0.0);
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn orthonormal_pair_sits_on_the_inclusive_boundary() {
        let index = small_index();
        let hits = index.search(&vec_of(&[1.0, 0.0, 0.0]), 5, 2.0).unwrap();
        // The two orthogonal unit vectors are at squared distance exactly 2.0
        // and must be included.
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[1].score, 2.0);
        assert_eq!(hits[2].score, 2.0);
        // Tie at 2.0 broken by ascending chunk id.
        assert_eq!(hits[1].chunk_ref, "b");
        assert_eq!(hits[2].chunk_ref, "c");

        // Just below the boundary they disappear.
        let hits = index.search(&vec_of(&[1.0, 0.0, 0.0]), 5, 1.999).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn query_dim_mismatch_is_an_error() {
        let index = small_index();
        assert!(matches!(
            index.search(&vec_of(&[1.0, 0.0]), 5, 2.0),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn save_load_round_trips_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.bin");
        let index = small_index();
        index.save(&path).unwrap();
        let loaded = VectorIndex::load(&path).unwrap();
        assert_eq!(loaded, index);
        assert_eq!(loaded.to_bytes(), index.to_bytes());
    }

    #[test]
    fn corrupt_file_is_reported() {
        let bytes = small_index().to_bytes();
        assert!(matches!(
            VectorIndex::from_bytes(&bytes[..bytes.len() - 1], "vectors.bin"),
            Err(Error::CorruptIndex { .. })
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Exhaustive scan written directly against the entry list.
        pub(crate) fn brute_force_search(
            entries: &[(String, Vec<f32>)],
            query: &[f32],
            top_k: usize,
            threshold: f64,
        ) -> Vec<(String, f64)> {
            let mut scored: Vec<(String, f64)> = entries
                .iter()
                .map(|(id, v)| {
                    let d: f64 = v
                        .iter()
                        .zip(query)
                        .map(|(&a, &b)| {
                            let d = a as f64 - b as f64;
                            d * d
                        })
                        .sum();
                    (id.clone(), d)
                })
                .filter(|(_, d)| *d <= threshold)
                .collect();
            scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            scored.truncate(top_k);
            scored
        }

        proptest! {
            #[test]
            fn search_equals_exhaustive_scan(
                vectors in proptest::collection::vec(
                    proptest::collection::vec(-4.0f32..4.0, 4),
                    1..40
                ),
                query in proptest::collection::vec(-4.0f32..4.0, 4),
                top_k in 1usize..20,
                threshold in 0.0f64..80.0,
            ) {
                let entries: Vec<(String, Vec<f32>)> = vectors
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| (format!("c{i:03}"), v))
                    .collect();
                let mut index = VectorIndex::new(4).unwrap();
                index
                    .add(entries.iter().map(|(id, v)| {
                        (id.clone(), EmbeddingVector(v.clone()))
                    }))
                    .unwrap();

                let hits = index
                    .search(&EmbeddingVector(query.clone()), top_k, threshold)
                    .unwrap();
                let expected = brute_force_search(&entries, &query, top_k, threshold);

                prop_assert_eq!(hits.len(), expected.len());
                for (hit, (id, d)) in hits.iter().zip(&expected) {
                    prop_assert_eq!(&hit.chunk_ref, id);
                    prop_assert_eq!(hit.score, *d);
                }
            }

            #[test]
            fn raising_the_threshold_never_removes_a_hit(
                vectors in proptest::collection::vec(
                    proptest::collection::vec(-2.0f32..2.0, 3),
                    1..30
                ),
                query in proptest::collection::vec(-2.0f32..2.0, 3),
                low in 0.0f64..10.0,
                bump in 0.0f64..10.0,
            ) {
                let mut index = VectorIndex::new(3).unwrap();
                index
                    .add(vectors.into_iter().enumerate().map(|(i, v)| {
                        (format!("c{i:03}"), EmbeddingVector(v))
                    }))
                    .unwrap();
                let q = EmbeddingVector(query);
                let top_k = index.len();
                let narrow = index.search(&q, top_k, low).unwrap();
                let wide = index.search(&q, top_k, low + bump).unwrap();
                let wide_refs: std::collections::HashSet<_> =
                    wide.iter().map(|h| h.chunk_ref.clone()).collect();
                for hit in &narrow {
                    prop_assert!(wide_refs.contains(&hit.chunk_ref));
                }
            }
        }
    }
}
