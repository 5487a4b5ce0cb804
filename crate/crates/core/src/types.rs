//! Ranked-list types shared by the retrieval stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry of a ranked retrieval result.
///
/// `rank` is 1-based and consecutive within a list. `score` is
/// stage-specific: a BM25 relevance for keyword hits (larger is better,
/// non-increasing with rank) and a squared L2 distance for semantic hits
/// (smaller is better, non-decreasing with rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub chunk_ref: String,
    pub score: f64,
    pub rank: usize,
}

/// Assign consecutive 1-based ranks to hits already in final order.
pub fn assign_ranks(hits: impl IntoIterator<Item = (String, f64)>) -> Vec<ScoredHit> {
    hits.into_iter()
        .enumerate()
        .map(|(i, (chunk_ref, score))| ScoredHit {
            chunk_ref,
            score,
            rank: i + 1,
        })
        .collect()
}

/// Check the structural invariants fusion relies on: unique refs and
/// consecutive 1-based ranks.
pub fn validate_ranked_list(list: &[ScoredHit]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (i, hit) in list.iter().enumerate() {
        if hit.rank != i + 1 {
            return Err(Error::InvalidRankedList(format!(
                "rank {} at position {} (expected {})",
                hit.rank,
                i,
                i + 1
            )));
        }
        if !seen.insert(hit.chunk_ref.as_str()) {
            return Err(Error::InvalidRankedList(format!(
                "duplicate chunk ref {}",
                hit.chunk_ref
            )));
        }
    }
    Ok(())
}
