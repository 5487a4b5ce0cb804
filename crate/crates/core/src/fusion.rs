//! Reciprocal Rank Fusion of ranked retrieval lists.
//!
//! A chunk at rank `r` (1-based, rank 1 best) in a list contributes
//! `1 / (k + r)` to its fused score; chunks absent from a list contribute no
//! term for it. The output contains the full union of the inputs sorted by
//! descending fused score, ties broken by ascending chunk id so repeated runs
//! order identically.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_ranked_list, ScoredHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Rank-smoothing constant of the reciprocal-rank formula.
    pub k: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { k: 60 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("fusion k must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fused candidate. `ranks[i]` is the chunk's rank in input list `i`, when
/// present there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHit {
    pub chunk_ref: String,
    pub rrf_score: f64,
    pub ranks: Vec<Option<usize>>,
}

/// Fuse ranked lists with reciprocal-rank scoring.
///
/// Every input list must have unique chunk refs and consecutive 1-based
/// ranks; violations are validation errors. No chunk from any input is
/// dropped and none invented: the output length equals the size of the union.
pub fn rrf_fuse(lists: &[&[ScoredHit]], cfg: &FusionConfig) -> Result<Vec<FusedHit>> {
    cfg.validate()?;
    for list in lists {
        validate_ranked_list(list)?;
    }

    let k = cfg.k as f64;
    let mut fused: HashMap<String, (f64, Vec<Option<usize>>)> = HashMap::new();
    for (list_idx, list) in lists.iter().enumerate() {
        for hit in *list {
            let entry = fused
                .entry(hit.chunk_ref.clone())
                .or_insert_with(|| (0.0, vec![None; lists.len()]));
            entry.0 += 1.0 / (k + hit.rank as f64);
            entry.1[list_idx] = Some(hit.rank);
        }
    }

    let mut out: Vec<FusedHit> = fused
        .into_iter()
        .map(|(chunk_ref, (rrf_score, ranks))| FusedHit {
            chunk_ref,
            rrf_score,
            ranks,
        })
        .collect();
    out.sort_by(|a, b| {
        b.rrf_score
            .partial_cmp(&a.rrf_score)
            .expect("rrf scores are finite")
            .then_with(|| a.chunk_ref.cmp(&b.chunk_ref))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::assign_ranks;

    fn list(refs: &[&str]) -> Vec<ScoredHit> {
        assign_ranks(
            refs.iter()
                .enumerate()
                .map(|(i, r)| (r.to_string(), 1.0 / (i + 1) as f64)),
        )
    }

    #[test]
    fn rank_one_in_both_lists_scores_two_over_sixty_one() {
        let fts = list(&["x", "a"]);
        let sem = list(&["x", "b"]);
        let fused = rrf_fuse(&[&fts, &sem], &FusionConfig::default()).unwrap();
        assert_eq!(fused[0].chunk_ref, "x");
        assert_eq!(fused[0].rrf_score, 2.0 / 61.0);
        assert!((fused[0].rrf_score - 0.032787).abs() < 1e-6);
        assert_eq!(fused[0].ranks, vec![Some(1), Some(1)]);
    }

    #[test]
    fn rank_one_in_a_single_list_scores_one_over_sixty_one() {
        let fts = list(&["only-fts"]);
        let sem = list(&["x"]);
        let fused = rrf_fuse(&[&fts, &sem], &FusionConfig::default()).unwrap();
        let hit = fused
            .iter()
            .find(|h| h.chunk_ref == "only-fts")
            .expect("union keeps the fts-only chunk");
        assert_eq!(hit.rrf_score, 1.0 / 61.0);
        assert!((hit.rrf_score - 0.016393).abs() < 1e-6);
        assert_eq!(hit.ranks, vec![Some(1), None]);
    }

    #[test]
    fn both_lists_beats_one_list_at_the_same_rank() {
        let fts = list(&["shared", "fts-only"]);
        let sem = list(&["shared"]);
        let fused = rrf_fuse(&[&fts, &sem], &FusionConfig::default()).unwrap();
        assert_eq!(fused[0].chunk_ref, "shared");
        assert!(fused[0].rrf_score > fused[1].rrf_score);
    }

    #[test]
    fn single_list_order_is_preserved() {
        let only = list(&["p", "q", "r", "s"]);
        let fused = rrf_fuse(&[&only], &FusionConfig::default()).unwrap();
        let order: Vec<&str> = fused.iter().map(|h| h.chunk_ref.as_str()).collect();
        assert_eq!(order, vec!["p", "q", "r", "s"]);
    }

    #[test]
    fn malformed_lists_are_rejected() {
        let dup = vec![
            ScoredHit {
                chunk_ref: "a".into(),
                score: 1.0,
                rank: 1,
            },
            ScoredHit {
                chunk_ref: "a".into(),
                score: 0.9,
                rank: 2,
            },
        ];
        assert!(matches!(
            rrf_fuse(&[&dup], &FusionConfig::default()),
            Err(Error::InvalidRankedList(_))
        ));

        let gapped = vec![ScoredHit {
            chunk_ref: "a".into(),
            score: 1.0,
            rank: 3,
        }];
        assert!(matches!(
            rrf_fuse(&[&gapped], &FusionConfig::default()),
            Err(Error::InvalidRankedList(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use std::collections::{BTreeSet, HashMap};

        /// Direct recomputation over the union of the inputs.
        pub(crate) fn brute_force_rrf(
            lists: &[&[ScoredHit]],
            k: usize,
        ) -> Vec<(String, f64)> {
            let union: BTreeSet<String> = lists
                .iter()
                .flat_map(|l| l.iter().map(|h| h.chunk_ref.clone()))
                .collect();
            let mut out: Vec<(String, f64)> = union
                .into_iter()
                .map(|chunk| {
                    let mut score = 0.0;
                    for list in lists {
                        if let Some(hit) = list.iter().find(|h| h.chunk_ref == chunk) {
                            score += 1.0 / (k as f64 + hit.rank as f64);
                        }
                    }
                    (chunk, score)
                })
                .collect();
            out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            out
        }

        fn ranked_list(ids: Vec<u8>) -> Vec<ScoredHit> {
            let unique: BTreeSet<u8> = ids.into_iter().collect();
            assign_ranks(
                unique
                    .into_iter()
                    .enumerate()
                    .map(|(i, id)| (format!("c{id:02}"), 1.0 / (i + 1) as f64)),
            )
        }

        proptest! {
            #[test]
            fn matches_brute_force_recomputation(
                a in proptest::collection::vec(0u8..40, 0..30),
                b in proptest::collection::vec(0u8..40, 0..30),
                k in 1usize..100,
            ) {
                let la = ranked_list(a);
                let lb = ranked_list(b);
                let cfg = FusionConfig { k };
                let fused = rrf_fuse(&[&la, &lb], &cfg).unwrap();
                let expected = brute_force_rrf(&[&la, &lb], k);

                prop_assert_eq!(fused.len(), expected.len());
                for (hit, (id, score)) in fused.iter().zip(&expected) {
                    prop_assert_eq!(&hit.chunk_ref, id);
                    prop_assert_eq!(hit.rrf_score, *score);
                }

                // Union completeness and score bound.
                let union: BTreeSet<&str> = la
                    .iter()
                    .chain(lb.iter())
                    .map(|h| h.chunk_ref.as_str())
                    .collect();
                prop_assert_eq!(fused.len(), union.len());
                for hit in &fused {
                    prop_assert!(hit.rrf_score > 0.0);
                    prop_assert!(hit.rrf_score <= 2.0 / (k as f64 + 1.0));
                }
            }

            #[test]
            fn improving_a_rank_never_lowers_the_fused_position(
                ids in proptest::collection::vec(0u8..30, 2..20),
                other in proptest::collection::vec(0u8..30, 0..20),
                swap in 1usize..19,
            ) {
                let base = ranked_list(ids);
                prop_assume!(base.len() >= 2);
                let swap = swap.min(base.len() - 1);
                let lb = ranked_list(other);

                // Promote the chunk at position `swap` by one place.
                let mut improved: Vec<String> =
                    base.iter().map(|h| h.chunk_ref.clone()).collect();
                improved.swap(swap - 1, swap);
                let target = base[swap].chunk_ref.clone();
                let la2 = assign_ranks(
                    improved.into_iter().map(|r| (r, 0.0)),
                );

                let cfg = FusionConfig::default();
                let before = rrf_fuse(&[&base, &lb], &cfg).unwrap();
                let after = rrf_fuse(&[&la2, &lb], &cfg).unwrap();

                let pos = |fused: &[FusedHit]| {
                    fused.iter().position(|h| h.chunk_ref == target).unwrap()
                };
                prop_assert!(pos(&after) <= pos(&before));
            }
        }
    }
}
