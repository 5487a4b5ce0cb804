//! Cross-encoder reranking and adaptive cutoff selection.
//!
//! Candidates from rank fusion are scored in [0, 1] by a [`RelevanceScorer`]
//! (a remote cross-encoder in production, a token-overlap scorer offline) and
//! a prefix of the score-sorted list is selected by two jointly applied
//! rules:
//!
//! * cumulative mass: keep the shortest prefix whose normalized score mass
//!   reaches `cumulative_keep_mass`;
//! * score cliff: truncate where a score falls more than `cliff_drop` below
//!   the top score.
//!
//! Whichever rule yields the shorter prefix binds, and at least one chunk is
//! always kept so generation never sees an empty context by accident.
//! "Mass" is plain sum-normalization of the raw scores, not a softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::text::token_jaccard;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Cap on candidates handed to the scorer.
    pub max_candidates: usize,
    /// Keep the shortest prefix reaching this normalized mass, in (0, 1].
    pub cumulative_keep_mass: f64,
    /// Truncate below `top_score - cliff_drop`.
    pub cliff_drop: f64,
    /// Scorer model id forwarded to remote scorers.
    pub model: String,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            max_candidates: 30,
            // The remaining-mass form of this threshold is 0.45.
            cumulative_keep_mass: 0.55,
            cliff_drop: 0.15,
            model: "jina-reranker-v2-base-multilingual".into(),
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_candidates == 0 {
            return Err(Error::Config("rerank max_candidates must be >= 1".into()));
        }
        if !(self.cumulative_keep_mass > 0.0 && self.cumulative_keep_mass <= 1.0) {
            return Err(Error::Config(
                "cumulative_keep_mass must lie in (0, 1]".into(),
            ));
        }
        if !(self.cliff_drop > 0.0) {
            return Err(Error::Config("cliff_drop must be positive".into()));
        }
        Ok(())
    }
}

/// A scored candidate. `normalized_mass` is the raw score divided by the sum
/// of raw scores of its result list (uniform when the sum is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedHit {
    pub chunk_ref: String,
    pub raw_score: f64,
    pub normalized_mass: f64,
}

/// Relevance scoring for (query, candidate) pairs: one score per candidate,
/// each in [0, 1], in input order. Implementations must be shareable across
/// concurrently reranking queries.
pub trait RelevanceScorer: Send + Sync {
    fn score_batch(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>>;
}

/// Deterministic local scorer: Jaccard overlap of query and candidate token
/// sets. Exercises every cutoff path without a network.
#[derive(Debug, Clone, Default)]
pub struct TokenOverlapScorer;

impl RelevanceScorer for TokenOverlapScorer {
    fn score_batch(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        Ok(candidates
            .iter()
            .map(|c| token_jaccard(query, c))
            .collect())
    }
}

/// Score candidates and sort them by descending raw score (ties by ascending
/// chunk id). Candidates are `(chunk_ref, text)` pairs.
pub fn rerank_candidates(
    scorer: &dyn RelevanceScorer,
    query: &str,
    candidates: &[(String, String)],
    cfg: &RerankConfig,
) -> Result<Vec<RerankedHit>> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::Validation(
            "rerank_candidates requires at least one candidate".into(),
        ));
    }
    if candidates.len() > cfg.max_candidates {
        return Err(Error::Validation(format!(
            "{} candidates exceed max_candidates {}",
            candidates.len(),
            cfg.max_candidates
        )));
    }

    let texts: Vec<&str> = candidates.iter().map(|(_, t)| t.as_str()).collect();
    let scores = scorer.score_batch(query, &texts)?;
    if scores.len() != candidates.len() {
        return Err(Error::integrity(
            Stage::Rerank,
            format!(
                "scorer returned {} scores for {} candidates",
                scores.len(),
                candidates.len()
            ),
        ));
    }
    for &s in &scores {
        if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
            return Err(Error::integrity(
                Stage::Rerank,
                format!("relevance score {s} outside [0, 1]"),
            ));
        }
    }

    let mut hits: Vec<RerankedHit> = candidates
        .iter()
        .zip(&scores)
        .map(|((chunk_ref, _), &raw_score)| RerankedHit {
            chunk_ref: chunk_ref.clone(),
            raw_score,
            normalized_mass: 0.0,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.raw_score
            .partial_cmp(&a.raw_score)
            .expect("scores are finite")
            .then_with(|| a.chunk_ref.cmp(&b.chunk_ref))
    });

    let total: f64 = hits.iter().map(|h| h.raw_score).sum();
    let n = hits.len() as f64;
    for hit in &mut hits {
        hit.normalized_mass = if total > 0.0 {
            hit.raw_score / total
        } else {
            1.0 / n
        };
    }
    Ok(hits)
}

/// Which cutoff rule produced the selected prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindingRule {
    Mass,
    Cliff,
    Both,
}

/// Outcome of [`apply_cutoffs`]: the selected prefix length and the prefix
/// each rule would allow on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffSelection {
    pub keep: usize,
    pub mass_prefix: usize,
    pub cliff_prefix: usize,
}

impl CutoffSelection {
    pub fn binding_rule(&self) -> BindingRule {
        match self.mass_prefix.cmp(&self.cliff_prefix) {
            std::cmp::Ordering::Less => BindingRule::Mass,
            std::cmp::Ordering::Greater => BindingRule::Cliff,
            std::cmp::Ordering::Equal => BindingRule::Both,
        }
    }
}

/// Select a prefix of score-sorted hits by the shorter of the two cutoff
/// rules, but never an empty one. When every raw score is zero exactly the
/// first hit is kept.
pub fn apply_cutoffs(hits: &[RerankedHit], cfg: &RerankConfig) -> CutoffSelection {
    if hits.is_empty() {
        return CutoffSelection {
            keep: 0,
            mass_prefix: 0,
            cliff_prefix: 0,
        };
    }
    debug_assert!(hits.windows(2).all(|w| w[0].raw_score >= w[1].raw_score));

    let total: f64 = hits.iter().map(|h| h.raw_score).sum();
    if total <= 0.0 {
        return CutoffSelection {
            keep: 1,
            mass_prefix: 1,
            cliff_prefix: hits.len(),
        };
    }

    let mut mass_prefix = hits.len();
    let mut cumulative = 0.0;
    for (i, hit) in hits.iter().enumerate() {
        cumulative += hit.raw_score / total;
        if cumulative >= cfg.cumulative_keep_mass {
            mass_prefix = i + 1;
            break;
        }
    }

    let top = hits[0].raw_score;
    let cliff_prefix = hits
        .iter()
        .position(|h| h.raw_score < top - cfg.cliff_drop)
        .unwrap_or(hits.len());

    CutoffSelection {
        keep: mass_prefix.min(cliff_prefix).max(1),
        mass_prefix,
        cliff_prefix,
    }
}
