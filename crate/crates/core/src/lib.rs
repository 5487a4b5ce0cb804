//! Retrieval-augmented question answering over long financial documents.
//!
//! The crate implements the full query path — overlapping character
//! chunking, hybrid BM25 + dense retrieval, reciprocal rank fusion,
//! cross-encoder reranking with adaptive cutoffs, and gateway-based answer
//! generation — together with a grouped LLM-as-judge evaluation harness that
//! measures the effect of the reranking stage.
//!
//! Each LLM-facing role (rewriter, generator, judge, reranker, embedder) has
//! a remote HTTP client and a deterministic in-process stub, so the entire
//! pipeline runs and tests hermetically offline.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod fts;
pub mod fusion;
pub mod gateway;
pub mod pipeline;
pub mod rerank;
pub mod text;
pub mod types;
pub mod vector;

mod binio;

pub use config::AppConfig;
pub use corpus::{Chunk, ChunkingConfig, Corpus, Document};
pub use error::{Error, Result, Stage};
pub use eval::{
    aggregate_metrics, compute_group_metrics, run_ablation, sample_groups, AblationReport,
    ConfigLabel, DatasetRecord, GroupMetrics, QueryRecord, ScoreRecord,
};
pub use fts::{Bm25Params, FtsIndex};
pub use fusion::{rrf_fuse, FusedHit, FusionConfig};
pub use gateway::{AnswerGenerator, AnswerJudge, JudgeVerdict, QueryRewriter, RewriteResult};
pub use pipeline::{Engine, Gateways, PipelineConfig, QueryTrace};
pub use rerank::{apply_cutoffs, rerank_candidates, RelevanceScorer, RerankConfig, RerankedHit};
pub use types::ScoredHit;
pub use vector::{Embedder, EmbedderSpec, EmbeddingVector, VectorIndex};
