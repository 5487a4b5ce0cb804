//! End-to-end query orchestration in both ablation configurations.
//!
//! Stage order: rewrite -> keyword search -> semantic search -> rank fusion
//! -> either (cap, rerank, cutoffs) or a fixed top-10 of the fused list ->
//! answer generation. The two configurations share every stage up to and
//! including fusion, so observed differences are attributable to reranking
//! alone. Every stage's output is captured in a [`QueryTrace`] exactly as the
//! next stage consumed it.
//!
//! An engine is immutable after construction and safe to query from many
//! threads; with stub gateways and a fixed corpus its outputs are
//! byte-identical across runs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{ChunkingConfig, Corpus};
use crate::error::{Error, Result, Stage};
use crate::fts::{Bm25Params, FtsIndex};
use crate::fusion::{rrf_fuse, FusedHit, FusionConfig};
use crate::gateway::prompts::DEFAULT_SYSTEM_PROMPT;
use crate::gateway::{
    AnswerGenerator, ContextChunk, GenerationRequest, QueryRewriter, RewriteResult,
};
use crate::rerank::{
    apply_cutoffs, rerank_candidates, CutoffSelection, RelevanceScorer, RerankConfig, RerankedHit,
};
use crate::types::ScoredHit;
use crate::vector::{embed_all, Embedder, EmbedderSpec, VectorIndex};

/// Every pipeline hyperparameter in one validated structure. The defaults are
/// the shipped system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub chunking: ChunkingConfig,
    pub bm25: Bm25Params,
    /// Keyword-search candidates fed into fusion.
    pub fts_top_k: usize,
    /// Semantic-search candidates fed into fusion.
    pub semantic_top_k: usize,
    /// Inclusive squared-L2 cutoff for semantic hits.
    pub distance_threshold: f64,
    pub fusion: FusionConfig,
    pub rerank: RerankConfig,
    /// Context size when reranking is disabled.
    pub no_rerank_context_limit: usize,
    pub embedder: EmbedderSpec,
    pub rewriter_model: String,
    pub generator_model: String,
    pub judge_model: String,
    /// Sampling temperature requested from the generator.
    pub temperature: f64,
    pub system_prompt: String,
    /// Upper bound on concurrent gateway calls during evaluation.
    pub gateway_parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chunking: ChunkingConfig::default(),
            bm25: Bm25Params::default(),
            fts_top_k: 20,
            semantic_top_k: 30,
            distance_threshold: 2.0,
            fusion: FusionConfig::default(),
            rerank: RerankConfig::default(),
            no_rerank_context_limit: 10,
            embedder: EmbedderSpec::default(),
            rewriter_model: "gpt-4.1".into(),
            generator_model: "gpt-4.1".into(),
            judge_model: "gpt-4.1".into(),
            temperature: 0.0,
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            gateway_parallelism: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        self.fusion.validate()?;
        self.rerank.validate()?;
        self.embedder.validate()?;
        for (name, value) in [
            ("fts_top_k", self.fts_top_k),
            ("semantic_top_k", self.semantic_top_k),
            ("no_rerank_context_limit", self.no_rerank_context_limit),
            ("gateway_parallelism", self.gateway_parallelism),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.distance_threshold >= 0.0) {
            return Err(Error::Config("distance_threshold must be >= 0".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

/// The reranking stage of a trace: all scored candidates plus the cutoff
/// outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankTrace {
    pub scored: Vec<RerankedHit>,
    pub selection: CutoffSelection,
}

/// Everything each stage produced for one query, in consumption order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub raw_query: String,
    pub rerank_enabled: bool,
    pub rewrite: RewriteResult,
    pub fts_hits: Vec<ScoredHit>,
    pub semantic_hits: Vec<ScoredHit>,
    pub fused: Vec<FusedHit>,
    /// Present when reranking was enabled and fusion produced candidates.
    pub rerank: Option<RerankTrace>,
    pub context_refs: Vec<String>,
    pub answer: String,
}

/// The LLM-role clients an engine calls out to.
pub struct Gateways {
    pub rewriter: Arc<dyn QueryRewriter>,
    pub generator: Arc<dyn AnswerGenerator>,
    pub scorer: Arc<dyn RelevanceScorer>,
}

pub struct Engine {
    config: PipelineConfig,
    corpus: Corpus,
    fts: FtsIndex,
    vectors: VectorIndex,
    embedder: Arc<dyn Embedder>,
    gateways: Gateways,
}

impl Engine {
    /// Assemble an engine from prebuilt indexes.
    pub fn new(
        config: PipelineConfig,
        corpus: Corpus,
        fts: FtsIndex,
        vectors: VectorIndex,
        embedder: Arc<dyn Embedder>,
        gateways: Gateways,
    ) -> Result<Engine> {
        config.validate()?;
        if vectors.dim() != embedder.spec().dim {
            return Err(Error::Config(format!(
                "vector index dim {} does not match embedder dim {}",
                vectors.dim(),
                embedder.spec().dim
            )));
        }
        Ok(Engine {
            config,
            corpus,
            fts,
            vectors,
            embedder,
            gateways,
        })
    }

    /// Build both indexes from a corpus and assemble an engine.
    pub fn build(
        config: PipelineConfig,
        corpus: Corpus,
        embedder: Arc<dyn Embedder>,
        gateways: Gateways,
    ) -> Result<Engine> {
        config.validate()?;
        let fts = FtsIndex::build(&corpus, config.bm25);
        let texts: Vec<String> = corpus.chunks().iter().map(|c| c.text.clone()).collect();
        let vectors_data = embed_all(embedder.as_ref(), &texts)?;
        let mut vectors = VectorIndex::new(embedder.spec().dim)?;
        vectors.add(
            corpus
                .chunks()
                .iter()
                .map(|c| c.chunk_id.clone())
                .zip(vectors_data),
        )?;
        Engine::new(config, corpus, fts, vectors, embedder, gateways)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn context_chunk(&self, chunk_ref: &str) -> Result<ContextChunk> {
        let chunk = self.corpus.chunk(chunk_ref).ok_or_else(|| {
            Error::integrity(
                Stage::Generate,
                format!("context ref {chunk_ref} not in corpus"),
            )
        })?;
        Ok(ContextChunk {
            doc_id: chunk.doc_id.clone(),
            seq_index: chunk.seq_index,
            text: chunk.text.clone(),
        })
    }

    /// Answer one query, tracing every stage.
    ///
    /// With `enable_rerank` the fused list is capped at
    /// `rerank.max_candidates`, scored, and cut off adaptively; without it
    /// the top `no_rerank_context_limit` fused chunks become the context.
    /// Zero retrieval results are not an error: generation proceeds with an
    /// empty context.
    pub fn answer_query(&self, query: &str, enable_rerank: bool) -> Result<(String, QueryTrace)> {
        let cfg = &self.config;
        let rewrite = self.gateways.rewriter.rewrite(query)?;

        let fts_hits = self.fts.search(&rewrite.keywords, cfg.fts_top_k)?;

        let query_vector = embed_all(
            self.embedder.as_ref(),
            std::slice::from_ref(&rewrite.clarified_query),
        )?
        .pop()
        .expect("one vector for one text");
        let semantic_hits =
            self.vectors
                .search(&query_vector, cfg.semantic_top_k, cfg.distance_threshold)?;

        let fused = rrf_fuse(&[&fts_hits, &semantic_hits], &cfg.fusion)?;

        let (context_refs, rerank_trace) = if enable_rerank {
            if fused.is_empty() {
                (Vec::new(), None)
            } else {
                let cap = fused.len().min(cfg.rerank.max_candidates);
                let candidates: Vec<(String, String)> = fused[..cap]
                    .iter()
                    .map(|h| {
                        let chunk = self.context_chunk(&h.chunk_ref)?;
                        Ok((h.chunk_ref.clone(), chunk.text))
                    })
                    .collect::<Result<_>>()?;
                let scored = rerank_candidates(
                    self.gateways.scorer.as_ref(),
                    &rewrite.clarified_query,
                    &candidates,
                    &cfg.rerank,
                )?;
                let selection = apply_cutoffs(&scored, &cfg.rerank);
                let refs = scored[..selection.keep]
                    .iter()
                    .map(|h| h.chunk_ref.clone())
                    .collect();
                (refs, Some(RerankTrace { scored, selection }))
            }
        } else {
            let keep = fused.len().min(cfg.no_rerank_context_limit);
            let refs = fused[..keep].iter().map(|h| h.chunk_ref.clone()).collect();
            (refs, None)
        };

        let context_chunks = context_refs
            .iter()
            .map(|r| self.context_chunk(r))
            .collect::<Result<Vec<_>>>()?;

        let request = GenerationRequest {
            system_prompt: cfg.system_prompt.clone(),
            context_chunks,
            // The generator sees the original query; the clarified form only
            // drives retrieval.
            question: query.to_string(),
            temperature: cfg.temperature,
        };
        let answer = self.gateways.generator.generate(&request)?;

        let trace = QueryTrace {
            raw_query: query.to_string(),
            rerank_enabled: enable_rerank,
            rewrite,
            fts_hits,
            semantic_hits,
            fused,
            rerank: rerank_trace,
            context_refs,
            answer: answer.clone(),
        };
        Ok((answer, trace))
    }
}

/// Stub-gateway bundle for offline runs: deterministic rewriter, extractive
/// generator and token-overlap scorer.
pub fn stub_gateways() -> Gateways {
    Gateways {
        rewriter: Arc::new(crate::gateway::StubRewriter),
        generator: Arc::new(crate::gateway::StubGenerator),
        scorer: Arc::new(crate::rerank::TokenOverlapScorer),
    }
}
