//! Application configuration: a TOML file mirroring [`PipelineConfig`] plus
//! per-role remote endpoints.
//!
//! Secrets never live in the file. API keys are read from the environment:
//! a role-specific variable (`FINRAG_<ROLE>_API_KEY`) when set, otherwise
//! `FINRAG_API_KEY`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::gateway::http::RemoteEndpoint;
use crate::gateway::remote::{
    RemoteEmbedder, RemoteGenerator, RemoteJudge, RemoteRewriter, RemoteScorer,
};
use crate::gateway::{AnswerJudge, StubJudge};
use crate::pipeline::{stub_gateways, Gateways, PipelineConfig};
use crate::vector::{Embedder, HashedStubEmbedder};

pub const API_KEY_ENV: &str = "FINRAG_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub rewriter: RemoteEndpoint,
    pub generator: RemoteEndpoint,
    pub judge: RemoteEndpoint,
    pub scorer: RemoteEndpoint,
    pub embedder: RemoteEndpoint,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        // Empty model names inherit the pipeline-level model ids on load.
        GatewaySettings {
            rewriter: RemoteEndpoint::new("https://api.openai.com/v1", ""),
            generator: RemoteEndpoint::new("https://api.openai.com/v1", ""),
            judge: RemoteEndpoint::new("https://api.openai.com/v1", ""),
            scorer: RemoteEndpoint::new("https://api.jina.ai/v1", ""),
            embedder: RemoteEndpoint::new("https://api.openai.com/v1", ""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub gateways: GatewaySettings,
}

impl AppConfig {
    /// Parse a TOML config file and fill endpoint model ids from the
    /// pipeline-level model fields where the file left them empty.
    pub fn load(path: &Path) -> Result<AppConfig> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: AppConfig = toml::from_str(&body)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.resolve_models();
        config.pipeline.validate()?;
        Ok(config)
    }

    pub fn resolved_default() -> AppConfig {
        let mut config = AppConfig::default();
        config.resolve_models();
        config
    }

    fn resolve_models(&mut self) {
        let fill = |slot: &mut String, from: &str| {
            if slot.is_empty() {
                *slot = from.to_string();
            }
        };
        fill(&mut self.gateways.rewriter.model, &self.pipeline.rewriter_model);
        fill(&mut self.gateways.generator.model, &self.pipeline.generator_model);
        fill(&mut self.gateways.judge.model, &self.pipeline.judge_model);
        fill(&mut self.gateways.scorer.model, &self.pipeline.rerank.model);
        fill(&mut self.gateways.embedder.model, &self.pipeline.embedder.model);
    }

    /// Fingerprint of the full configuration, for run manifests.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        fsutil::sha256_hex(canonical.as_bytes())
    }
}

fn api_key_for(role: &str) -> Option<String> {
    std::env::var(format!("FINRAG_{role}_API_KEY"))
        .ok()
        .or_else(|| std::env::var(API_KEY_ENV).ok())
}

/// Construct the LLM-role clients: deterministic stubs when `stub` is set,
/// remote HTTP clients otherwise.
pub fn build_gateways(
    config: &AppConfig,
    stub: bool,
) -> Result<(Gateways, Arc<dyn AnswerJudge>, Arc<dyn Embedder>)> {
    if stub {
        let embedder = Arc::new(HashedStubEmbedder::new(
            config.pipeline.embedder.dim,
            config.pipeline.embedder.batch_size,
        ));
        return Ok((stub_gateways(), Arc::new(StubJudge), embedder));
    }

    let g = &config.gateways;
    let gateways = Gateways {
        rewriter: Arc::new(RemoteRewriter::new(&g.rewriter, api_key_for("REWRITER"))?),
        generator: Arc::new(RemoteGenerator::new(&g.generator, api_key_for("GENERATOR"))?),
        scorer: Arc::new(RemoteScorer::new(&g.scorer, api_key_for("RERANKER"))?),
    };
    let judge: Arc<dyn AnswerJudge> = Arc::new(RemoteJudge::new(&g.judge, api_key_for("JUDGE"))?);
    let embedder: Arc<dyn Embedder> = Arc::new(RemoteEmbedder::new(
        &g.embedder,
        api_key_for("EMBEDDER"),
        config.pipeline.embedder.dim,
        config.pipeline.embedder.batch_size,
    )?);
    Ok((gateways, judge, embedder))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_fills_models_and_validates() {
        let config = AppConfig::resolved_default();
        config.pipeline.validate().unwrap();
        assert_eq!(config.gateways.generator.model, "gpt-4.1");
        assert_eq!(config.gateways.embedder.model, "text-embedding-3-small");
        assert_eq!(
            config.gateways.scorer.model,
            "jina-reranker-v2-base-multilingual"
        );
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("finrag.toml");
        std::fs::write(
            &path,
            "[pipeline]\nfts_top_k = 7\n\n[pipeline.chunking]\nchunk_size = 100\noverlap = 10\n",
        )
        .unwrap();
        let config = AppConfig::load(&path).unwrap();
        assert_eq!(config.pipeline.fts_top_k, 7);
        assert_eq!(config.pipeline.chunking.chunk_size, 100);
        // Untouched fields keep their defaults.
        assert_eq!(config.pipeline.semantic_top_k, 30);
        assert_eq!(config.pipeline.fusion.k, 60);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("finrag.toml");
        std::fs::write(
            &path,
            "[pipeline.chunking]\nchunk_size = 10\noverlap = 10\n",
        )
        .unwrap();
        assert!(matches!(AppConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = AppConfig::resolved_default();
        let b = AppConfig::resolved_default();
        assert_eq!(a.config_hash(), b.config_hash());
        let mut c = AppConfig::resolved_default();
        c.pipeline.fts_top_k = 21;
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn stub_gateway_bundle_is_offline() {
        let config = AppConfig::resolved_default();
        let (gateways, judge, embedder) = build_gateways(&config, true).unwrap();
        assert_eq!(embedder.spec().provider, "stub");
        let rewrite = gateways.rewriter.rewrite("what is margin").unwrap();
        assert_eq!(rewrite.keywords, vec!["margin"]);
        let verdict = judge.judge("q", "same words", "same words").unwrap();
        assert_eq!(verdict.score, 10);
    }
}
