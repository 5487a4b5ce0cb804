//! Remote HTTP-JSON implementations of the gateway roles.
//!
//! All chat roles speak a chat-completions shaped exchange:
//! `POST {base}/chat/completions` with `model`, `temperature` and
//! `messages`, answered by `choices[0].message.content`. Embeddings use
//! `POST {base}/embeddings`; the relevance scorer uses `POST {base}/rerank`
//! with `(model, query, candidates)` answered by one score per candidate in
//! input order.

use serde_json::json;

use crate::error::{Error, Result, Stage};
use crate::gateway::http::{HttpJsonClient, RemoteEndpoint};
use crate::gateway::prompts::{
    build_generation_prompt, build_judge_prompt, build_rewrite_prompt, parse_judge_response,
    parse_rewrite_response,
};
use crate::gateway::{
    AnswerGenerator, AnswerJudge, GenerationRequest, JudgeVerdict, QueryRewriter, RewriteResult,
};
use crate::rerank::RelevanceScorer;
use crate::vector::{Embedder, EmbedderSpec, EmbeddingVector};

fn chat(
    http: &HttpJsonClient,
    model: &str,
    system: &str,
    user: &str,
    temperature: f64,
) -> Result<String> {
    let body = json!({
        "model": model,
        "temperature": temperature,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    });
    let response = http.post_json("/chat/completions", &body)?;
    let content = response["choices"][0]["message"]["content"]
        .as_str()
        .unwrap_or("")
        .to_string();
    if content.is_empty() {
        return Err(Error::integrity(http.stage(), "model returned empty output"));
    }
    Ok(content)
}

pub struct RemoteRewriter {
    http: HttpJsonClient,
    model: String,
}

impl RemoteRewriter {
    pub fn new(endpoint: &RemoteEndpoint, api_key: Option<String>) -> Result<Self> {
        Ok(RemoteRewriter {
            http: HttpJsonClient::new(endpoint, api_key, Stage::Rewrite)?,
            model: endpoint.model.clone(),
        })
    }
}

impl QueryRewriter for RemoteRewriter {
    fn rewrite(&self, raw_query: &str) -> Result<RewriteResult> {
        if raw_query.trim().is_empty() {
            return Err(Error::Validation("query is empty".into()));
        }
        let system = "You rewrite search queries for a financial document retrieval system.";
        let user = build_rewrite_prompt(raw_query);
        let content = chat(&self.http, &self.model, system, &user, 0.0)?;
        parse_rewrite_response(&content)
    }
}

pub struct RemoteGenerator {
    http: HttpJsonClient,
    model: String,
}

impl RemoteGenerator {
    pub fn new(endpoint: &RemoteEndpoint, api_key: Option<String>) -> Result<Self> {
        Ok(RemoteGenerator {
            http: HttpJsonClient::new(endpoint, api_key, Stage::Generate)?,
            model: endpoint.model.clone(),
        })
    }
}

impl AnswerGenerator for RemoteGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        let user = build_generation_prompt(req);
        chat(
            &self.http,
            &self.model,
            &req.system_prompt,
            &user,
            req.temperature,
        )
    }
}

pub struct RemoteJudge {
    http: HttpJsonClient,
    model: String,
    /// Re-asks allowed when the reply parses badly or scores out of range.
    reask_budget: u32,
}

impl RemoteJudge {
    pub fn new(endpoint: &RemoteEndpoint, api_key: Option<String>) -> Result<Self> {
        Ok(RemoteJudge {
            http: HttpJsonClient::new(endpoint, api_key, Stage::Judge)?,
            model: endpoint.model.clone(),
            reask_budget: endpoint.max_retries,
        })
    }
}

impl AnswerJudge for RemoteJudge {
    fn judge(&self, question: &str, candidate: &str, ground_truth: &str) -> Result<JudgeVerdict> {
        for (name, value) in [
            ("question", question),
            ("candidate", candidate),
            ("ground_truth", ground_truth),
        ] {
            if value.trim().is_empty() {
                return Err(Error::Validation(format!("judge {name} is empty")));
            }
        }
        let system = "You are a strict grader of question-answering systems.";
        let user = build_judge_prompt(question, candidate, ground_truth);

        let mut last_err = None;
        for _ in 0..=self.reask_budget {
            let content = chat(&self.http, &self.model, system, &user, 0.0)?;
            match parse_judge_response(&content) {
                Ok(verdict) => return Ok(verdict),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::integrity(Stage::Judge, "no verdict")))
    }
}

/// Remote cross-encoder client. The response must carry one score per
/// candidate in input order; range validation happens in the rerank stage.
pub struct RemoteScorer {
    http: HttpJsonClient,
    model: String,
}

impl RemoteScorer {
    pub fn new(endpoint: &RemoteEndpoint, api_key: Option<String>) -> Result<Self> {
        Ok(RemoteScorer {
            http: HttpJsonClient::new(endpoint, api_key, Stage::Rerank)?,
            model: endpoint.model.clone(),
        })
    }
}

impl RelevanceScorer for RemoteScorer {
    fn score_batch(&self, query: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        let body = json!({
            "model": self.model,
            "query": query,
            "candidates": candidates,
        });
        let response = self.http.post_json("/rerank", &body)?;
        let scores = response["scores"]
            .as_array()
            .ok_or_else(|| Error::integrity(Stage::Rerank, "response missing 'scores' array"))?;
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
        scores
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::integrity(Stage::Rerank, format!("non-numeric score {v}")))
            })
            .collect()
    }
}

pub struct RemoteEmbedder {
    http: HttpJsonClient,
    spec: EmbedderSpec,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &RemoteEndpoint, api_key: Option<String>, dim: usize, batch_size: usize) -> Result<Self> {
        let spec = EmbedderSpec {
            provider: "remote".into(),
            model: endpoint.model.clone(),
            dim,
            batch_size,
        };
        spec.validate()?;
        Ok(RemoteEmbedder {
            http: HttpJsonClient::new(endpoint, api_key, Stage::Embed)?,
            spec,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Validation("embed_batch requires >= 1 text".into()));
        }
        let body = json!({
            "model": self.spec.model,
            "input": texts,
        });
        let response = self.http.post_json("/embeddings", &body)?;
        let data = response["data"]
            .as_array()
            .ok_or_else(|| Error::integrity(Stage::Embed, "response missing 'data' array"))?;

        // Providers usually echo inputs in order but also tag an index.
        let mut rows: Vec<(usize, EmbeddingVector)> = Vec::with_capacity(data.len());
        for (pos, row) in data.iter().enumerate() {
            let idx = row["index"].as_u64().map(|v| v as usize).unwrap_or(pos);
            let values = row["embedding"]
                .as_array()
                .ok_or_else(|| Error::integrity(Stage::Embed, "row missing 'embedding'"))?
                .iter()
                .map(|v| {
                    v.as_f64().map(|f| f as f32).ok_or_else(|| {
                        Error::integrity(Stage::Embed, format!("non-numeric embedding entry {v}"))
                    })
                })
                .collect::<Result<Vec<f32>>>()?;
            rows.push((idx, EmbeddingVector(values)));
        }
        rows.sort_by_key(|(idx, _)| *idx);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serve canned HTTP/1.1 responses on a loopback socket, one connection
    /// per response, then stop.
    fn serve(responses: Vec<String>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for response in responses {
                let (mut sock, _) = match listener.accept() {
                    Ok(pair) => pair,
                    Err(_) => break,
                };
                // Read the request: headers, then a content-length body.
                let mut buf = Vec::new();
                let mut tmp = [0u8; 1024];
                let body_start;
                loop {
                    let n = sock.read(&mut tmp).unwrap();
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&tmp[..n]);
                    if let Some(pos) = find_header_end(&buf) {
                        body_start = pos;
                        let headers = String::from_utf8_lossy(&buf[..pos]).to_lowercase();
                        let content_length = headers
                            .lines()
                            .find_map(|l| l.strip_prefix("content-length:"))
                            .and_then(|v| v.trim().parse::<usize>().ok())
                            .unwrap_or(0);
                        while buf.len() < body_start + content_length {
                            let n = sock.read(&mut tmp).unwrap();
                            if n == 0 {
                                break;
                            }
                            buf.extend_from_slice(&tmp[..n]);
                        }
                        break;
                    }
                }
                sock.write_all(response.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}"), handle)
    }

    fn find_header_end(buf: &[u8]) -> Option<usize> {
        buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
    }

    fn http_response(status: u16, reason: &str, body: &str) -> String {
        format!(
            "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
             Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    fn fast_endpoint(base_url: &str, model: &str) -> RemoteEndpoint {
        RemoteEndpoint {
            base_url: base_url.to_string(),
            model: model.to_string(),
            timeout_ms: 5_000,
            max_retries: 3,
            backoff_ms: 1,
        }
    }

    fn chat_body(content: &str) -> String {
        serde_json::to_string(&serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        }))
        .unwrap()
    }

    #[test]
    fn retries_transient_failures_then_succeeds() {
        let (base, handle) = serve(vec![
            http_response(503, "Service Unavailable", "{}"),
            http_response(429, "Too Many Requests", "{}"),
            http_response(200, "OK", &chat_body("score: 7\nrationale: close enough")),
        ]);
        let judge = RemoteJudge::new(&fast_endpoint(&base, "judge-model"), None).unwrap();
        let verdict = judge.judge("q", "candidate", "truth").unwrap();
        assert_eq!(verdict.score, 7);
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn exhausted_retries_surface_a_transport_error() {
        let responses: Vec<String> = (0..4)
            .map(|_| http_response(500, "Internal Server Error", "{}"))
            .collect();
        let (base, handle) = serve(responses);
        let generator = RemoteGenerator::new(&fast_endpoint(&base, "gen-model"), None).unwrap();
        let req = GenerationRequest {
            system_prompt: "sys".into(),
            context_chunks: vec![],
            question: "q".into(),
            temperature: 0.0,
        };
        let err = generator.generate(&req).unwrap_err();
        assert!(matches!(err, Error::Transport { stage: Stage::Generate, .. }));
        assert_eq!(handle.join().unwrap(), 4);
    }

    #[test]
    fn empty_model_output_is_an_integrity_error() {
        let (base, _handle) = serve(vec![http_response(200, "OK", &chat_body(""))]);
        let generator = RemoteGenerator::new(&fast_endpoint(&base, "gen-model"), None).unwrap();
        let req = GenerationRequest {
            system_prompt: "sys".into(),
            context_chunks: vec![],
            question: "q".into(),
            temperature: 0.0,
        };
        assert!(matches!(
            generator.generate(&req).unwrap_err(),
            Error::Integrity { stage: Stage::Generate, .. }
        ));
    }

    #[test]
    fn judge_reasks_on_malformed_verdicts_then_gives_up() {
        // Budget of 3 re-asks after the first attempt: four bad replies.
        let responses: Vec<String> = (0..4)
            .map(|_| http_response(200, "OK", &chat_body("I'd give this a 12")))
            .collect();
        let (base, handle) = serve(responses);
        let judge = RemoteJudge::new(&fast_endpoint(&base, "judge-model"), None).unwrap();
        let err = judge.judge("q", "candidate", "truth").unwrap_err();
        assert!(matches!(err, Error::Integrity { stage: Stage::Judge, .. }));
        assert_eq!(handle.join().unwrap(), 4);
    }

    #[test]
    fn scorer_parses_scores_in_order_and_checks_count() {
        let (base, _handle) = serve(vec![http_response(
            200,
            "OK",
            "{\"scores\": [0.9, 0.1]}",
        )]);
        let scorer = RemoteScorer::new(&fast_endpoint(&base, "rerank-model"), None).unwrap();
        let scores = scorer.score_batch("q", &["a", "b"]).unwrap();
        assert_eq!(scores, vec![0.9, 0.1]);

        let (base, _handle) = serve(vec![http_response(200, "OK", "{\"scores\": [0.9]}")]);
        let scorer = RemoteScorer::new(&fast_endpoint(&base, "rerank-model"), None).unwrap();
        assert!(matches!(
            scorer.score_batch("q", &["a", "b"]).unwrap_err(),
            Error::Integrity { stage: Stage::Rerank, .. }
        ));
    }

    #[test]
    fn embedder_orders_rows_by_index() {
        let body = serde_json::to_string(&serde_json::json!({
            "data": [
                {"index": 1, "embedding": [0.0, 1.0]},
                {"index": 0, "embedding": [1.0, 0.0]},
            ]
        }))
        .unwrap();
        let (base, _handle) = serve(vec![http_response(200, "OK", &body)]);
        let embedder =
            RemoteEmbedder::new(&fast_endpoint(&base, "embed-model"), None, 2, 32).unwrap();
        let out = embedder.embed_batch(&["first".into(), "second".into()]).unwrap();
        assert_eq!(out[0].0, vec![1.0, 0.0]);
        assert_eq!(out[1].0, vec![0.0, 1.0]);
    }
}
