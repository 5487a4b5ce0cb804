//! Prompt templates for the remote gateways and strict parsers for their
//! structured responses.
//!
//! The templates are plain format strings; nothing here talks to a network.
//! Parsers are strict on purpose: a remote model that does not produce the
//! required structure is retried by the caller and eventually surfaced as an
//! integrity error rather than silently coerced.

use crate::error::{Error, Result, Stage};
use crate::gateway::{GenerationRequest, JudgeVerdict, RewriteResult};

/// Default system prompt for answer generation: answer from the provided
/// context only, and say so when it is not enough.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a financial analysis assistant. Answer the \
question using only the information in the provided context. Quote figures exactly as they \
appear. If the context does not contain the information needed, say that it is insufficient \
instead of speculating.";

/// Grading rubric shared by the remote judge prompt and its documentation.
pub const JUDGE_RUBRIC: &str = "Score 1: Completely incorrect or unrelated answer\n\
Score 5: Partially correct with significant missing information\n\
Score 8: Basically correct with minor omissions\n\
Score 10: Fully correct and complete answer";

/// Assemble the user message for answer generation. Every context chunk
/// appears exactly once, in order, under a source header; the question is
/// included verbatim.
pub fn build_generation_prompt(req: &GenerationRequest) -> String {
    let mut prompt = String::new();
    if req.context_chunks.is_empty() {
        prompt.push_str("Context: (no passages retrieved)\n");
    } else {
        prompt.push_str("Context:\n");
        for chunk in &req.context_chunks {
            prompt.push_str(&format!(
                "--- [{} chunk {}] ---\n{}\n",
                chunk.doc_id, chunk.seq_index, chunk.text
            ));
        }
    }
    prompt.push_str("\nQuestion: ");
    prompt.push_str(&req.question);
    prompt
}

/// Instruction for the query rewriter: clarify the query and extract
/// keywords, in a two-line structured reply.
pub fn build_rewrite_prompt(raw_query: &str) -> String {
    format!(
        "Rewrite the following financial research query. Clarify vague terms, fix typos, and \
         extract the content-bearing keywords for a full-text search.\n\
         Reply with exactly two lines:\n\
         clarified: <the clarified query>\n\
         keywords: <comma-separated lowercase keywords>\n\n\
         Query: {raw_query}"
    )
}

/// Instruction for the judge: grade a candidate answer against the ground
/// truth on the 1-10 rubric and reply in a fixed structure.
pub fn build_judge_prompt(question: &str, candidate: &str, ground_truth: &str) -> String {
    format!(
        "Grade the candidate answer against the ground-truth answer for the question below, \
         on a 1-10 scale:\n{JUDGE_RUBRIC}\n\n\
         Question: {question}\n\
         Ground-truth answer: {ground_truth}\n\
         Candidate answer: {candidate}\n\n\
         Reply with exactly two lines:\n\
         score: <integer 1-10>\n\
         rationale: <one sentence>"
    )
}

fn line_value<'a>(body: &'a str, key: &str) -> Option<&'a str> {
    body.lines().find_map(|line| {
        let line = line.trim();
        line.strip_prefix(key).map(str::trim)
    })
}

/// Parse the rewriter's structured reply. Keywords are lowercased and
/// deduplicated preserving order; an empty or malformed reply is an error.
pub fn parse_rewrite_response(body: &str) -> Result<RewriteResult> {
    let clarified = line_value(body, "clarified:")
        .ok_or_else(|| Error::integrity(Stage::Rewrite, "missing 'clarified:' line"))?;
    let keywords_raw = line_value(body, "keywords:")
        .ok_or_else(|| Error::integrity(Stage::Rewrite, "missing 'keywords:' line"))?;

    let mut seen = std::collections::HashSet::new();
    let keywords: Vec<String> = keywords_raw
        .split(',')
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .filter(|k| seen.insert(k.clone()))
        .collect();

    let result = RewriteResult {
        clarified_query: clarified.to_string(),
        keywords,
    };
    result
        .validate()
        .map_err(|e| Error::integrity(Stage::Rewrite, e.to_string()))?;
    Ok(result)
}

/// Parse the judge's structured reply. The `score:` line must carry a bare
/// integer in [1, 10]; anything else is rejected.
pub fn parse_judge_response(body: &str) -> Result<JudgeVerdict> {
    let score_text = line_value(body, "score:")
        .ok_or_else(|| Error::integrity(Stage::Judge, "missing 'score:' line"))?;
    let score: u8 = score_text
        .parse()
        .map_err(|_| Error::integrity(Stage::Judge, format!("unparseable score {score_text:?}")))?;
    let verdict = JudgeVerdict {
        score,
        rationale: line_value(body, "rationale:").unwrap_or("").to_string(),
    };
    verdict
        .validate()
        .map_err(|e| Error::integrity(Stage::Judge, e.to_string()))?;
    Ok(verdict)
}
