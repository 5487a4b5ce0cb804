//! In-process inverted index with BM25 ranking over chunks.
//!
//! Fills the keyword-search role usually delegated to an embedded FTS engine,
//! but in-process and deterministic. Scoring is standard BM25 with
//! `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`, k1 = 1.2, b = 0.75.
//!
//! Query semantics deviate from FTS5's implicit AND: keywords are combined
//! with OR and their BM25 contributions summed, because the query rewriter
//! emits independent keywords and recall feeds rank fusion. Each keyword
//! string is itself run through the index tokenizer, so multi-word or
//! mixed-case keywords match what was indexed. Chunks matching no keyword are
//! never returned; rank positions feed RRF and padding would corrupt fusion.
//!
//! Build is single-writer; the built index is immutable and may be searched
//! concurrently.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{self, Cursor};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::text::tokenize;
use crate::types::{assign_ranks, ScoredHit};

const MAGIC: &[u8] = b"FRFT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Inverted index over a corpus' chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct FtsIndex {
    params: Bm25Params,
    /// Internal doc number -> chunk id, in corpus order.
    chunk_ids: Vec<String>,
    /// Internal doc number -> token count.
    doc_lengths: Vec<u32>,
    /// Term -> postings sorted by internal doc number.
    postings: BTreeMap<String, Vec<Posting>>,
    avg_doc_length: f64,
}

impl FtsIndex {
    /// Tokenize and index every chunk of the corpus.
    pub fn build(corpus: &Corpus, params: Bm25Params) -> FtsIndex {
        let mut chunk_ids = Vec::with_capacity(corpus.chunk_count());
        let mut doc_lengths = Vec::with_capacity(corpus.chunk_count());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();

        for (doc, chunk) in corpus.chunks().iter().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0u32;
            for tok in tokenize(&chunk.text) {
                *counts.entry(tok).or_insert(0) += 1;
                len += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: doc as u32,
                    tf,
                });
            }
            chunk_ids.push(chunk.chunk_id.clone());
            doc_lengths.push(len);
        }

        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if chunk_ids.is_empty() {
            0.0
        } else {
            total as f64 / chunk_ids.len() as f64
        };

        FtsIndex {
            params,
            chunk_ids,
            doc_lengths,
            postings,
            avg_doc_length,
        }
    }

    pub fn total_docs(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.total_docs() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, tf: u32, doc: u32, idf: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let dl = self.doc_lengths[doc as usize] as f64;
        let norm = 1.0 - b + b * dl / self.avg_doc_length;
        idf * (tf * (k1 + 1.0)) / (tf + k1 * norm)
    }

    /// Top `top_k` chunks by summed BM25 score across keywords (OR), ranked
    /// 1..n with ties broken by ascending chunk id. Keywords that tokenize to
    /// nothing, and terms absent from the index, contribute nothing; an empty
    /// keyword list yields an empty result.
    pub fn search(&self, keywords: &[String], top_k: usize) -> Result<Vec<ScoredHit>> {
        if top_k == 0 {
            return Err(Error::Validation("top_k must be at least 1".into()));
        }
        if self.chunk_ids.is_empty() || self.avg_doc_length == 0.0 {
            return Ok(Vec::new());
        }

        let mut scores: HashMap<u32, f64> = HashMap::new();
        for keyword in keywords {
            for term in tokenize(keyword) {
                let Some(plist) = self.postings.get(&term) else {
                    continue;
                };
                let idf = self.idf(plist.len());
                for p in plist {
                    *scores.entry(p.doc).or_insert(0.0) += self.term_score(p.tf, p.doc, idf);
                }
            }
        }

        let mut hits: Vec<(String, f64)> = scores
            .into_iter()
            .map(|(doc, score)| (self.chunk_ids[doc as usize].clone(), score))
            .collect();
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("BM25 scores are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        hits.truncate(top_k);
        Ok(assign_ranks(hits))
    }

    /// Serialize to the versioned on-disk layout. The byte image is a pure
    /// function of the index contents, so save/load/save round-trips
    /// bit-identically.
    ///
    /// Layout (all integers little-endian):
    /// `magic "FRFT" | version u32 | k1 f64 | b f64 | doc_count u64 |
    /// doc_count x (chunk_id str, doc_length u32) | term_count u64 |
    /// term_count x (term str, postings u32, postings x (doc u32, tf u32))`
    /// where `str` is a u32 byte length followed by UTF-8 bytes. Terms are
    /// written in sorted order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        binio::put_u32(&mut buf, VERSION);
        binio::put_f64(&mut buf, self.params.k1);
        binio::put_f64(&mut buf, self.params.b);
        binio::put_u64(&mut buf, self.chunk_ids.len() as u64);
        for (id, len) in self.chunk_ids.iter().zip(&self.doc_lengths) {
            binio::put_str(&mut buf, id);
            binio::put_u32(&mut buf, *len);
        }
        binio::put_u64(&mut buf, self.postings.len() as u64);
        for (term, plist) in &self.postings {
            binio::put_str(&mut buf, term);
            binio::put_u32(&mut buf, plist.len() as u32);
            for p in plist {
                binio::put_u32(&mut buf, p.doc);
                binio::put_u32(&mut buf, p.tf);
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<FtsIndex> {
        let mut cur = Cursor::new(bytes, path);
        cur.expect_magic(MAGIC)?;
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::CorruptIndex {
                path: path.to_string(),
                message: format!("unsupported version {version}"),
            });
        }
        let params = Bm25Params {
            k1: cur.f64()?,
            b: cur.f64()?,
        };
        let doc_count = cur.u64()? as usize;
        let mut chunk_ids = Vec::with_capacity(doc_count);
        let mut doc_lengths = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            chunk_ids.push(cur.str()?);
            doc_lengths.push(cur.u32()?);
        }
        let term_count = cur.u64()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..term_count {
            let term = cur.str()?;
            let n = cur.u32()? as usize;
            let mut plist = Vec::with_capacity(n);
            for _ in 0..n {
                plist.push(Posting {
                    doc: cur.u32()?,
                    tf: cur.u32()?,
                });
            }
            postings.insert(term, plist);
        }
        cur.finish()?;

        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if doc_count == 0 {
            0.0
        } else {
            total as f64 / doc_count as f64
        };
        Ok(FtsIndex {
            params,
            chunk_ids,
            doc_lengths,
            postings,
            avg_doc_length,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<FtsIndex> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        FtsIndex::from_bytes(&bytes, &path.display().to_string())
    }
}
