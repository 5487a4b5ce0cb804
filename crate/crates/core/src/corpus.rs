//! Document ingestion and fixed-size overlapping chunking.
//!
//! Documents arrive as line-delimited JSON records and are split into
//! character windows of `chunk_size` code points advancing by
//! `chunk_size - overlap`. Chunks are the retrieval unit everywhere
//! downstream; their ids are deterministic functions of `(doc_id, seq_index)`
//! so that rebuilding a corpus from the same input reproduces the same ids.
//!
//! "Characters" here means Unicode scalar values. Slicing never splits a code
//! point, and all offsets stored on a [`Chunk`] are code-point offsets into
//! the (possibly HTML-stripped) document text.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::text::strip_html;

/// A source document. `text` is the exact string that was chunked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub ticker: String,
    #[serde(default)]
    pub source_name: String,
    pub text: String,
}

/// Wire form of a document in corpus input files. `html: true` routes the
/// text through the naive tag stripper before chunking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    #[serde(default)]
    pub ticker: String,
    #[serde(default)]
    pub source_name: String,
    pub text: String,
    #[serde(default)]
    pub html: bool,
}

/// One overlapping window of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub seq_index: usize,
    /// Code-point offset of the first character, inclusive.
    pub char_start: usize,
    /// Code-point offset one past the last character.
    pub char_end: usize,
    pub text: String,
}

/// A window produced by [`chunk_text`], before document ids are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkWindow {
    pub seq_index: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    /// Window width in code points.
    pub chunk_size: usize,
    /// Code points shared between consecutive windows.
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            chunk_size: 2500,
            overlap: 1250,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be positive".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(Error::Config(format!(
                "overlap ({}) must be smaller than chunk_size ({})",
                self.overlap, self.chunk_size
            )));
        }
        Ok(())
    }

    /// Distance between consecutive window starts.
    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Split `text` into overlapping windows.
///
/// Windows start at multiples of the stride and span
/// `min(chunk_size, remaining)` code points; emission stops with the first
/// window whose end reaches the end of the text, so full coverage is achieved
/// without a redundant tail window. Empty text yields no windows.
pub fn chunk_text(text: &str, cfg: &ChunkingConfig) -> Result<Vec<ChunkWindow>> {
    cfg.validate()?;

    // Byte offset of every code point, so [char_start, char_end) windows can
    // be sliced without re-scanning the string per window.
    let byte_offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    let total = byte_offsets.len();
    if total == 0 {
        return Ok(Vec::new());
    }

    let stride = cfg.stride();
    let mut windows = Vec::with_capacity(total / stride + 1);
    let mut start = 0usize;
    loop {
        let end = (start + cfg.chunk_size).min(total);
        let byte_start = byte_offsets[start];
        let byte_end = if end == total {
            text.len()
        } else {
            byte_offsets[end]
        };
        windows.push(ChunkWindow {
            seq_index: windows.len(),
            char_start: start,
            char_end: end,
            text: text[byte_start..byte_end].to_string(),
        });
        if end == total {
            break;
        }
        start += stride;
    }
    Ok(windows)
}

fn chunk_ref(doc_id: &str, seq_index: usize) -> String {
    format!("{doc_id}#{seq_index:06}")
}

/// Chunk a document and attach deterministic chunk ids.
pub fn chunk_document(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    let windows = chunk_text(&doc.text, cfg)?;
    Ok(windows
        .into_iter()
        .map(|w| Chunk {
            chunk_id: chunk_ref(&doc.doc_id, w.seq_index),
            doc_id: doc.doc_id.clone(),
            seq_index: w.seq_index,
            char_start: w.char_start,
            char_end: w.char_end,
            text: w.text,
        })
        .collect())
}

/// An ingested corpus: documents plus their chunks.
///
/// Built once by a single writer; immutable afterwards, so shared references
/// may be used freely across threads.
#[derive(Debug, Clone)]
pub struct Corpus {
    config: ChunkingConfig,
    documents: Vec<Document>,
    chunks: Vec<Chunk>,
    by_chunk_id: HashMap<String, usize>,
}

impl Corpus {
    /// Ingest a stream of document records, chunking each one.
    ///
    /// Rejects duplicate `doc_id`s by name. Record-level errors from the
    /// stream (e.g. parse failures with line numbers) are passed through.
    pub fn ingest<I>(records: I, cfg: ChunkingConfig) -> Result<Corpus>
    where
        I: IntoIterator<Item = Result<DocumentRecord>>,
    {
        cfg.validate()?;
        let mut documents = Vec::new();
        let mut chunks = Vec::new();
        let mut seen = HashMap::new();

        for record in records {
            let record = record?;
            if seen.insert(record.doc_id.clone(), true).is_some() {
                return Err(Error::DuplicateDocId(record.doc_id));
            }
            let text = if record.html {
                strip_html(&record.text)
            } else {
                record.text
            };
            let doc = Document {
                doc_id: record.doc_id,
                ticker: record.ticker,
                source_name: record.source_name,
                text,
            };
            chunks.extend(chunk_document(&doc, &cfg)?);
            documents.push(doc);
        }

        Ok(Corpus::from_parts(cfg, documents, chunks))
    }

    /// Parse line-delimited JSON document records and ingest them.
    pub fn ingest_jsonl<R: BufRead>(reader: R, cfg: ChunkingConfig) -> Result<Corpus> {
        Corpus::ingest(parse_document_records(reader), cfg)
    }

    fn from_parts(config: ChunkingConfig, documents: Vec<Document>, chunks: Vec<Chunk>) -> Corpus {
        let by_chunk_id = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chunk_id.clone(), i))
            .collect();
        Corpus {
            config,
            documents,
            chunks,
            by_chunk_id,
        }
    }

    pub fn config(&self) -> &ChunkingConfig {
        &self.config
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_chunk_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Persist the chunk store: `chunks.jsonl` with one chunk per line plus
    /// `store_manifest.json` recording the chunking configuration.
    pub fn write_store(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

        let mut lines = String::new();
        for chunk in &self.chunks {
            lines.push_str(&serde_json::to_string(chunk).expect("chunk serializes"));
            lines.push('\n');
        }
        fsutil::write_atomic(&dir.join("chunks.jsonl"), lines.as_bytes())?;

        let manifest = StoreManifest {
            chunking: self.config,
            document_count: self.documents.len(),
            chunk_count: self.chunks.len(),
        };
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fsutil::write_atomic(&dir.join("store_manifest.json"), body.as_bytes())?;
        Ok(())
    }

    /// Load a chunk store written by [`Corpus::write_store`]. Document texts
    /// are not persisted; the loaded corpus carries chunks only.
    pub fn load_store(dir: &Path) -> Result<Corpus> {
        let manifest_path = dir.join("store_manifest.json");
        let manifest_body = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        let manifest: StoreManifest = serde_json::from_str(&manifest_body).map_err(|e| {
            Error::CorruptIndex {
                path: manifest_path.display().to_string(),
                message: e.to_string(),
            }
        })?;

        let chunks_path = dir.join("chunks.jsonl");
        let body = std::fs::read_to_string(&chunks_path)
            .map_err(|e| Error::io(chunks_path.display().to_string(), e))?;
        let mut chunks = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
            chunks.push(chunk);
        }
        if chunks.len() != manifest.chunk_count {
            return Err(Error::CorruptIndex {
                path: chunks_path.display().to_string(),
                message: format!(
                    "manifest says {} chunks, file has {}",
                    manifest.chunk_count,
                    chunks.len()
                ),
            });
        }
        Ok(Corpus::from_parts(manifest.chunking, Vec::new(), chunks))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    chunking: ChunkingConfig,
    document_count: usize,
    chunk_count: usize,
}

/// Iterate document records out of a line-delimited JSON reader, reporting
/// parse failures with their 1-based line number. Blank lines are skipped.
pub fn parse_document_records<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<DocumentRecord>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::io(format!("line {}", i + 1), e))),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<DocumentRecord>(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            }),
        )
    })
}
