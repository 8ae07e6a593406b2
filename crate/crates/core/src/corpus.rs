//! Knowledge-base ingestion, chunking, and the single-file passage store.
//!
//! Store layout (all integers little-endian `u64`, strings length-prefixed UTF-8):
//!
//! ```text
//! "FEKB1\n"
//! doc_count
//! doc_count x { title, passage_count, blob_offset }   // sorted by title
//! blob_len
//! blob: passage records { word_count, oversized: u8, text }
//! ```
//!
//! `blob_offset` is relative to the start of the blob section and points at
//! the first of the document's `passage_count` consecutive passage records.

use crate::text::{normalize_whitespace, split_sentences, word_count};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const STORE_MAGIC: &[u8; 6] = b"FEKB1\n";
pub const DEFAULT_CHUNK_SIZE: usize = 256;
pub const MIN_CHUNK_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("store integrity error: {0}")]
    Integrity(String),
    #[error("chunk size {0} is below the minimum of {MIN_CHUNK_SIZE} words")]
    ChunkSize(usize),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub text: String,
}

/// A retrievable chunk of one knowledge-base article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_title: String,
    pub index: usize,
    pub text: String,
    pub word_count: usize,
    /// Set when a single sentence exceeded the chunk size on its own.
    #[serde(default)]
    pub oversized: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub documents: usize,
    pub passages: usize,
    pub skipped: usize,
    /// Records whose title repeated an earlier one; the last record wins.
    pub duplicates: usize,
}

/// Greedy sentence-aligned packing of a document into passages.
///
/// Sentences are appended to the current chunk until the next one would push
/// it past `chunk_size` words. A sentence longer than `chunk_size` becomes its
/// own passage with `oversized` set.
pub fn chunk_document(doc: &Document, chunk_size: usize) -> Result<Vec<Passage>> {
    if chunk_size < MIN_CHUNK_SIZE {
        return Err(CorpusError::ChunkSize(chunk_size));
    }
    let normalized = normalize_whitespace(&doc.text);
    let mut chunks: Vec<(Vec<String>, usize)> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_words = 0usize;
    for sentence in split_sentences(&normalized) {
        let n = word_count(&sentence);
        if !current.is_empty() && current_words + n > chunk_size {
            chunks.push((std::mem::take(&mut current), current_words));
            current_words = 0;
        }
        current.push(sentence);
        current_words += n;
    }
    if !current.is_empty() {
        chunks.push((current, current_words));
    }
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(index, (sentences, words))| Passage {
            doc_title: doc.title.clone(),
            index,
            text: sentences.join(" "),
            word_count: words,
            oversized: words > chunk_size,
        })
        .collect())
}

#[derive(Deserialize)]
struct DumpRecord {
    title: String,
    text: String,
}

/// Reads a line-delimited `{title, text}` dump, chunks every article, and
/// writes a fresh store to `store_path`, replacing any existing file.
pub fn ingest_dump(path: &Path, store_path: &Path, chunk_size: usize) -> Result<IngestStats> {
    if chunk_size < MIN_CHUNK_SIZE {
        return Err(CorpusError::ChunkSize(chunk_size));
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut docs: BTreeMap<String, String> = BTreeMap::new();
    let mut stats = IngestStats::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DumpRecord>(&line) {
            Ok(rec) if !rec.title.is_empty() => {
                if docs.insert(rec.title, rec.text).is_some() {
                    stats.duplicates += 1;
                }
            }
            _ => stats.skipped += 1,
        }
    }
    let mut chunked = Vec::with_capacity(docs.len());
    for (title, text) in docs {
        let doc = Document { title, text };
        let passages = chunk_document(&doc, chunk_size)?;
        stats.passages += passages.len();
        chunked.push((doc.title, passages));
    }
    stats.documents = chunked.len();
    crate::jsonl::write_atomic(store_path, &encode_store(&chunked))?;
    log::info!(
        "ingested {} documents ({} passages, {} skipped) into {}",
        stats.documents,
        stats.passages,
        stats.skipped,
        store_path.display()
    );
    Ok(stats)
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u64(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

/// Serializes documents (already in title order) into the store format.
pub fn encode_store(docs: &[(String, Vec<Passage>)]) -> Vec<u8> {
    let mut blob = Vec::new();
    let mut table = Vec::new();
    put_u64(&mut table, docs.len() as u64);
    for (title, passages) in docs {
        put_str(&mut table, title);
        put_u64(&mut table, passages.len() as u64);
        put_u64(&mut table, blob.len() as u64);
        for p in passages {
            put_u64(&mut blob, p.word_count as u64);
            blob.push(u8::from(p.oversized));
            put_str(&mut blob, &p.text);
        }
    }
    let mut out = Vec::with_capacity(STORE_MAGIC.len() + table.len() + 8 + blob.len());
    out.extend_from_slice(STORE_MAGIC);
    out.extend_from_slice(&table);
    put_u64(&mut out, blob.len() as u64);
    out.extend_from_slice(&blob);
    out
}

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8], pos: usize) -> Self {
        Self { buf, pos }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn bytes(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, String> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.bytes(1)?[0])
    }

    pub(crate) fn string(&mut self) -> std::result::Result<String, String> {
        let len = usize::try_from(self.u64()?).map_err(|e| e.to_string())?;
        let b = self.bytes(len)?;
        String::from_utf8(b.to_vec()).map_err(|e| format!("invalid utf-8: {e}"))
    }
}

#[derive(Debug, Clone, Copy)]
struct DocEntry {
    passage_count: u64,
    offset: u64,
}

/// Read-only view of a passage store. Immutable once opened.
#[derive(Debug)]
pub struct KbStore {
    path: PathBuf,
    titles: Vec<String>,
    entries: BTreeMap<String, DocEntry>,
    blob: Vec<u8>,
}

impl KbStore {
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(path.to_path_buf(), bytes)
    }

    fn from_bytes(path: PathBuf, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() < STORE_MAGIC.len() || &bytes[..STORE_MAGIC.len()] != STORE_MAGIC {
            return Err(CorpusError::Integrity("bad magic".into()));
        }
        let mut cur = Cursor::new(&bytes, STORE_MAGIC.len());
        let parse = |cur: &mut Cursor<'_>| -> std::result::Result<_, String> {
            let n = cur.u64()?;
            let mut titles = Vec::new();
            let mut entries = BTreeMap::new();
            for _ in 0..n {
                let title = cur.string()?;
                let passage_count = cur.u64()?;
                let offset = cur.u64()?;
                if entries
                    .insert(title.clone(), DocEntry { passage_count, offset })
                    .is_some()
                {
                    return Err(format!("duplicate title {title:?}"));
                }
                titles.push(title);
            }
            let blob_len = usize::try_from(cur.u64()?).map_err(|e| e.to_string())?;
            let blob_start = cur.pos();
            cur.bytes(blob_len)?;
            if cur.pos() != bytes.len() {
                return Err("trailing bytes after blob section".into());
            }
            for (title, e) in &entries {
                if e.offset > blob_len as u64 {
                    return Err(format!("offset of {title:?} past end of blob"));
                }
            }
            Ok((titles, entries, blob_start))
        };
        let (titles, entries, blob_start) = parse(&mut cur).map_err(CorpusError::Integrity)?;
        let blob = bytes[blob_start..].to_vec();
        Ok(Self {
            path,
            titles,
            entries,
            blob,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn document_count(&self) -> usize {
        self.titles.len()
    }

    /// Titles in store order (ascending).
    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    /// Passages of `title` in index order. Lookups are exact and
    /// case-sensitive; an unknown title yields an empty list.
    pub fn get_passages(&self, title: &str) -> Result<Vec<Passage>> {
        let Some(entry) = self.entries.get(title) else {
            return Ok(Vec::new());
        };
        let offset = usize::try_from(entry.offset)
            .map_err(|_| CorpusError::Integrity("offset overflow".into()))?;
        let mut cur = Cursor::new(&self.blob, offset);
        let mut out = Vec::new();
        for index in 0..entry.passage_count {
            let decode = |cur: &mut Cursor<'_>| -> std::result::Result<Passage, String> {
                let word_count = usize::try_from(cur.u64()?).map_err(|e| e.to_string())?;
                let oversized = cur.u8()? != 0;
                let text = cur.string()?;
                Ok(Passage {
                    doc_title: title.to_owned(),
                    index: index as usize,
                    text,
                    word_count,
                    oversized,
                })
            };
            out.push(
                decode(&mut cur)
                    .map_err(|e| CorpusError::Integrity(format!("passage {index} of {title:?}: {e}")))?,
            );
        }
        Ok(out)
    }

    /// Every passage, documents in title order, passages in index order.
    pub fn all_passages(&self) -> Result<Vec<Passage>> {
        let mut out = Vec::new();
        for t in &self.titles {
            out.extend(self.get_passages(t)?);
        }
        Ok(out)
    }
}
