//! Okapi BM25 over an in-memory inverted index.
//!
//! One index type serves both few-shot demo selection and knowledge-base
//! passage retrieval. Scores use
//!
//! ```text
//! score(q, d) = Σ_t IDF(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! IDF(t)      = ln((N − n_t + 0.5) / (n_t + 0.5) + 1)
//! ```
//!
//! so every matching term contributes a strictly positive amount.

use crate::afg::DemoEntry;
use crate::backends::{Backend, BackendError};
use crate::corpus::{CorpusError, Cursor, KbStore, Passage};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub type ItemId = usize;

pub const INDEX_MAGIC: &[u8; 6] = b"FEIX1\n";
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate item id {0}")]
    DuplicateItem(ItemId),
    #[error("unknown item id {0}")]
    UnknownItem(ItemId),
    #[error("demo pool is empty")]
    EmptyDemoPool,
    #[error("index cache is corrupt: {0}")]
    Cache(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub type Result<T> = std::result::Result<T, RetrievalError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Lowercases and splits on every non-alphanumeric character. No stemming,
/// no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedHit {
    pub item_id: ItemId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<(ItemId, u32)>>,
    doc_lengths: BTreeMap<ItemId, usize>,
    avg_doc_length: f64,
    params: Bm25Params,
}

impl InvertedIndex {
    pub fn build<'a, I>(items: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = (ItemId, &'a str)>,
    {
        let mut postings: BTreeMap<String, Vec<(ItemId, u32)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (id, text) in items {
            let terms = tokenize(text);
            if doc_lengths.insert(id, terms.len()).is_some() {
                return Err(RetrievalError::DuplicateItem(id));
            }
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((id, n));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|&(id, _)| id);
        }
        Ok(Self::from_parts(postings, doc_lengths, params))
    }

    fn from_parts(
        postings: BTreeMap<String, Vec<(ItemId, u32)>>,
        doc_lengths: BTreeMap<ItemId, usize>,
        params: Bm25Params,
    ) -> Self {
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.values().sum::<usize>() as f64 / doc_lengths.len() as f64
        };
        Self {
            postings,
            doc_lengths,
            avg_doc_length,
            params,
        }
    }

    pub fn item_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn postings(&self, term: &str) -> &[(ItemId, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_length(&self, id: ItemId) -> Option<usize> {
        self.doc_lengths.get(&id).copied()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.item_count() as f64;
        let df = self.postings(term).len() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * len as f64 / self.avg_doc_length;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 score of one item. Query terms repeat-count; absent terms add 0.
    pub fn bm25_score(&self, query_terms: &[String], item: ItemId) -> Result<f64> {
        let len = self
            .doc_length(item)
            .ok_or(RetrievalError::UnknownItem(item))?;
        let mut score = 0.0;
        for t in query_terms {
            let list = self.postings(t);
            if let Ok(pos) = list.binary_search_by_key(&item, |&(id, _)| id) {
                score += self.term_weight(self.idf(t), list[pos].1, len);
            }
        }
        Ok(score)
    }

    /// The `k` best-scoring items for `query`, descending by score with ties
    /// broken by ascending id. Items scoring zero are never returned.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<RankedHit> {
        self.top_k_terms(&tokenize(query), k)
    }

    pub fn top_k_terms(&self, query_terms: &[String], k: usize) -> Vec<RankedHit> {
        let mut acc: HashMap<ItemId, f64> = HashMap::new();
        for t in query_terms {
            let list = self.postings(t);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(t);
            for &(id, tf) in list {
                *acc.entry(id).or_insert(0.0) += self.term_weight(idf, tf, self.doc_lengths[&id]);
            }
        }
        let mut hits: Vec<RankedHit> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(item_id, score)| RankedHit { item_id, score })
            .collect();
        sort_hits(&mut hits);
        hits.truncate(k);
        hits
    }

    pub fn save_cache(&self, path: &Path) -> std::io::Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&self.params.k1.to_le_bytes());
        out.extend_from_slice(&self.params.b.to_le_bytes());
        let put = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        put(&mut out, self.doc_lengths.len() as u64);
        for (&id, &len) in &self.doc_lengths {
            put(&mut out, id as u64);
            put(&mut out, len as u64);
        }
        put(&mut out, self.postings.len() as u64);
        for (term, list) in &self.postings {
            put(&mut out, term.len() as u64);
            out.extend_from_slice(term.as_bytes());
            put(&mut out, list.len() as u64);
            for &(id, tf) in list {
                put(&mut out, id as u64);
                put(&mut out, u64::from(tf));
            }
        }
        crate::jsonl::write_atomic(path, &out)
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| RetrievalError::Cache(e.to_string()))?;
        if bytes.len() < INDEX_MAGIC.len() || &bytes[..INDEX_MAGIC.len()] != INDEX_MAGIC {
            return Err(RetrievalError::Cache("bad magic".into()));
        }
        let mut cur = Cursor::new(&bytes, INDEX_MAGIC.len());
        let parse = |cur: &mut Cursor<'_>| -> std::result::Result<Self, String> {
            let k1 = f64::from_bits(cur.u64()?);
            let b = f64::from_bits(cur.u64()?);
            let to_usize = |v: u64| usize::try_from(v).map_err(|e| e.to_string());
            let mut doc_lengths = BTreeMap::new();
            for _ in 0..cur.u64()? {
                let id = to_usize(cur.u64()?)?;
                let len = to_usize(cur.u64()?)?;
                doc_lengths.insert(id, len);
            }
            let mut postings = BTreeMap::new();
            for _ in 0..cur.u64()? {
                let term = cur.string()?;
                let mut list = Vec::new();
                for _ in 0..cur.u64()? {
                    let id = to_usize(cur.u64()?)?;
                    let tf = u32::try_from(cur.u64()?).map_err(|e| e.to_string())?;
                    if tf == 0 || !doc_lengths.contains_key(&id) {
                        return Err(format!("invalid posting for {term:?}"));
                    }
                    list.push((id, tf));
                }
                postings.insert(term, list);
            }
            if cur.pos() != bytes.len() {
                return Err("trailing bytes".into());
            }
            Ok(Self::from_parts(postings, doc_lengths, Bm25Params { k1, b }))
        };
        parse(&mut cur).map_err(RetrievalError::Cache)
    }
}

pub(crate) fn sort_hits(hits: &mut [RankedHit]) {
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
}

/// Prebuilt BM25 index over the sentences of a demo pool.
#[derive(Debug, Clone)]
pub struct DemoSelector {
    pool: Vec<DemoEntry>,
    index: InvertedIndex,
}

impl DemoSelector {
    pub fn new(pool: Vec<DemoEntry>) -> Result<Self> {
        if pool.is_empty() {
            return Err(RetrievalError::EmptyDemoPool);
        }
        let index = InvertedIndex::build(
            pool.iter().enumerate().map(|(i, d)| (i, d.sentence.as_str())),
            Bm25Params::default(),
        )?;
        Ok(Self { pool, index })
    }

    pub fn pool(&self) -> &[DemoEntry] {
        &self.pool
    }

    /// Top-1 BM25 demo for `sentence`, or the first pool entry when nothing
    /// matches.
    pub fn select(&self, sentence: &str) -> &DemoEntry {
        &self.pool[self.select_index(sentence)]
    }

    pub fn select_index(&self, sentence: &str) -> usize {
        self.index.top_k(sentence, 1).first().map_or(0, |hit| hit.item_id)
    }
}

pub fn select_demo<'a>(pool: &'a [DemoEntry], sentence: &str) -> Result<&'a DemoEntry> {
    let selector = DemoSelector::new(pool.to_vec())?;
    Ok(&pool[selector.select_index(sentence)])
}

/// Source of evidence passages for a fact.
pub trait PassageRetriever: Send + Sync {
    fn retrieve_for(&self, topic: &str, fact: &str, k: usize) -> std::result::Result<Vec<Passage>, BackendError>;
}

impl PassageRetriever for KbIndex {
    fn retrieve_for(&self, topic: &str, fact: &str, k: usize) -> std::result::Result<Vec<Passage>, BackendError> {
        Ok(self.retrieve(topic, fact, k))
    }
}

/// BM25 index over every passage of a knowledge-base store. Each passage is
/// indexed together with its document title.
#[derive(Debug, Clone)]
pub struct KbIndex {
    passages: Vec<Passage>,
    index: InvertedIndex,
}

impl KbIndex {
    pub fn from_passages(passages: Vec<Passage>, params: Bm25Params) -> Result<Self> {
        let texts: Vec<String> = passages.iter().map(indexed_text).collect();
        let index = InvertedIndex::build(
            texts.iter().enumerate().map(|(i, t)| (i, t.as_str())),
            params,
        )?;
        Ok(Self { passages, index })
    }

    pub fn from_store(store: &KbStore, params: Bm25Params) -> Result<Self> {
        Self::from_passages(store.all_passages()?, params)
    }

    /// Loads postings from `cache` when it exists and matches the store,
    /// otherwise builds them and writes the cache.
    pub fn from_store_cached(store: &KbStore, params: Bm25Params, cache: &Path) -> Result<Self> {
        let passages = store.all_passages()?;
        if cache.exists() {
            match InvertedIndex::load_cache(cache) {
                Ok(index) if index.item_count() == passages.len() && index.params == params => {
                    return Ok(Self { passages, index });
                }
                Ok(_) => log::warn!("index cache {} is stale, rebuilding", cache.display()),
                Err(e) => log::warn!("ignoring index cache: {e}"),
            }
        }
        let kb = Self::from_passages(passages, params)?;
        if let Err(e) = kb.index.save_cache(cache) {
            log::warn!("could not write index cache {}: {e}", cache.display());
        }
        Ok(kb)
    }

    pub fn empty() -> Self {
        Self {
            passages: Vec::new(),
            index: InvertedIndex::from_parts(BTreeMap::new(), BTreeMap::new(), Bm25Params::default()),
        }
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    /// Top-`k` passages for the query `topic + " " + fact`.
    pub fn retrieve(&self, topic: &str, fact: &str, k: usize) -> Vec<Passage> {
        let query = format!("{topic} {fact}");
        self.index
            .top_k(&query, k)
            .into_iter()
            .map(|h| self.passages[h.item_id].clone())
            .collect()
    }
}

fn indexed_text(p: &Passage) -> String {
    format!("{} {}", p.doc_title, p.text)
}

pub fn retrieve_passages(kb: &KbIndex, topic: &str, fact: &crate::afg::AtomicFact, k: usize) -> Vec<Passage> {
    kb.retrieve(topic, &fact.text, k)
}

/// Opt-in dense retrieval: cosine similarity between backend embeddings of
/// the query and of every passage.
pub struct DenseKbIndex {
    passages: Vec<Passage>,
    vectors: Vec<Vec<f64>>,
}

impl DenseKbIndex {
    pub fn build(passages: Vec<Passage>, backend: &dyn Backend) -> Result<Self> {
        let vectors = if passages.is_empty() {
            Vec::new()
        } else {
            let texts: Vec<String> = passages.iter().map(indexed_text).collect();
            backend.embed(&texts)?
        };
        Ok(Self { passages, vectors })
    }

    pub fn retrieve(&self, backend: &dyn Backend, topic: &str, fact: &str, k: usize) -> Result<Vec<Passage>> {
        if self.passages.is_empty() {
            return Ok(Vec::new());
        }
        let q = backend.embed(&[format!("{topic} {fact}")])?.remove(0);
        let mut hits: Vec<RankedHit> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(item_id, v)| RankedHit {
                item_id,
                score: v.iter().zip(&q).map(|(a, b)| a * b).sum(),
            })
            .collect();
        sort_hits(&mut hits);
        Ok(hits
            .into_iter()
            .take(k)
            .map(|h| self.passages[h.item_id].clone())
            .collect())
    }
}

/// A [`DenseKbIndex`] bundled with the backend that embeds its queries.
pub struct DenseRetriever {
    index: DenseKbIndex,
    backend: Arc<dyn Backend>,
}

impl DenseRetriever {
    pub fn build(passages: Vec<Passage>, backend: Arc<dyn Backend>) -> Result<Self> {
        let index = DenseKbIndex::build(passages, backend.as_ref())?;
        Ok(Self { index, backend })
    }
}

impl PassageRetriever for DenseRetriever {
    fn retrieve_for(&self, topic: &str, fact: &str, k: usize) -> std::result::Result<Vec<Passage>, BackendError> {
        self.index
            .retrieve(self.backend.as_ref(), topic, fact, k)
            .map_err(|e| match e {
                RetrievalError::Backend(b) => b,
                other => BackendError::InvalidRequest(other.to_string()),
            })
    }
}
