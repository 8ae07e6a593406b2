//! C ABI over the `factscore` crate.
//!
//! Every fallible function returns an `FS_*` status code and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`fs_last_error_message`]. Strings returned through `char **`
//! are owned by the caller and must be released with [`fs_string_free`];
//! handles are released with their `*_free` function. Structured results are
//! JSON documents.

use factscore::afg::{build_afg_prompt, parse_atomic_facts, split_sentences, AtomicFact, DemoEntry, Sentence};
use factscore::afv::{build_afv_prompt, parse_verdict, Label};
use factscore::corpus::{CorpusError, KbStore, Passage};
use factscore::evalharness::similarity::token_f1;
use factscore::evalharness::{cumulative_error_rate, error_rate, pearson, spearman_rank, ScoreVector};
use factscore::retrieval::{Bm25Params, KbIndex};
use factscore::scoring::topic_factscore;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

pub const FS_OK: i32 = 0;
/// A required pointer argument was null.
pub const FS_ERR_NULL: i32 = 1;
/// A string argument was not valid UTF-8.
pub const FS_ERR_UTF8: i32 = 2;
pub const FS_ERR_IO: i32 = 3;
/// A store or cache file failed its integrity checks.
pub const FS_ERR_INTEGRITY: i32 = 4;
/// An argument was well-formed but unusable (bad JSON, empty input, ...).
pub const FS_ERR_INVALID: i32 = 5;
/// The result is mathematically undefined for the given input.
pub const FS_ERR_UNDEFINED: i32 = 6;
/// A Rust panic was caught at the boundary.
pub const FS_ERR_PANIC: i32 = 7;

/// Opened knowledge-base store.
pub struct FsKbStore {
    inner: KbStore,
}

/// BM25 index over every passage of a store.
pub struct FsKbIndex {
    inner: KbIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(i32, String);

type FfiResult<T> = Result<T, Failure>;

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            FS_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(_) => {
            set_last_error("panic in factscore");
            FS_ERR_PANIC
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FS_ERR_INVALID, msg.into())
}

fn corpus_failure(e: CorpusError) -> Failure {
    match e {
        CorpusError::Io(_) => Failure(FS_ERR_IO, e.to_string()),
        CorpusError::Integrity(_) => Failure(FS_ERR_INTEGRITY, e.to_string()),
        CorpusError::ChunkSize(_) => invalid(e.to_string()),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(FS_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FS_ERR_UTF8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(FS_ERR_NULL, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(FS_ERR_NULL, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_json<T: serde::Serialize + ?Sized>(out: *mut *mut c_char, value: &T) -> FfiResult<()> {
    let text = serde_json::to_string(value).map_err(|e| invalid(e.to_string()))?;
    let c = CString::new(text).map_err(|e| invalid(e.to_string()))?;
    put(out, c.into_raw())
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> FfiResult<T> {
    serde_json::from_str(text).map_err(|e| invalid(format!("{name}: {e}")))
}

fn metric<T>(r: Result<T, factscore::evalharness::EvalError>) -> FfiResult<T> {
    r.map_err(|e| Failure(FS_ERR_UNDEFINED, e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length in bytes, excluding
/// the terminator. `buf` may be null when `len` is 0.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn fs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens a knowledge-base store file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_kb_open(path: *const c_char, out: *mut *mut FsKbStore) -> i32 {
    guard(|| {
        let path = str_arg(path, "path")?;
        let inner = KbStore::open(Path::new(path)).map_err(corpus_failure)?;
        put(out, Box::into_raw(Box::new(FsKbStore { inner })))
    })
}

/// # Safety
/// `store` must come from [`fs_kb_open`] and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fs_kb_free(store: *mut FsKbStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_kb_document_count(store: *const FsKbStore, out: *mut usize) -> i32 {
    guard(|| {
        let store = store.as_ref().ok_or(Failure(FS_ERR_NULL, "store is null".into()))?;
        put(out, store.inner.document_count())
    })
}

/// Passages of the document `title` as a JSON array, in chunk order; an
/// unknown title gives `[]`.
///
/// # Safety
/// `store` must be a live handle; `title` a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_kb_passages_json(
    store: *const FsKbStore,
    title: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let store = store.as_ref().ok_or(Failure(FS_ERR_NULL, "store is null".into()))?;
        let title = str_arg(title, "title")?;
        let passages = store.inner.get_passages(title).map_err(corpus_failure)?;
        put_json(out, &passages)
    })
}

/// Builds a BM25 index (k1 = 1.5, b = 0.75) over every passage of `store`.
/// The index does not borrow the store.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_index_build(store: *const FsKbStore, out: *mut *mut FsKbIndex) -> i32 {
    guard(|| {
        let store = store.as_ref().ok_or(Failure(FS_ERR_NULL, "store is null".into()))?;
        let inner = KbIndex::from_store(&store.inner, Bm25Params::default()).map_err(|e| invalid(e.to_string()))?;
        put(out, Box::into_raw(Box::new(FsKbIndex { inner })))
    })
}

/// # Safety
/// `index` must come from [`fs_index_build`] and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn fs_index_free(index: *mut FsKbIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Top-`k` passages for `topic + " " + fact` as a JSON array, best first.
///
/// # Safety
/// `index` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_index_retrieve_json(
    index: *const FsKbIndex,
    topic: *const c_char,
    fact: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let index = index.as_ref().ok_or(Failure(FS_ERR_NULL, "index is null".into()))?;
        let passages = index.inner.retrieve(str_arg(topic, "topic")?, str_arg(fact, "fact")?, k);
        put_json(out, &passages)
    })
}

/// Parses a free-text validator answer. `supported` receives 1 or 0 and
/// `no_answer` receives 1 when neither "true" nor "false" was found.
///
/// # Safety
/// `response` must be NUL-terminated; both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_parse_verdict(response: *const c_char, supported: *mut i32, no_answer: *mut i32) -> i32 {
    guard(|| {
        let v = parse_verdict(str_arg(response, "response")?);
        put(supported, i32::from(v.label.is_supported()))?;
        put(no_answer, i32::from(v.no_answer))
    })
}

/// Sentences of `text` as a JSON array of `{text, index}`.
///
/// # Safety
/// `text` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_split_sentences_json(text: *const c_char, out: *mut *mut c_char) -> i32 {
    guard(|| put_json(out, &split_sentences(str_arg(text, "text")?)))
}

/// Parses a fact-list completion into `{facts, diagnostic}`.
///
/// # Safety
/// `output` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_parse_atomic_facts_json(
    output: *const c_char,
    sentence_index: usize,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| put_json(out, &parse_atomic_facts(str_arg(output, "output")?, sentence_index)))
}

/// Fact-decomposition prompt as a JSON array of `{role, content}` messages.
/// `demo_json` is a `{sentence, facts}` object.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_build_afg_prompt_json(
    sentence: *const c_char,
    demo_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let sentence = Sentence {
            text: str_arg(sentence, "sentence")?.to_owned(),
            index: 0,
        };
        let demo: DemoEntry = parse_json(str_arg(demo_json, "demo_json")?, "demo_json")?;
        put_json(out, &build_afg_prompt(&sentence, &demo))
    })
}

/// Validation prompt as a JSON array of messages. `passages_json` is an array
/// of `{doc_title, text}` objects (other passage fields are optional).
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_build_afv_prompt_json(
    entity: *const c_char,
    fact: *const c_char,
    passages_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        #[derive(serde::Deserialize)]
        struct PassageIn {
            doc_title: String,
            text: String,
        }
        let raw: Vec<PassageIn> = parse_json(str_arg(passages_json, "passages_json")?, "passages_json")?;
        let passages: Vec<Passage> = raw
            .into_iter()
            .enumerate()
            .map(|(index, p)| Passage {
                word_count: p.text.split_whitespace().count(),
                doc_title: p.doc_title,
                index,
                text: p.text,
                oversized: false,
            })
            .collect();
        let fact = AtomicFact {
            text: str_arg(fact, "fact")?.to_owned(),
            sentence_index: 0,
            fact_index: 0,
        };
        put_json(out, &build_afv_prompt(str_arg(entity, "entity")?, &fact, &passages))
    })
}

/// Fraction of supported facts (nonzero entries of `supported`) in [0, 1].
/// Returns `FS_ERR_UNDEFINED` for zero facts.
///
/// # Safety
/// `supported` must be valid for `n` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_factscore(supported: *const u8, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let labels: Vec<Label> = slice_arg(supported, n, "supported")?
            .iter()
            .map(|&s| if s != 0 { Label::Supported } else { Label::NotSupported })
            .collect();
        let (_, _, score) = topic_factscore(&labels);
        put(out, score.ok_or(Failure(FS_ERR_UNDEFINED, "no facts".into()))?)
    })
}

/// `human - estimated`.
#[no_mangle]
pub extern "C" fn fs_error_rate(human: f64, estimated: f64) -> f64 {
    error_rate(human, estimated)
}

/// Sum of absolute error rates.
///
/// # Safety
/// `ers` must be valid for `n` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_cumulative_error_rate(ers: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| put(out, metric(cumulative_error_rate(slice_arg(ers, n, "ers")?))?))
}

unsafe fn vectors(x: *const f64, y: *const f64, n: usize) -> FfiResult<(ScoreVector, ScoreVector)> {
    Ok((
        ScoreVector::from_values(slice_arg(x, n, "x")?),
        ScoreVector::from_values(slice_arg(y, n, "y")?),
    ))
}

/// Pearson correlation of two length-`n` arrays.
///
/// # Safety
/// `x` and `y` must be valid for `n` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_pearson(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let (a, b) = vectors(x, y, n)?;
        put(out, metric(pearson(&a, &b))?)
    })
}

/// Spearman rank correlation (average ranks for ties).
///
/// # Safety
/// `x` and `y` must be valid for `n` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> i32 {
    guard(|| {
        let (a, b) = vectors(x, y, n)?;
        put(out, metric(spearman_rank(&a, &b))?)
    })
}

/// Token-overlap F1 between two texts.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fs_token_f1(a: *const c_char, b: *const c_char, out: *mut f64) -> i32 {
    guard(|| put(out, token_f1(str_arg(a, "a")?, str_arg(b, "b")?)))
}
