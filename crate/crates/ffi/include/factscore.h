/* Generated by cbindgen. Do not edit. */

#ifndef FACTSCORE_H
#define FACTSCORE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FS_OK 0

// A required pointer argument was null.
#define FS_ERR_NULL 1

// A string argument was not valid UTF-8.
#define FS_ERR_UTF8 2

#define FS_ERR_IO 3

// A store or cache file failed its integrity checks.
#define FS_ERR_INTEGRITY 4

// An argument was well-formed but unusable (bad JSON, empty input, ...).
#define FS_ERR_INVALID 5

// The result is mathematically undefined for the given input.
#define FS_ERR_UNDEFINED 6

// A Rust panic was caught at the boundary.
#define FS_ERR_PANIC 7

// BM25 index over every passage of a store.
typedef struct FsKbIndex FsKbIndex;

// Opened knowledge-base store.
typedef struct FsKbStore FsKbStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fs_version(void);

// Copies the calling thread's last error message into `buf` (truncated and
// NUL-terminated) and returns the full message length in bytes, excluding
// the terminator. `buf` may be null when `len` is 0.
//
// # Safety
// `buf` must be valid for `len` bytes of writes.
size_t fs_last_error_message(char *buf, size_t len);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void fs_string_free(char *s);

// Opens a knowledge-base store file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
int32_t fs_kb_open(const char *path, struct FsKbStore **out);

// # Safety
// `store` must come from [`fs_kb_open`] and not have been freed. Null is ignored.
void fs_kb_free(struct FsKbStore *store);

// # Safety
// `store` must be a live handle; `out` must be writable.
int32_t fs_kb_document_count(const struct FsKbStore *store, size_t *out);

// Passages of the document `title` as a JSON array, in chunk order; an
// unknown title gives `[]`.
//
// # Safety
// `store` must be a live handle; `title` a NUL-terminated string; `out` writable.
int32_t fs_kb_passages_json(const struct FsKbStore *store, const char *title, char **out);

// Builds a BM25 index (k1 = 1.5, b = 0.75) over every passage of `store`.
// The index does not borrow the store.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
int32_t fs_index_build(const struct FsKbStore *store, struct FsKbIndex **out);

// # Safety
// `index` must come from [`fs_index_build`] and not have been freed. Null is ignored.
void fs_index_free(struct FsKbIndex *index);

// Top-`k` passages for `topic + " " + fact` as a JSON array, best first.
//
// # Safety
// `index` must be a live handle; strings NUL-terminated; `out` writable.
int32_t fs_index_retrieve_json(const struct FsKbIndex *index,
                               const char *topic,
                               const char *fact,
                               size_t k,
                               char **out);

// Parses a free-text validator answer. `supported` receives 1 or 0 and
// `no_answer` receives 1 when neither "true" nor "false" was found.
//
// # Safety
// `response` must be NUL-terminated; both out-pointers must be writable.
int32_t fs_parse_verdict(const char *response, int32_t *supported, int32_t *no_answer);

// Sentences of `text` as a JSON array of `{text, index}`.
//
// # Safety
// `text` must be NUL-terminated; `out` writable.
int32_t fs_split_sentences_json(const char *text, char **out);

// Parses a fact-list completion into `{facts, diagnostic}`.
//
// # Safety
// `output` must be NUL-terminated; `out` writable.
int32_t fs_parse_atomic_facts_json(const char *output, size_t sentence_index, char **out);

// Fact-decomposition prompt as a JSON array of `{role, content}` messages.
// `demo_json` is a `{sentence, facts}` object.
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t fs_build_afg_prompt_json(const char *sentence, const char *demo_json, char **out);

// Validation prompt as a JSON array of messages. `passages_json` is an array
// of `{doc_title, text}` objects (other passage fields are optional).
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t fs_build_afv_prompt_json(const char *entity,
                                 const char *fact,
                                 const char *passages_json,
                                 char **out);

// Fraction of supported facts (nonzero entries of `supported`) in [0, 1].
// Returns `FS_ERR_UNDEFINED` for zero facts.
//
// # Safety
// `supported` must be valid for `n` reads; `out` writable.
int32_t fs_factscore(const uint8_t *supported, size_t n, double *out);

// `human - estimated`.
double fs_error_rate(double human, double estimated);

// Sum of absolute error rates.
//
// # Safety
// `ers` must be valid for `n` reads; `out` writable.
int32_t fs_cumulative_error_rate(const double *ers, size_t n, double *out);

// Pearson correlation of two length-`n` arrays.
//
// # Safety
// `x` and `y` must be valid for `n` reads; `out` writable.
int32_t fs_pearson(const double *x, const double *y, size_t n, double *out);

// Spearman rank correlation (average ranks for ties).
//
// # Safety
// `x` and `y` must be valid for `n` reads; `out` writable.
int32_t fs_spearman(const double *x, const double *y, size_t n, double *out);

// Token-overlap F1 between two texts.
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t fs_token_f1(const char *a, const char *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTSCORE_H */
