#ifndef VLMC_H
#define VLMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a library call.
typedef enum VlmcStatus {
  VLMC_STATUS_OK = 0,
  // A required pointer argument was NULL.
  VLMC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  VLMC_STATUS_INVALID_UTF8 = 2,
  // Bad configuration, arguments or JSON input.
  VLMC_STATUS_USAGE = 3,
  // A backend was unreachable after retries.
  VLMC_STATUS_TRANSPORT = 4,
  // A backend answered with an error or an unreadable body.
  VLMC_STATUS_PROTOCOL = 5,
  // The dataset failed validation.
  VLMC_STATUS_VALIDATION = 6,
  // A dataset file could not be parsed.
  VLMC_STATUS_PARSE = 7,
  // An input normalized to nothing where text was required.
  VLMC_STATUS_DEGENERATE = 8,
  VLMC_STATUS_IO = 9,
  // The library panicked; the handle involved should be freed.
  VLMC_STATUS_PANIC = 10,
} VlmcStatus;

// An embedding backend plus the runtime that drives it.
typedef struct VlmcEmbedder VlmcEmbedder;

// A validated run configuration with its dataset loaded.
typedef struct VlmcHarness VlmcHarness;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last failure on this thread, or NULL if the last call
// succeeded. Do not free the returned pointer.
const char *vlmc_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library, not yet freed.
void vlmc_string_free(char *s);

// Library version as a static string. Do not free.
const char *vlmc_version(void);

// Normalize text the way answers and choices are compared.
//
// # Safety
// `text` must be a valid C string; `out` must be writable.
enum VlmcStatus vlmc_normalize_text(const char *text, char **out);

// Rewrite a raw question for a task family (`"VQA_MC"`, `"ENTAILMENT"`, ...).
//
// # Safety
// `family` and `question` must be valid C strings; `out` must be writable.
enum VlmcStatus vlmc_transform_question(const char *family, const char *question, char **out);

// Render a coordinator prompt.
//
// `request_json` is an object with `family`, `expert_names`, `question`,
// `choices`, `outputs` (one `ExpertOutput` per expert, in panel order) and
// optional `exemplars` (`{"record": ..., "outputs": [...]}`).
//
// # Safety
// `request_json` must be a valid C string; `out` must be writable.
enum VlmcStatus vlmc_build_prompt(const char *request_json, char **out);

// Soft direct-answer score: `min(matching annotators / 3, 1)`.
//
// # Safety
// `prediction` and `gold_answers_json` (a JSON array of strings) must be
// valid C strings; `out` must be writable.
enum VlmcStatus vlmc_da_accuracy(const char *prediction,
                                 const char *gold_answers_json,
                                 double *out);

// Cosine similarity of two vectors of length `len`.
//
// # Safety
// `a` and `b` must point to `len` readable doubles; `out` must be writable.
enum VlmcStatus vlmc_cosine(const double *a, const double *b, uintptr_t len, double *out);

// Create an embedder. `handle_json` is a backend handle
// (`{"name", "base_url", "role": "embedder", ...}`) or NULL for the
// built-in in-process embedder.
//
// # Safety
// `handle_json` must be NULL or a valid C string; `out` must be writable.
enum VlmcStatus vlmc_embedder_new(const char *handle_json, struct VlmcEmbedder **out);

// # Safety
// `e` must be NULL or a handle from [`vlmc_embedder_new`], not yet freed.
void vlmc_embedder_free(struct VlmcEmbedder *e);

// Embed one text. Writes up to `cap` values into `out` and the full
// dimension into `out_len`; call with `cap = 0` to query the dimension.
//
// # Safety
// `e` must be a live handle, `text` a valid C string, `out` writable for
// `cap` doubles (may be NULL when `cap` is 0) and `out_len` writable.
enum VlmcStatus vlmc_embed(const struct VlmcEmbedder *e,
                           const char *text,
                           double *out,
                           uintptr_t cap,
                           uintptr_t *out_len);

// Map a free-text completion onto a choice set (a JSON array of strings).
// The result is a JSON object with `distribution`, `pick`, `degenerate`
// and `exact_match`.
//
// # Safety
// `e` must be a live handle, `completion` and `choices_json` valid C
// strings and `out` writable.
enum VlmcStatus vlmc_map_to_choice(const struct VlmcEmbedder *e,
                                   const char *completion,
                                   const char *choices_json,
                                   char **out);

// Load a run configuration (JSON) and ingest its dataset. Relative dataset
// and cache paths resolve against `base_dir`, or the working directory
// when it is NULL. Nothing touches the network here.
//
// # Safety
// `config_json` must be a valid C string, `base_dir` NULL or a valid C
// string, and `out` writable.
enum VlmcStatus vlmc_harness_new(const char *config_json,
                                 const char *base_dir,
                                 struct VlmcHarness **out);

// # Safety
// `h` must be NULL or a handle from [`vlmc_harness_new`], not yet freed.
void vlmc_harness_free(struct VlmcHarness *h);

// Configuration fingerprint as 64 hex characters.
//
// # Safety
// `h` must be a live handle and `out` writable.
enum VlmcStatus vlmc_harness_fingerprint(const struct VlmcHarness *h, char **out);

// Health-check the backends, evaluate, and return the report as JSON.
//
// # Safety
// `h` must be a live handle and `out` writable.
enum VlmcStatus vlmc_harness_run(const struct VlmcHarness *h, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VLMC_H */
