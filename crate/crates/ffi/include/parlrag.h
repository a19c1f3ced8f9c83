#ifndef PARLRAG_H
#define PARLRAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every call.
 */
typedef enum ParlragStatus {
  PARLRAG_STATUS_OK = 0,
  /*
   A required pointer argument was NULL.
   */
  PARLRAG_STATUS_NULL_ARGUMENT = 1,
  /*
   A string argument was not valid UTF-8.
   */
  PARLRAG_STATUS_INVALID_UTF8 = 2,
  /*
   Malformed or semantically invalid request (HTTP 400 equivalent).
   */
  PARLRAG_STATUS_INVALID_REQUEST = 3,
  /*
   Unknown chunk or missing enrichment (HTTP 404 equivalent).
   */
  PARLRAG_STATUS_NOT_FOUND = 4,
  /*
   The generation or embedding backend failed (HTTP 502 equivalent).
   */
  PARLRAG_STATUS_BACKEND = 5,
  /*
   Store, index or configuration problem (HTTP 500 equivalent).
   */
  PARLRAG_STATUS_INTERNAL = 6,
  /*
   A Rust panic was caught at the boundary.
   */
  PARLRAG_STATUS_PANIC = 7,
} ParlragStatus;

/*
 Opaque engine handle.
 */
typedef struct ParlragEngine ParlragEngine;

/*
 Opens a built data directory. `config_path` may be NULL for the offline
 defaults.

 # Safety
 `data_dir` must be a NUL-terminated string, `config_path` NULL or a
 NUL-terminated string, and `out_engine` a valid pointer. On success
 `*out_engine` receives a handle to release with [`parlrag_engine_free`].
 */
enum ParlragStatus parlrag_engine_open(const char *data_dir,
                                       const char *config_path,
                                       struct ParlragEngine **out_engine);

/*
 # Safety
 `engine` must be NULL or a handle from [`parlrag_engine_open`] that has
 not been freed.
 */
void parlrag_engine_free(struct ParlragEngine *engine);

/*
 Stage one. `request_json` has the shape of the `/api/query` body:
 `{"query": str, "k"?: int, "filter"?: {...}}`.

 # Safety
 Pointers must be valid; `engine` must be a live handle.
 */
enum ParlragStatus parlrag_query(const struct ParlragEngine *engine,
                                 const char *request_json,
                                 char **out_json);

/*
 Stage two: a generated answer grounded in `chunk_id`.

 # Safety
 Pointers must be valid; `engine` must be a live handle.
 */
enum ParlragStatus parlrag_respond(const struct ParlragEngine *engine,
                                   const char *chunk_id,
                                   const char *query,
                                   char **out_json);

/*
 The chunk with its full turn and document.

 # Safety
 Pointers must be valid; `engine` must be a live handle.
 */
enum ParlragStatus parlrag_source(const struct ParlragEngine *engine,
                                  const char *chunk_id,
                                  char **out_json);

/*
 Records feedback. `request_json` has the shape of the `/api/feedback`
 body; the stored event is written to `out_json`.

 # Safety
 Pointers must be valid; `engine` must be a live handle.
 */
enum ParlragStatus parlrag_feedback(const struct ParlragEngine *engine,
                                    const char *request_json,
                                    char **out_json);

/*
 # Safety
 Pointers must be valid; `engine` must be a live handle.
 */
enum ParlragStatus parlrag_suggestions(const struct ParlragEngine *engine, char **out_json);

/*
 # Safety
 Pointers must be valid; `engine` must be a live handle.
 */
enum ParlragStatus parlrag_health(const struct ParlragEngine *engine, char **out_json);

/*
 Integrity report for a data directory. Returns OK whenever a report was
 produced; inspect its `ok` field.

 # Safety
 `data_dir` must be a NUL-terminated string and `out_json` valid.
 */
enum ParlragStatus parlrag_integrity_check(const char *data_dir, char **out_json);

/*
 Releases a string returned through an out-pointer.

 # Safety
 `s` must be NULL or a string from this library not yet freed.
 */
void parlrag_string_free(char *s);

/*
 The last error on this thread as JSON, or NULL after a successful call.
 The pointer stays valid until the next call on the same thread.
 */
const char *parlrag_last_error(void);

/*
 Library version, a static string.
 */
const char *parlrag_version(void);

#endif  /* PARLRAG_H */
