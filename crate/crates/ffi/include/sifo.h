#ifndef SIFO_H
#define SIFO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum SifoStatus {
  SIFO_STATUS_OK = 0,
  /**
   * The program or step was rejected by the type system.
   */
  SIFO_STATUS_REJECTED = 1,
  /**
   * A null pointer, invalid UTF-8 or malformed text was passed.
   */
  SIFO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The class or method does not exist.
   */
  SIFO_STATUS_NOT_FOUND = 3,
  /**
   * The soundness oracle failed on a completed session.
   */
  SIFO_STATUS_UNSOUND = 4,
  /**
   * The library panicked; the handle involved should be freed.
   */
  SIFO_STATUS_INTERNAL = 5,
} SifoStatus;

/**
 * A lattice and class table.
 */
typedef struct SifoProgram SifoProgram;

/**
 * A refinement session on one method.
 */
typedef struct SifoSession SifoSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns a copy of the last error message on this thread, or null if
 * there was none. Release it with [`sifo_string_free`].
 */
char *sifo_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void sifo_string_free(char *s);

/**
 * Parses a lattice description and one source text into a program. Parse
 * and class-table errors yield `Rejected` with the diagnostics in the error
 * message.
 *
 * # Safety
 * `lattice` and `source` must be NUL-terminated strings; `out` must be
 * valid for writes.
 */
enum SifoStatus sifo_program_new(const char *lattice, const char *source, struct SifoProgram **out);

/**
 * Type checks every method body. On `Rejected`, `diagnostics` (if not
 * null) receives one diagnostic per line.
 *
 * # Safety
 * `program` must be a live handle; `diagnostics` must be null or valid for
 * writes.
 */
enum SifoStatus sifo_program_check(const struct SifoProgram *program, char **diagnostics);

/**
 * # Safety
 * `program` must be null or a handle not yet freed.
 */
void sifo_program_free(struct SifoProgram *program);

/**
 * Opens a refinement session on `class_name.method`. The session keeps
 * its own reference to the program, which may be freed independently.
 *
 * # Safety
 * `program` must be a live handle, the names NUL-terminated strings and
 * `out` valid for writes.
 */
enum SifoStatus sifo_session_start(const struct SifoProgram *program,
                                   const char *class_name,
                                   const char *method,
                                   bool allow_declassify,
                                   struct SifoSession **out);

/**
 * Applies one step written as `<Rule> @ <hole> <args>`. A rejected step
 * leaves the session unchanged.
 *
 * # Safety
 * `session` must be a live handle and `step` a NUL-terminated string.
 */
enum SifoStatus sifo_session_apply(struct SifoSession *session, const char *step);

/**
 * Reverts the most recent step. Fails with `Rejected` on a fresh session.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SifoStatus sifo_session_undo(struct SifoSession *session);

/**
 * Number of open holes, or 0 for a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t sifo_session_hole_count(const struct SifoSession *session);

/**
 * # Safety
 * `session` must be null or a live handle.
 */
bool sifo_session_is_complete(const struct SifoSession *session);

/**
 * The session as the JSON document served by `GET /session/{id}`, with
 * id `ffi` and the number of applied steps as revision.
 *
 * # Safety
 * `session` must be a live handle and `out` valid for writes.
 */
enum SifoStatus sifo_session_view_json(const struct SifoSession *session, char **out);

/**
 * Source text of the completed method. Fails with `Rejected` while holes
 * remain.
 *
 * # Safety
 * `session` must be a live handle and `out` valid for writes.
 */
enum SifoStatus sifo_session_export(const struct SifoSession *session, char **out);

/**
 * Re-checks the completed method with the type checker. `Unsound` means
 * the engine built a method the checker rejects.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum SifoStatus sifo_session_verify(const struct SifoSession *session);

/**
 * # Safety
 * `session` must be null or a handle not yet freed.
 */
void sifo_session_free(struct SifoSession *session);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sifo_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIFO_H */
