#ifndef JOINTSEG_H
#define JOINTSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum JsegStatus {
  JSEG_STATUS_OK = 0,
  JSEG_STATUS_NULL_POINTER = 1,
  JSEG_STATUS_INVALID_UTF8 = 2,
  JSEG_STATUS_IO = 3,
  JSEG_STATUS_PARSE = 4,
  JSEG_STATUS_ARCHIVE = 5,
  JSEG_STATUS_LABEL_SPACE_MISMATCH = 6,
  JSEG_STATUS_INVALID_ARGUMENT = 7,
  JSEG_STATUS_INTERNAL = 8,
} JsegStatus;

/*
 A loaded model or ensemble.
 */
typedef struct JsegTagger JsegTagger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *jseg_last_error(void);

/*
 Loads `n` model archives; more than one forms an ensemble.

 # Safety
 `paths` must point to `n` NUL-terminated strings and `out` must be
 writable.
 */
enum JsegStatus jseg_tagger_load(const char *const *paths, size_t n, struct JsegTagger **out);

/*
 Releases a tagger; null is ignored.

 # Safety
 `tagger` must come from [`jseg_tagger_load`] and not be used afterwards.
 */
void jseg_tagger_free(struct JsegTagger *tagger);

/*
 Number of combined boundary/POS labels of the tagger.

 # Safety
 `tagger` must be valid and `out` writable.
 */
enum JsegStatus jseg_tagger_num_labels(const struct JsegTagger *tagger, size_t *out);

/*
 Tags one sentence. Whitespace in the input is ignored; the result is
 space-separated `word_POS` tokens (empty for empty input).

 # Safety
 `tagger` must be valid, `sentence` a NUL-terminated string and `out`
 writable. The string stored in `out` must be freed with
 [`jseg_string_free`].
 */
enum JsegStatus jseg_tag(const struct JsegTagger *tagger, const char *sentence, char **out);

/*
 Frees a string returned by this library; null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void jseg_string_free(char *s);

/*
 Mid-p McNemar p-value for discordant counts `b` and `c`.

 # Safety
 `out` must be writable.
 */
enum JsegStatus jseg_mcnemar_midp(uint64_t b, uint64_t c, double *out);

/*
 Word-level precision, recall and F1 of two corpora given as text in the
 `word_POS` format. `joint` non-zero also requires matching tags.

 # Safety
 `gold` and `pred` must be NUL-terminated; `p`, `r`, `f` writable.
 */
enum JsegStatus jseg_word_f1(const char *gold,
                             const char *pred,
                             int32_t joint,
                             double *p,
                             double *r,
                             double *f);

/*
 Library version as a static string.
 */
const char *jseg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINTSEG_H */
