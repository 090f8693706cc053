#ifndef QUANTBEAM_H
#define QUANTBEAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every C-ABI call.
 */
typedef enum {
  QbStatus_Ok = 0,
  /**
   * A pointer was null or an argument value was rejected.
   */
  QbStatus_InvalidArgument = 1,
  /**
   * File could not be read or written.
   */
  QbStatus_Io = 2,
  /**
   * A file had the wrong format.
   */
  QbStatus_BadInput = 3,
  /**
   * A token or id fell outside the vocabulary.
   */
  QbStatus_Vocabulary = 4,
  /**
   * Internal evaluation failure.
   */
  QbStatus_Internal = 5,
  /**
   * A panic was caught at the boundary.
   */
  QbStatus_Panic = 6,
} QbStatus;

/**
 * Opaque translator handle.
 */
typedef struct QbTranslator QbTranslator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qb_version(void);

/**
 * Message of the last failing call on this thread.
 */
const char *qb_last_error(void);

/**
 * Load a model and build a translator.
 *
 * `precision` is one of `float32`, `int16`, `int8`, `autotune`. `lex_path`
 * and `freq_path` may both be null to decode without a shortlist. On
 * success `*out` owns the handle; free it with [`qb_translator_free`].
 *
 * # Safety
 * Path and precision pointers must be NUL-terminated strings or null where
 * documented; `out` must be a valid pointer.
 */
QbStatus qb_translator_new(const char *model_path,
                           const char *config_path,
                           const char *vocab_path,
                           const char *precision,
                           int beam,
                           int batch_words,
                           const char *lex_path,
                           const char *freq_path,
                           QbTranslator **out);

/**
 * Translate one whitespace-tokenized line. `*out` receives the translation
 * (possibly empty for an empty line); free it with [`qb_string_free`].
 *
 * # Safety
 * `translator` must come from [`qb_translator_new`] and not be freed;
 * `line` must be a NUL-terminated string; `out` must be valid.
 */
QbStatus qb_translate_line(QbTranslator *translator, const char *line, char **out);

/**
 * Kernel-counter summary of everything this translator executed so far.
 *
 * # Safety
 * `translator` must be a live handle; `out` must be valid.
 */
QbStatus qb_translator_counters(const QbTranslator *translator, char **out);

/**
 * Release a translator handle. Null is ignored.
 *
 * # Safety
 * `translator` must come from [`qb_translator_new`] and must not be used
 * afterwards.
 */
void qb_translator_free(QbTranslator *translator);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from a `qb_*` out-parameter and must not be used afterwards.
 */
void qb_string_free(char *s);

/**
 * Source tokens translated per US dollar:
 * `tokens / seconds * 3600 / usd_per_hour`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
QbStatus qb_cost_effectiveness(uint64_t tokens, double seconds, double usd_per_hour, double *out);

/**
 * Sentence BLEU of two whitespace-tokenized lines, in `[0, 1]`.
 *
 * # Safety
 * `hypothesis` and `reference` must be NUL-terminated strings; `out` must
 * be valid.
 */
QbStatus qb_sentence_bleu(const char *hypothesis, const char *reference, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QUANTBEAM_H */
