#ifndef SDOH_PROBE_H
#define SDOH_PROBE_H

/* Generated by cbindgen. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ProbeStatus {
  PROBE_STATUS_OK = 0,
  PROBE_STATUS_NULL_POINTER = 1,
  PROBE_STATUS_INVALID_ARGUMENT = 2,
  PROBE_STATUS_IO = 3,
  PROBE_STATUS_PARSE = 4,
  PROBE_STATUS_OUT_OF_RANGE = 5,
  PROBE_STATUS_PANIC = 99,
} ProbeStatus;

typedef enum ProbeOddsRatioKind {
  PROBE_ODDS_RATIO_KIND_FINITE = 0,
  PROBE_ODDS_RATIO_KIND_INFINITE = 1,
  /**
   * 0/0; `odds_ratio` is reported as 0.
   */
  PROBE_ODDS_RATIO_KIND_UNDEFINED = 2,
} ProbeOddsRatioKind;

typedef struct ProbeCorpus ProbeCorpus;

typedef struct ProbeJournal ProbeJournal;

typedef struct ProbeLexicon ProbeLexicon;

typedef struct ProbeFisherResult {
  double odds_ratio;
  enum ProbeOddsRatioKind odds_ratio_kind;
  double p;
  double neg_log10_p;
  bool degenerate_margin;
} ProbeFisherResult;

/**
 * -1 female (1-3), 0 neither (4), 1 male (5-7).
 */
typedef int32_t ProbeBinarized;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Owned by the
 * library.
 */
const char *probe_last_error_message(void);

void probe_string_free(char *s);

/**
 * Fisher's exact test on [[a, b], [c, d]]; one-tailed (greater) unless
 * `two_sided`.
 */
enum ProbeStatus probe_fisher(uint64_t a,
                              uint64_t b,
                              uint64_t c,
                              uint64_t d,
                              bool two_sided,
                              struct ProbeFisherResult *out);

/**
 * Bias score of `len` Likert values in 1..=7.
 */
enum ProbeStatus probe_bias_score(const uint8_t *values, uintptr_t len, double *out);

enum ProbeStatus probe_binarize(uint8_t value, ProbeBinarized *out);

/**
 * Parse a completion. Writes 1..=7, or 0 for a refusal.
 */
enum ProbeStatus probe_parse_prediction(const char *completion, uint8_t *out);

/**
 * The bundled lexicon when `path` is NULL, otherwise the TOML file at
 * `path`.
 */
enum ProbeStatus probe_lexicon_load(const char *path, struct ProbeLexicon **out);

void probe_lexicon_free(struct ProbeLexicon *lex);

enum ProbeStatus probe_corpus_load(const char *path, struct ProbeCorpus **out);

enum ProbeStatus probe_corpus_len(const struct ProbeCorpus *corpus, uintptr_t *out);

/**
 * Neutralize every record. Records that fail or still leak markers are
 * dropped and counted in `rejected`.
 */
enum ProbeStatus probe_corpus_neutralize(const struct ProbeCorpus *corpus,
                                         const struct ProbeLexicon *lexicon,
                                         struct ProbeCorpus **out,
                                         uintptr_t *rejected);

/**
 * Render record `index` in `format` (`full`, `filtered`, `extracted`,
 * `neutralized`). The string must be released with `probe_string_free`.
 */
enum ProbeStatus probe_corpus_render(const struct ProbeCorpus *corpus,
                                     uintptr_t index,
                                     const char *format,
                                     char **out);

/**
 * Record id at `index`, to be released with `probe_string_free`.
 */
enum ProbeStatus probe_corpus_record_id(const struct ProbeCorpus *corpus,
                                        uintptr_t index,
                                        char **out);

void probe_corpus_free(struct ProbeCorpus *corpus);

/**
 * Open (or create) a campaign journal.
 */
enum ProbeStatus probe_journal_open(const char *path, struct ProbeJournal **out);

enum ProbeStatus probe_journal_len(const struct ProbeJournal *journal, uintptr_t *out);

/**
 * Bias score of one subject over every journaled prediction, refusals
 * excluded. `refusals` receives the refusal count.
 */
enum ProbeStatus probe_journal_bias_score(const struct ProbeJournal *journal,
                                          const char *subject,
                                          double *out,
                                          uintptr_t *refusals);

void probe_journal_free(struct ProbeJournal *journal);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDOH_PROBE_H */
