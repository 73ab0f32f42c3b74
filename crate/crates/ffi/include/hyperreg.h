/* C ABI for the hyperreg library.
 *
 * Conventions:
 *   - Graphs and pattern complexes are opaque handles with explicit _free
 *     functions; everything else crosses the boundary as UTF-8 JSON strings
 *     in the library's interchange format (exact weights as decimal or "a/b"
 *     strings).
 *   - Every fallible function returns a hyperreg_status; HYPERREG_OK is 0.
 *     On failure, hyperreg_last_error() returns a thread-local message,
 *     valid until the next failing call on the same thread.
 *   - Strings returned through char ** are owned by the caller; release
 *     them with hyperreg_string_free. Strings returned as const char *
 *     (version, last_error) must not be freed.
 *   - Library panics never unwind across the boundary; they surface as
 *     HYPERREG_ERR_PANIC.
 *
 * This header is maintained by hand and checked against the exported
 * symbols by the crate's test suite.
 */

#ifndef HYPERREG_H
#define HYPERREG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hyperreg_status {
  HYPERREG_OK = 0,
  HYPERREG_ERR_DOMAIN = 1, /* invalid arguments or graph shapes */
  HYPERREG_ERR_PARSE = 2,  /* malformed JSON, weights or parameters */
  HYPERREG_ERR_BUDGET = 3, /* operation-count budget exceeded */
  HYPERREG_ERR_NULL = 4,   /* a required pointer was null */
  HYPERREG_ERR_UTF8 = 5,   /* a string argument was not valid UTF-8 */
  HYPERREG_ERR_PANIC = 6   /* internal panic, caught at the boundary */
} hyperreg_status;

/* A weighted partite graph with exact rational weights. */
typedef struct HyperregGraph HyperregGraph;

/* A partite pattern complex (downward-closed edge family). */
typedef struct HyperregComplex HyperregComplex;

/* Version string of the library; a static, do not free. */
const char *hyperreg_version(void);

/* Message of the last failure on this thread, or NULL; do not free. */
const char *hyperreg_last_error(void);

/* Releases a string returned through a char ** out-parameter. */
void hyperreg_string_free(char *s);

/* -- Handles ------------------------------------------------------------- */

hyperreg_status hyperreg_graph_from_json(const char *json,
                                         HyperregGraph **out);

hyperreg_status hyperreg_graph_to_json(const HyperregGraph *graph,
                                       char **out_json);

void hyperreg_graph_free(HyperregGraph *graph);

hyperreg_status hyperreg_complex_from_json(const char *json,
                                           HyperregComplex **out);

void hyperreg_complex_free(HyperregComplex *complex);

/* Symmetric k-uniform random hypergraph on k clone parts of n vertices:
 * each k-subset of {0,...,n-1} is an edge with probability p, independently,
 * determined by the seed. */
hyperreg_status hyperreg_random_graph(size_t k, size_t n, double p,
                                      uint64_t seed, HyperregGraph **out);

/* -- Counting ------------------------------------------------------------ */

/* Exact homomorphism weight of the pattern in the graph, as a rational
 * string. budget caps the elementary operations; 0 means the default. */
hyperreg_status hyperreg_count(const HyperregGraph *graph,
                               const HyperregComplex *complex,
                               uint64_t budget, char **out_value);

/* Monte Carlo homomorphism weight: unbiased estimate plus the standard
 * error of the mean. Deterministic for a fixed seed. */
hyperreg_status hyperreg_count_estimate(const HyperregGraph *graph,
                                        const HyperregComplex *complex,
                                        uint64_t samples, uint64_t seed,
                                        double *out_value,
                                        double *out_stderr);

/* -- Verdicts (JSON reports out) ------------------------------------------ */

/* Octahedron regularity verdict of graph against reference at tolerance
 * eps. d is the density to test at, or NULL for the measured one; eps and
 * d parse as rational strings ("1/10" or "0.1"). */
hyperreg_status hyperreg_regcheck(const HyperregGraph *graph,
                                  const HyperregGraph *reference,
                                  const char *eps, const char *d,
                                  char **out_json);

/* Worst multiplicative defect of the octahedron doubling inequality. */
hyperreg_status hyperreg_minimality(const HyperregGraph *graph,
                                    char **out_json);

/* Scans the first part's links for regularity at target density d*dprime
 * with tolerance eps_out. */
hyperreg_status hyperreg_inherit_scan(const HyperregGraph *graph,
                                      const HyperregGraph *reference,
                                      const char *eps_out, const char *d,
                                      const char *dprime, char **out_json);

/* Exact hereditary-counting verdict on a tiny instance (at most 4 parts of
 * at most 5 vertices). density_json is a density graph in the interchange
 * format; eta parses as a rational string. */
hyperreg_status hyperreg_thc_full(const HyperregGraph *reference,
                                  const char *density_json, const char *eta,
                                  size_t cstar, char **out_json);

/* -- Candidate stacks (interchange JSON in, JSON reports out) ------------- */

/* Compares a stack's level count against its density prediction. budget
 * caps the elementary operations; 0 means the default. */
hyperreg_status hyperreg_gpe_count(const char *stack_json,
                                   const char *ensemble_json, size_t level,
                                   uint64_t budget, char **out_json);

/* Greedy vertex-by-vertex embedding over the stack. mode: 0 = full
 * hereditary check, 1 = counting-hypothesis check, 2 = assume the
 * hypothesis. Nonzero exhaustive also compares the exact remaining count
 * against the promised lower bound. */
hyperreg_status hyperreg_greedy_embed(const char *stack_json,
                                      const char *ensemble_json,
                                      uint64_t seed, int32_t exhaustive,
                                      int32_t mode, char **out_json);

#ifdef __cplusplus
}
#endif

#endif /* HYPERREG_H */
