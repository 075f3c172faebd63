/* C interface for the phcirc circuit analysis and simulation library.
 *
 * Conventions:
 *  - every function returns a PhcStatus; results are written through out
 *    pointers only on PHC_OK;
 *  - strings returned through out pointers are owned by the caller and must
 *    be released with phc_string_free;
 *  - on failure, phc_last_error() returns a thread-local message valid
 *    until the next failing call on the same thread.
 */

#ifndef PHCIRC_H
#define PHCIRC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes, aligned with the phcirc CLI exit codes. */
typedef enum PhcStatus {
  PHC_OK = 0,
  /* netlist parse error or well-posedness failure (voltage-source cycle,
     current-source cutset, disconnected graph) */
  PHC_INPUT = 2,
  /* structurally unamenable, including a proposed non-normal tree */
  PHC_UNAMENABLE = 3,
  /* invalid argument: null pointer, non-UTF-8 string, bad flag combination */
  PHC_USAGE = 64,
  /* internal failure: solver divergence, nonlinear circuit in an LTI path */
  PHC_INTERNAL = 70
} PhcStatus;

/* Opaque handle to a parsed, validated circuit. */
typedef struct PhcCircuit PhcCircuit;

/* Thread-local message describing the last failure ("" when none). */
const char *phc_last_error(void);

/* Parse and validate a netlist (UTF-8, `edge <name> <kind> <from> <to>
 * <value>` lines). On PHC_OK, *out receives a handle to free with
 * phc_circuit_free. */
PhcStatus phc_circuit_parse(const char *netlist, PhcCircuit **out);

void phc_circuit_free(PhcCircuit *c);

/* Structural analysis report as JSON with sorted keys: well-posedness,
 * normal tree, class counts and ranks, the Kron matrix, the signature
 * matrix (null = variable absent), both offset flavors, degrees of freedom,
 * structural index and the amenability verdict.
 *
 * model: 1 (implicit dissipator relation) or 2 (mixed form).
 * tree_names: comma-separated element names proposing a tree, or NULL for
 * the built-in Kruskal scan.
 *
 * Returns PHC_UNAMENABLE (with the report still written) when the system
 * Jacobian is singular at the consistent point. */
PhcStatus phc_analyze_json(const PhcCircuit *c, int model,
                           const char *tree_names, char **out_json);

/* Integrate the circuit DAE from t0 to t1 and return the trajectory CSV
 * (header: t, state columns, d_ derivative columns, source outputs, H,
 * balance; 17 significant digits).
 *
 * h > 0 selects a fixed step; otherwise rtol/atol drive the adaptive
 * controller (non-positive values default to 1e-6 and 1e-9). order is the
 * BDF order (1 or 2), model 1 or 2, guess seeds the consistent-point
 * solve. */
PhcStatus phc_simulate_csv(const PhcCircuit *c, double t0, double t1,
                           double h, double rtol, double atol, int order,
                           int model, double guess, char **out_csv);

/* Finite eigenvalues of a linear time-invariant circuit as JSON:
 * {"dof": n, "degree": n, "eigenvalues": [{"im": ..., "re": ...}, ...]}. */
PhcStatus phc_eig_json(const PhcCircuit *c, char **out_json);

/* Release a string returned by this library. NULL is a no-op. */
void phc_string_free(char *s);

#ifdef __cplusplus
}
#endif

#endif /* PHCIRC_H */
