/* Physics-grounded training pipeline, C interface.
 *
 * All entry points operate on an opaque context holding one experiment
 * config. Functions return PGT_OK on success; on any other status the
 * message from pgt_last_error() stays valid until the next call on the
 * same context. No function keeps pointers into caller memory.
 */
#ifndef PGT_H
#define PGT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct pgt_ctx pgt_ctx;

typedef enum pgt_status {
    PGT_OK = 0,
    PGT_ERR_INVALID_ARG = 1,
    PGT_ERR_IO = 2,
    PGT_ERR_STALE_RUN = 3,
    PGT_ERR_TRAIN = 4,
    PGT_ERR_REMOTE = 5,
    PGT_ERR_INTERNAL = 6
} pgt_status;

const char* pgt_version(void);

/* Context with all-default config. Never returns NULL short of OOM. */
pgt_ctx* pgt_ctx_new(void);
/* Context from a JSON config string; NULL on parse/validation failure
 * (use a fresh default context to retrieve nothing; errors print why
 * via the out parameter when non-NULL, pointing at a static buffer). */
pgt_ctx* pgt_ctx_from_json(const char* json_text, const char** err_out);
pgt_ctx* pgt_ctx_from_file(const char* path, const char** err_out);
void pgt_ctx_free(pgt_ctx* ctx);

pgt_status pgt_set_out_dir(pgt_ctx* ctx, const char* dir);
pgt_status pgt_set_seed(pgt_ctx* ctx, uint64_t seed);
/* mode: "multi_turn" | "single_turn" | "no_phys" */
pgt_status pgt_set_mode(pgt_ctx* ctx, const char* mode);
pgt_status pgt_set_verbose(pgt_ctx* ctx, int verbose);

/* Hex digest of the canonical config; buffer must hold >= 17 bytes. */
pgt_status pgt_config_hash(const pgt_ctx* ctx, char* buf, size_t buflen);

/* Pipeline stages over the context's out_dir. Completed stages are
 * skipped; *skipped_out (optional) is set to 1 in that case. */
pgt_status pgt_run_gen(pgt_ctx* ctx, int* skipped_out);
pgt_status pgt_run_compile(pgt_ctx* ctx, int* skipped_out);
pgt_status pgt_run_train(pgt_ctx* ctx, int* skipped_out);
pgt_status pgt_run_infer(pgt_ctx* ctx, int* skipped_out);
pgt_status pgt_run_eval(pgt_ctx* ctx, int* skipped_out);

/* Three-mode comparison; ok per mode even when some modes fail, but
 * returns non-OK when every mode failed. */
pgt_status pgt_run_ablate(pgt_ctx* ctx);

/* Renders available reports. The returned string lives in the context
 * until the next pgt_run_report or pgt_ctx_free. */
pgt_status pgt_run_report(pgt_ctx* ctx, const char** text_out);

const char* pgt_last_error(const pgt_ctx* ctx);

#ifdef __cplusplus
}
#endif

#endif /* PGT_H */
