/* trafficprint — encrypted-traffic fingerprinting and occupation profiling.
 *
 * C API for the shared library. All functions return tp_status; on failure
 * tp_last_error() holds a human-readable message for the calling thread.
 * Handles are opaque and must be released with the matching *_free().
 * Handles are not synchronized: use one handle per thread (tp_model_read can
 * clone a saved model for each worker).
 */
#ifndef TRAFFICPRINT_H
#define TRAFFICPRINT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TP_API __declspec(dllexport)
#else
#define TP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tp_status {
    TP_OK = 0,
    TP_E_INVALID = 1,      /* bad argument, config, or mismatched inputs */
    TP_E_PARSE = 2,        /* malformed capture: bad magic, truncated record, link type */
    TP_E_SCHEMA = 3,       /* input file violates its documented schema */
    TP_E_ORDER = 4,        /* packets out of time order */
    TP_E_IO = 5,           /* file not readable/writable */
    TP_E_VERSION = 6,      /* container format version mismatch */
    TP_E_CORRUPT = 7,      /* digest/shape mismatch or truncated container */
    TP_E_SHAPE = 8,        /* tensor shape error (pools exhaust a dimension, width mismatch) */
    TP_E_DEGENERATE = 9,   /* zero-weight network or degenerate matrix */
    TP_E_DIVERGENCE = 10,  /* training loss became non-finite */
    TP_E_INSUFFICIENT = 11,/* not enough samples per class / agents in support */
    TP_E_EMPTY = 12,       /* empty trace, profile, or rank list */
    TP_E_INTERNAL = 13
} tp_status;

TP_API const char* tp_version(void);
TP_API const char* tp_status_name(tp_status s);
/* Message for the most recent failing call on this thread ("" if none). */
TP_API const char* tp_last_error(void);

typedef struct tp_traces tp_traces;
typedef struct tp_dataset tp_dataset;
typedef struct tp_model tp_model;
typedef struct tp_network tp_network;
typedef struct tp_rmatrix tp_rmatrix;

/* ---------------------------------------------------------------- ingest */

typedef struct tp_ingest_options {
    const char* client_addrs;   /* comma-separated IPs identifying the user side */
    const char* provider_addrs; /* comma-separated IPs or CIDR prefixes of the vendor */
    const char* scope;          /* "primary" | "mixed" */
    double session_gap;         /* seconds of silence that closes a session */
    int64_t min_payload;        /* drop transport segments with payload < this (1 drops pure ACKs) */
    const char* label;          /* optional label attached to every assembled trace (NULL: none) */
} tp_ingest_options;

TP_API tp_ingest_options tp_ingest_options_default(void);

TP_API tp_status tp_traces_from_pcap_file(const char* path, const tp_ingest_options* opt,
                                          tp_traces** out);
TP_API tp_status tp_traces_from_pcap_buffer(const uint8_t* bytes, size_t len,
                                            const tp_ingest_options* opt,
                                            const char* id_prefix, tp_traces** out);
/* Canonical trace JSONL (one object per line, packets re-based and sorted). */
TP_API tp_status tp_traces_read(const char* path, tp_traces** out);
TP_API tp_status tp_traces_write(const tp_traces* traces, const char* path);
TP_API tp_status tp_traces_merge(tp_traces* dst, const tp_traces* src);
TP_API size_t    tp_traces_count(const tp_traces* traces);
TP_API void      tp_traces_free(tp_traces* traces);

/* -------------------------------------------------------------- features */

typedef struct tp_extract_options {
    int32_t windows;        /* W */
    const char* mode;       /* "uniform" | "fixed-gap" */
    double gap;             /* seconds per window in fixed-gap mode */
    const char* normalize;  /* "none" | "log1p" */
    double clip_counts;     /* per-cell cap for counts; < 0 disables */
    double clip_bytes;      /* per-cell cap for bytes;  < 0 disables */
} tp_extract_options;

TP_API tp_extract_options tp_extract_options_default(void);

/* Builds a labeled dataset of traffic matrices. Unlabeled or empty traces are
 * collected as per-trace failures (count reported via n_failures), not fatal. */
TP_API tp_status tp_dataset_extract(const tp_traces* traces, const tp_extract_options* opt,
                                    tp_dataset** out, size_t* n_failures);
TP_API tp_status tp_dataset_read(const char* path, tp_dataset** out);
TP_API tp_status tp_dataset_write(const tp_dataset* ds, const char* path);
TP_API size_t    tp_dataset_count(const tp_dataset* ds);
TP_API int32_t   tp_dataset_num_classes(const tp_dataset* ds);
TP_API void      tp_dataset_free(tp_dataset* ds);

/* ------------------------------------------------------------ classifier */

typedef struct tp_train_options {
    int32_t epochs;
    int32_t batch_size;
    double learning_rate;
    const char* optimizer;       /* "adam" | "sgd_momentum" */
    uint64_t seed;
    double validation_fraction;  /* carved out of the training data, stratified */
    const char* label_kind;      /* recorded in the model header, e.g. "behavior"/"agent" */
    double early_stop_train_acc;  /* stop once train accuracy reaches this; > 1 disables */
    double early_stop_train_loss; /* ... and train loss is at or below this */
} tp_train_options;

TP_API tp_train_options tp_train_options_default(void);

TP_API tp_status tp_model_train(const tp_dataset* ds, const tp_train_options* opt,
                                const char* history_csv, tp_model** out);
TP_API tp_status tp_model_save(const tp_model* m, const char* path);
TP_API tp_status tp_model_read(const char* path, tp_model** out);
/* open_world_threshold < 0 selects the closed-world rule (plain argmax).
 * embeddings_csv may be NULL. Traces are featurized with the extraction
 * config recorded in the model. */
TP_API tp_status tp_model_classify_traces(tp_model* m, const tp_traces* traces,
                                          double open_world_threshold,
                                          const char* preds_csv, const char* embeddings_csv);
TP_API tp_status tp_model_classify_dataset(tp_model* m, const tp_dataset* ds,
                                           double open_world_threshold,
                                           const char* preds_csv, const char* embeddings_csv);
TP_API void      tp_model_free(tp_model* m);

/* ------------------------------------------------------------ evaluation */

/* Repeated stratified random splits (e.g. ratios "8:1:1"), one train/eval per
 * repeat, aggregated report written as CSV. macro_f1_mean may be NULL. */
TP_API tp_status tp_evaluate(const tp_dataset* ds, int32_t repeats, const char* ratios,
                             const tp_train_options* opt, uint64_t seed,
                             const char* report_csv, double* macro_f1_mean);

/* ---------------------------------------------------- occupation network */

TP_API tp_status tp_network_build(const char* occupations_csv, const char* tasks_csv,
                                  const char* dwa_links_csv, tp_network** out);
TP_API tp_status tp_network_detect_communities(tp_network* net, uint64_t seed,
                                               double resolution, int32_t* k_out, double* q_out);
TP_API tp_status tp_network_set_partition(tp_network* net, const char* partition_csv,
                                          int32_t* k_out);
TP_API tp_status tp_network_read(const char* path, tp_network** out);
TP_API tp_status tp_network_write(const tp_network* net, const char* path);
TP_API tp_status tp_network_modularity(const tp_network* net, double* q_out);
TP_API size_t    tp_network_size(const tp_network* net);
TP_API void      tp_network_free(tp_network* net);

/* --------------------------------------------------- correlation matrix */

TP_API tp_status tp_rmatrix_correlate(const tp_network* net, const char* agents_dwa_csv,
                                      tp_rmatrix** out);
TP_API tp_status tp_rmatrix_write(const tp_rmatrix* rm, const char* csv_path);
TP_API tp_status tp_rmatrix_read(const char* csv_path, tp_rmatrix** out);
TP_API void      tp_rmatrix_free(tp_rmatrix* rm);

/* Scores ranked agent lists against the correlation matrix (EWMA with decay
 * alpha), optionally perturbing each list with position-swap noise p first.
 * Writes a per-user report; topk_acc_out (may be NULL) receives the top-K
 * accuracy over users that carry a true community, or -1 if none do. */
TP_API tp_status tp_profile_ranks(const tp_rmatrix* rm, const char* ranks_csv, double alpha,
                                  double noise_p, uint64_t seed, int32_t topk,
                                  const char* report_csv, double* topk_acc_out);

/* ------------------------------------------------------------ simulation */

TP_API tp_status tp_simulate_traffic(const char* archetypes_json, int32_t per_class,
                                     uint64_t seed, const char* label_kind,
                                     tp_traces** out);
/* Ranked virtual users with planted community ground truth, written as CSV
 * (user_id,true_community,agents). list_length <= 0 ranks every agent. */
TP_API tp_status tp_simulate_users(const tp_network* net, const tp_rmatrix* rm,
                                   int32_t count, int32_t list_length, uint64_t seed,
                                   const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* TRAFFICPRINT_H */
