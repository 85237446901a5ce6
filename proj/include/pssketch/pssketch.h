#ifndef PSSKETCH_PSSKETCH_H
#define PSSKETCH_PSSKETCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(PSS_BUILDING_LIBRARY)
#    define PSS_API __declspec(dllexport)
#  else
#    define PSS_API __declspec(dllimport)
#  endif
#else
#  define PSS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pss_status {
    PSS_OK = 0,
    PSS_ERR_INVALID_ARGUMENT = 1,
    PSS_ERR_IO = 2,
    PSS_ERR_CONFIG = 3,
    PSS_ERR_INTERNAL = 4
} pss_status;

typedef struct pss_trace pss_trace;
typedef struct pss_detector pss_detector;
typedef struct pss_report pss_report;

PSS_API const char* pss_version(void);

/* Message of the last failed call on this thread; empty after a success. */
PSS_API const char* pss_last_error(void);

/* Frees strings returned through char** out-parameters. */
PSS_API void pss_string_free(char* s);

/* ---- traces ---- */

/* window_size is used only when the file has no window column. */
PSS_API pss_status pss_trace_load(const char* path, uint64_t window_size, pss_trace** out);
PSS_API pss_status pss_trace_save(const pss_trace* trace, const char* path);
/* Generates a trace from a population model JSON (or a synth sidecar). */
PSS_API pss_status pss_trace_synthesize(const char* model_json, uint64_t seed, pss_trace** out);
PSS_API uint64_t pss_trace_size(const pss_trace* trace);
PSS_API uint64_t pss_trace_windows(const pss_trace* trace);
PSS_API void pss_trace_free(pss_trace* trace);

/* ---- detectors ---- */

/* config_json is an experiment config object; NULL or "" takes defaults. */
PSS_API pss_status pss_detector_create(const char* config_json, pss_detector** out);
PSS_API pss_status pss_detector_new_window(pss_detector* d);
PSS_API pss_status pss_detector_insert(pss_detector* d, uint64_t flow);
PSS_API pss_status pss_detector_feed(pss_detector* d, const pss_trace* trace);
PSS_API pss_status pss_detector_query(const pss_detector* d, pss_report** out);
PSS_API uint64_t pss_detector_memory_bits(const pss_detector* d);
PSS_API pss_status pss_detector_dump(const pss_detector* d, char** out);
PSS_API void pss_detector_free(pss_detector* d);

PSS_API size_t pss_report_size(const pss_report* r);
PSS_API pss_status pss_report_get(const pss_report* r, size_t index, uint64_t* flow, uint64_t* frequency,
                                  uint64_t* persistence, int* is_ps);
PSS_API void pss_report_free(pss_report* r);

/* ---- experiments ---- */

/* One cell: metrics JSON, and the detector dump when dump_out is non-NULL. */
PSS_API pss_status pss_run(const char* config_json, const pss_trace* trace, char** metrics_json, char** dump_out);

/* Grid sweep: {"base": {...}, "detectors": [...], "memory_kb": [...], "p0": [...], "d0": [...],
   "bucket_width": [...]}. Either output may be NULL. */
PSS_API pss_status pss_sweep(const char* sweep_json, const pss_trace* trace, unsigned jobs, char** csv_out,
                             char** json_out);

/* Writes the trace file and the ground-truth sidecar JSON. */
PSS_API pss_status pss_synth(const char* model_json, uint64_t seed, const char* trace_path,
                             const char* sidecar_path);

/* Poisson-model checks; *all_pass is 1 when every check passed. */
PSS_API pss_status pss_theory(const char* params_json, char** report_json, int* all_pass);

/* Persistence and density histograms as bin_low,bin_high,count CSV. */
PSS_API pss_status pss_dist(const pss_trace* trace, char** persistence_csv, char** density_csv);

#ifdef __cplusplus
}
#endif

#endif
