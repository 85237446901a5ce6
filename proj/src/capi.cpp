#include "pssketch/pssketch.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>

#include "pssketch/harness.hpp"
#include "pssketch/report.hpp"

struct pss_trace {
    pss::WindowedTrace trace;
};

struct pss_detector {
    pss::ExperimentConfig config;
    std::unique_ptr<pss::Detector> detector;
};

struct pss_report {
    pss::ReportSet report;
};

namespace {

thread_local std::string last_error;

pss_status to_status(pss::ErrorCode c) {
    switch (c) {
        case pss::ErrorCode::InvalidArgument: return PSS_ERR_INVALID_ARGUMENT;
        case pss::ErrorCode::Io: return PSS_ERR_IO;
        case pss::ErrorCode::Config: return PSS_ERR_CONFIG;
        case pss::ErrorCode::Internal: return PSS_ERR_INTERNAL;
    }
    return PSS_ERR_INTERNAL;
}

template <class F>
pss_status guarded(F&& body) {
    try {
        body();
        last_error.clear();
        return PSS_OK;
    } catch (const pss::Error& e) {
        last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return PSS_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return PSS_ERR_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    if (!p) pss::fail(pss::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

pss::ExperimentConfig config_of(const char* json) {
    if (!json || !*json) return {};
    return pss::experiment_from_json(json);
}

void write_file(const char* path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) pss::fail(pss::ErrorCode::Io, std::string("cannot open ") + path + " for writing");
    out << text;
    if (!out) pss::fail(pss::ErrorCode::Io, std::string("write failed: ") + path);
}

}  // namespace

extern "C" {

const char* pss_version(void) { return "0.1.0"; }

const char* pss_last_error(void) { return last_error.c_str(); }

void pss_string_free(char* s) { std::free(s); }

pss_status pss_trace_load(const char* path, uint64_t window_size, pss_trace** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new pss_trace{pss::load_trace(path, window_size)};
    });
}

pss_status pss_trace_save(const pss_trace* trace, const char* path) {
    return guarded([&] {
        need(trace, "trace");
        need(path, "path");
        pss::save_trace(path, trace->trace);
    });
}

pss_status pss_trace_synthesize(const char* model_json, uint64_t seed, pss_trace** out) {
    return guarded([&] {
        need(model_json, "model_json");
        need(out, "out");
        const auto spec = pss::synth_from_json(model_json);
        *out = new pss_trace{pss::generate_trace(spec.model, spec.windows, seed).trace};
    });
}

uint64_t pss_trace_size(const pss_trace* trace) { return trace ? trace->trace.size() : 0; }

uint64_t pss_trace_windows(const pss_trace* trace) { return trace ? trace->trace.window_count() : 0; }

void pss_trace_free(pss_trace* trace) { delete trace; }

pss_status pss_detector_create(const char* config_json, pss_detector** out) {
    return guarded([&] {
        need(out, "out");
        auto config = config_of(config_json);
        auto det = pss::make_detector(config);
        *out = new pss_detector{config, std::move(det)};
    });
}

pss_status pss_detector_new_window(pss_detector* d) {
    return guarded([&] {
        need(d, "detector");
        d->detector->new_window();
    });
}

pss_status pss_detector_insert(pss_detector* d, uint64_t flow) {
    return guarded([&] {
        need(d, "detector");
        d->detector->insert(flow);
    });
}

pss_status pss_detector_feed(pss_detector* d, const pss_trace* trace) {
    return guarded([&] {
        need(d, "detector");
        need(trace, "trace");
        pss::feed(*d->detector, trace->trace);
    });
}

pss_status pss_detector_query(const pss_detector* d, pss_report** out) {
    return guarded([&] {
        need(d, "detector");
        need(out, "out");
        *out = new pss_report{d->detector->query()};
    });
}

uint64_t pss_detector_memory_bits(const pss_detector* d) { return d ? d->detector->memory_bits() : 0; }

pss_status pss_detector_dump(const pss_detector* d, char** out) {
    return guarded([&] {
        need(d, "detector");
        need(out, "out");
        *out = dup(d->detector->dump());
    });
}

void pss_detector_free(pss_detector* d) { delete d; }

size_t pss_report_size(const pss_report* r) { return r ? r->report.flows.size() : 0; }

pss_status pss_report_get(const pss_report* r, size_t index, uint64_t* flow, uint64_t* frequency,
                          uint64_t* persistence, int* is_ps) {
    return guarded([&] {
        need(r, "report");
        if (index >= r->report.flows.size()) pss::fail(pss::ErrorCode::InvalidArgument, "report index out of range");
        const auto& f = r->report.flows[index];
        if (flow) *flow = f.key;
        if (frequency) *frequency = f.stats.frequency;
        if (persistence) *persistence = f.stats.persistence;
        if (is_ps) *is_ps = f.ps ? 1 : 0;
    });
}

void pss_report_free(pss_report* r) { delete r; }

pss_status pss_run(const char* config_json, const pss_trace* trace, char** metrics_json, char** dump_out) {
    return guarded([&] {
        need(trace, "trace");
        need(metrics_json, "metrics_json");
        const auto config = config_of(config_json);
        std::string dump;
        const auto truth = pss::make_truth(trace->trace, config.criterion);
        const auto m = pss::run_experiment(config, trace->trace, truth, dump_out ? &dump : nullptr);
        auto text = pss::metrics_json(config, m);
        char* dumped = dump_out ? dup(dump) : nullptr;
        *metrics_json = dup(text);
        if (dump_out) *dump_out = dumped;
    });
}

pss_status pss_sweep(const char* sweep_json, const pss_trace* trace, unsigned jobs, char** csv_out,
                     char** json_out) {
    return guarded([&] {
        need(sweep_json, "sweep_json");
        need(trace, "trace");
        const auto spec = pss::sweep_from_json(sweep_json);
        const auto configs = pss::expand_grid(spec.base, spec.grid);
        const auto rows = pss::sweep(configs, trace->trace, jobs);
        std::string csv = pss::metrics_csv_header() + "\n";
        for (std::size_t i = 0; i < rows.size(); ++i) csv += pss::metrics_csv_row(configs[i], rows[i]) + "\n";
        const auto js = json_out ? pss::sweep_json(configs, rows) : std::string();
        if (csv_out) *csv_out = dup(csv);
        if (json_out) *json_out = dup(js);
    });
}

pss_status pss_synth(const char* model_json, uint64_t seed, const char* trace_path, const char* sidecar_path) {
    return guarded([&] {
        need(model_json, "model_json");
        need(trace_path, "trace_path");
        const auto spec = pss::synth_from_json(model_json);
        const auto synth = pss::generate_trace(spec.model, spec.windows, seed);
        pss::save_trace(trace_path, synth.trace);
        if (sidecar_path) write_file(sidecar_path, pss::synth_sidecar_json(spec, seed, synth));
    });
}

pss_status pss_theory(const char* params_json, char** report_json, int* all_pass) {
    return guarded([&] {
        need(report_json, "report_json");
        const auto params = params_json && *params_json ? pss::theory_from_json(params_json) : pss::TheoryParams{};
        const auto report = pss::run_theory_checks(params);
        *report_json = dup(report.json);
        if (all_pass) *all_pass = report.pass ? 1 : 0;
    });
}

pss_status pss_dist(const pss_trace* trace, char** persistence_csv, char** density_csv) {
    return guarded([&] {
        need(trace, "trace");
        need(persistence_csv, "persistence_csv");
        need(density_csv, "density_csv");
        const auto r = pss::distribution_report(trace->trace);
        char* p = dup(pss::histogram_csv(r.persistence));
        *density_csv = dup(pss::histogram_csv(r.density));
        *persistence_csv = p;
    });
}

}  // extern "C"
