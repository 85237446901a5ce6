// pssketch_cli: run, sweep, synth, theory and dist subcommands over the C API.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pssketch/pssketch.h"

using nlohmann::json;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kIo = 2, kConfig = 3, kInternal = 4 };

int exit_for(pss_status s) {
    switch (s) {
        case PSS_OK: return kOk;
        case PSS_ERR_IO: return kIo;
        case PSS_ERR_CONFIG:
        case PSS_ERR_INVALID_ARGUMENT: return kConfig;
        default: return kInternal;
    }
}

int report(pss_status s) {
    if (s != PSS_OK) std::cerr << "error: " << pss_last_error() << '\n';
    return exit_for(s);
}

struct CliError {
    int code;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError{kIo, "cannot open " + path};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Replaces `--config file.json` with the flags it holds. A flat object maps
/// onto the subcommand's long flags: arrays become repeated values, true a bare
/// flag, false and null nothing. Keys also given on the command line are
/// skipped so those flags win. Returns the arguments after argv[0].
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> kept;
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            kept.push_back(args[i]);
        }
    }
    if (!path || kept.empty()) return args;

    json j;
    try {
        j = json::parse(read_file(*path));
    } catch (const json::exception& e) {
        throw CliError{kConfig, "--config: invalid JSON: " + std::string(e.what())};
    }
    if (!j.is_object()) throw CliError{kConfig, "--config: top level must be an object"};

    auto given = [&](const std::string& flag) {
        for (const auto& a : kept) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        }
        return false;
    };
    auto scalar = [](const std::string& key, const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number()) return v.dump();
        throw CliError{kConfig, "--config: value of '" + key + "' must be a string, number or array of them"};
    };
    std::vector<std::string> from_file;
    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        if (given(flag) || value.is_null() || (value.is_boolean() && !value.get<bool>())) continue;
        if (value.is_boolean()) {
            from_file.push_back(flag);
        } else if (value.is_array()) {
            for (const auto& v : value) {
                from_file.push_back(flag);
                from_file.push_back(scalar(key, v));
            }
        } else {
            from_file.push_back(flag);
            from_file.push_back(scalar(key, value));
        }
    }
    // the subcommand name comes first
    kept.insert(kept.begin() + 1, from_file.begin(), from_file.end());
    return kept;
}

// ---------------------------------------------------------------------------

std::string fmt_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Expands "a", "a:b:step" and comma lists (already split by CLI11).
std::vector<double> expand_range(const std::vector<std::string>& specs, const char* flag) {
    std::vector<double> out;
    for (const auto& s : specs) {
        try {
            const auto c1 = s.find(':');
            if (c1 == std::string::npos) {
                std::size_t used = 0;
                out.push_back(std::stod(s, &used));
                if (used != s.size()) throw std::invalid_argument(s);
                continue;
            }
            const auto c2 = s.find(':', c1 + 1);
            if (c2 == std::string::npos) throw std::invalid_argument(s);
            const double lo = std::stod(s.substr(0, c1));
            const double hi = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
            const double step = std::stod(s.substr(c2 + 1));
            if (!(step > 0) || hi < lo) throw std::invalid_argument(s);
            const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
            for (long k = 0; k <= n; ++k) out.push_back(std::stod(fmt_number(lo + static_cast<double>(k) * step)));
        } catch (const std::logic_error&) {
            throw CliError{kConfig, std::string("invalid value '") + s + "' for " + flag};
        }
    }
    return out;
}

std::vector<std::uint64_t> expand_uint_range(const std::vector<std::string>& specs, const char* flag) {
    std::vector<std::uint64_t> out;
    for (double v : expand_range(specs, flag)) {
        if (v < 0 || v != std::floor(v)) throw CliError{kConfig, std::string(flag) + " expects integers"};
        out.push_back(static_cast<std::uint64_t>(v));
    }
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError{kIo, "cannot open " + path + " for writing"};
    out << text;
    if (!out) throw CliError{kIo, "write failed: " + path};
}

struct Owned {
    char* p = nullptr;
    ~Owned() { pss_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

struct TraceHandle {
    pss_trace* t = nullptr;
    ~TraceHandle() { pss_trace_free(t); }
};

void check(pss_status s) {
    if (s != PSS_OK) throw CliError{exit_for(s), pss_last_error()};
}

// ---------------------------------------------------------------------------

struct ExperimentFlags {
    double memory_kb = 100;
    std::uint64_t p0 = 50;
    double d0 = 1.2;
    std::size_t bucket_width = 32;
    std::uint64_t seed = 1;
    unsigned repeats = 1;
    bool no_throughput = false;
    double protection_fraction = 0.1;
    double filter_fraction = 0.25;
    std::size_t pisketch_cells = 8;
    std::uint32_t pisketch_l = 8;
    std::optional<std::uint32_t> weight_threshold;
    unsigned fp_bits = 16, freq_bits = 8, pers_bits = 6, freq_of_bits = 8, pers_of_bits = 8;
    std::uint32_t pers_of_threshold = 0;

    std::string trace;
    std::string synthetic;
    std::uint64_t window_size = 0;
};

void add_trace_flags(CLI::App* sub, ExperimentFlags& f, bool allow_synthetic) {
    auto* trace = sub->add_option("--trace", f.trace, "Trace file (flow_id[,window] per line)");
    if (allow_synthetic) {
        auto* syn = sub->add_option("--synthetic", f.synthetic, "Population model JSON (or synth sidecar)");
        trace->excludes(syn);
        syn->excludes(trace);
    } else {
        trace->required();
    }
    sub->add_option("--window-size", f.window_size, "Packets per window for traces without a window column");
}

void add_experiment_flags(CLI::App* sub, ExperimentFlags& f, bool scalar_grid) {
    if (scalar_grid) {
        sub->add_option("--memory-kb", f.memory_kb, "Memory budget in KB")->capture_default_str();
        sub->add_option("--p0", f.p0, "Persistence threshold")->capture_default_str();
        sub->add_option("--d0", f.d0, "Density threshold")->capture_default_str();
        sub->add_option("--bucket-width", f.bucket_width, "Entries per Competition Layer bucket (Y)")
            ->capture_default_str();
    }
    sub->add_option("--seed", f.seed, "Master seed")->capture_default_str();
    sub->add_option("--repeats", f.repeats, "Timed throughput passes")->check(CLI::PositiveNumber);
    sub->add_flag("--no-throughput", f.no_throughput, "Skip throughput measurement");
    sub->add_option("--protection-fraction", f.protection_fraction, "Share of PSSketch memory for the PL");
    sub->add_option("--filter-fraction", f.filter_fraction, "Share of PISketch memory for its filter");
    sub->add_option("--pisketch-cells", f.pisketch_cells, "Cells per PISketch bucket");
    sub->add_option("--pisketch-L", f.pisketch_l, "PISketch weight increment");
    sub->add_option("--weight-threshold", f.weight_threshold, "PISketch report threshold (default: best F1)");
    sub->add_option("--fp-bits", f.fp_bits, "Fingerprint bits");
    sub->add_option("--freq-bits", f.freq_bits, "CL frequency bits");
    sub->add_option("--pers-bits", f.pers_bits, "CL persistence bits");
    sub->add_option("--freq-overflow-bits", f.freq_of_bits, "PL frequency overflow bits");
    sub->add_option("--pers-overflow-bits", f.pers_of_bits, "PL persistence overflow bits");
    sub->add_option("--pers-overflow-threshold", f.pers_of_threshold, "Persistence overflow threshold (0: 2^pers-bits)");
}

json experiment_json(const ExperimentFlags& f, const std::string& detector) {
    json j = {{"detector", detector},
              {"memory_kb", f.memory_kb},
              {"p0", f.p0},
              {"d0", f.d0},
              {"bucket_width", f.bucket_width},
              {"seed", f.seed},
              {"repeats", f.repeats},
              {"throughput", !f.no_throughput},
              {"protection_fraction", f.protection_fraction},
              {"filter_fraction", f.filter_fraction},
              {"pisketch_cells", f.pisketch_cells},
              {"pisketch_L", f.pisketch_l},
              {"widths",
               {{"fingerprint_bits", f.fp_bits},
                {"freq_bits", f.freq_bits},
                {"pers_bits", f.pers_bits},
                {"freq_overflow_bits", f.freq_of_bits},
                {"pers_overflow_bits", f.pers_of_bits},
                {"pers_overflow_threshold", f.pers_of_threshold}}}};
    if (f.weight_threshold) j["weight_threshold"] = *f.weight_threshold;
    return j;
}

void load_trace(const ExperimentFlags& f, TraceHandle& h) {
    if (!f.trace.empty()) {
        check(pss_trace_load(f.trace.c_str(), f.window_size, &h.t));
    } else if (!f.synthetic.empty()) {
        check(pss_trace_synthesize(read_file(f.synthetic).c_str(), f.seed, &h.t));
    } else {
        throw CliError{kConfig, "one of --trace or --synthetic is required"};
    }
}

/// metrics JSON -> one CSV row under a fixed header
std::string metrics_to_csv(const std::string& metrics) {
    const auto j = json::parse(metrics);
    const auto& c = j["config"];
    const auto& m = j["metrics"];
    std::ostringstream os;
    os << "detector,config_digest,memory_kb,memory_bits,p0,d0,bucket_width,seed,precision,recall,f1,are_f,are_p,"
          "are_mean,reported,reported_ps,truth,true_positives,throughput_pps,note\n";
    auto num = [](const json& v) { return v.is_number_float() ? fmt_number(v.get<double>()) : v.dump(); };
    os << m["detector"].get<std::string>() << ',' << m["config_digest"].get<std::string>() << ','
       << num(c["memory_kb"]) << ',' << m["memory_bits"] << ',' << c["p0"] << ',' << num(c["d0"]) << ','
       << c["bucket_width"] << ',' << c["seed"] << ',' << num(m["precision"]) << ',' << num(m["recall"]) << ','
       << num(m["f1"]) << ',' << num(m["are_f"]) << ',' << num(m["are_p"]) << ',' << num(m["are_mean"]) << ','
       << m["reported"] << ',' << m["reported_ps"] << ',' << m["truth"] << ',' << m["true_positives"] << ','
       << num(m["throughput_pps"]) << ',' << m["note"].get<std::string>() << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------

int cmd_run(const ExperimentFlags& f, const std::string& detector, const std::string& out,
            const std::string& format, const std::string& dump_path) {
    if (detector == "all") throw CliError{kConfig, "run takes a single detector; use sweep for --detector all"};
    TraceHandle trace;
    load_trace(f, trace);
    Owned metrics, dump;
    check(pss_run(experiment_json(f, detector).dump().c_str(), trace.t, &metrics.p,
                  dump_path.empty() ? nullptr : &dump.p));
    write_output(out, format == "csv" ? metrics_to_csv(metrics.str()) : metrics.str());
    if (!dump_path.empty()) write_output(dump_path, dump.str());
    return kOk;
}

struct SweepFlags {
    std::vector<std::string> detectors{"pssketch"};
    std::vector<std::string> memory_kb{"100"};
    std::vector<std::string> p0{"50"};
    std::vector<std::string> d0{"1.2"};
    std::vector<std::string> bucket_width{"32"};
    unsigned jobs = 1;
};

int cmd_sweep(const ExperimentFlags& f, const SweepFlags& s, const std::string& out, const std::string& format) {
    json detectors = json::array();
    for (const auto& d : s.detectors) {
        if (d == "all") {
            for (const char* name : {"pssketch", "exact", "strawman", "pisketch", "pisketch-density"}) {
                detectors.push_back(name);
            }
        } else {
            detectors.push_back(d);
        }
    }
    json spec = {{"base", experiment_json(f, "pssketch")},
                 {"detectors", detectors},
                 {"memory_kb", expand_range(s.memory_kb, "--memory-kb")},
                 {"p0", expand_uint_range(s.p0, "--p0")},
                 {"d0", expand_range(s.d0, "--d0")},
                 {"bucket_width", expand_uint_range(s.bucket_width, "--bucket-width")}};
    TraceHandle trace;
    load_trace(f, trace);
    Owned csv, js;
    const bool want_json = format == "json";
    check(pss_sweep(spec.dump().c_str(), trace.t, s.jobs, want_json ? nullptr : &csv.p, want_json ? &js.p : nullptr));
    write_output(out, want_json ? js.str() : csv.str());
    return kOk;
}

struct SynthFlags {
    std::uint64_t flows = 0;
    double lambda_mean = 0.02;
    double lambda_sd = 0.0;
    std::vector<std::string> planted;
    std::uint64_t windows = 100;
    std::uint64_t seed = 1;
    std::string out;
    std::string sidecar;
};

int cmd_synth(const SynthFlags& f) {
    json planted = json::array();
    for (const auto& p : f.planted) {
        const auto colon = p.find(':');
        try {
            if (colon == std::string::npos) throw std::invalid_argument(p);
            std::size_t used = 0;
            const double lambda = std::stod(p.substr(0, colon));
            const auto count = std::stoull(p.substr(colon + 1), &used);
            if (used != p.size() - colon - 1) throw std::invalid_argument(p);
            planted.push_back({{"lambda", lambda}, {"count", count}});
        } catch (const std::logic_error&) {
            throw CliError{kConfig, "invalid --planted '" + p + "', expected lambda:count"};
        }
    }
    json model = {{"flow_count", f.flows},
                  {"lambda_mean", f.lambda_mean},
                  {"lambda_stddev", f.lambda_sd},
                  {"planted", planted},
                  {"windows", f.windows}};
    const std::string sidecar = f.sidecar.empty() ? f.out + ".truth.json" : f.sidecar;
    check(pss_synth(model.dump().c_str(), f.seed, f.out.c_str(), sidecar.c_str()));
    return kOk;
}

struct TheoryFlags {
    double lambda = 1.0;
    std::uint64_t windows = 100;
    std::uint64_t trials = 10000;
    std::uint64_t ejection_trials = 100000;
    std::uint64_t max_windows = 1000;
    double tolerance = 0.05;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_theory(const TheoryFlags& f) {
    json params = {{"lambda", f.lambda},
                   {"windows", f.windows},
                   {"trials", f.trials},
                   {"ejection_trials", f.ejection_trials},
                   {"max_windows", f.max_windows},
                   {"tolerance", f.tolerance},
                   {"seed", f.seed}};
    Owned text;
    int pass = 0;
    check(pss_theory(params.dump().c_str(), &text.p, &pass));
    write_output(f.out, text.str());
    return pass ? kOk : kCheckFailed;
}

int cmd_dist(const ExperimentFlags& f, const std::string& prefix) {
    TraceHandle trace;
    load_trace(f, trace);
    Owned pers, dens;
    check(pss_dist(trace.t, &pers.p, &dens.p));
    write_output(prefix + "_persistence.csv", pers.str());
    write_output(prefix + "_density.csv", dens.str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persistent-and-sparse flow detection experiments"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", std::string(pss_version()));

    const std::vector<std::string> detector_names{"pssketch", "exact", "strawman", "pisketch", "pisketch-density",
                                                  "all"};
    std::string config_path;  // consumed by expand_config before parsing
    auto attach_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON file of flag values (flags on the command line win)");
    };

    ExperimentFlags run_f;
    std::string run_detector = "pssketch", run_out, run_format = "json", run_dump;
    auto* run = app.add_subcommand("run", "Run one detector over a trace and score it");
    run->add_option("--detector", run_detector, "Detector")->check(CLI::IsMember(detector_names))->capture_default_str();
    add_trace_flags(run, run_f, true);
    add_experiment_flags(run, run_f, true);
    run->add_option("--out", run_out, "Metrics output file (default stdout)");
    run->add_option("--format", run_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    run->add_option("--dump-state", run_dump, "Write the detector's serialized state here");
    attach_config(run);

    ExperimentFlags sweep_f;
    SweepFlags sweep_s;
    std::string sweep_out, sweep_format = "csv";
    auto* sw = app.add_subcommand("sweep", "Score detectors over a parameter grid");
    sw->add_option("--detector", sweep_s.detectors, "Detectors (repeatable, or all)")
        ->check(CLI::IsMember(detector_names))
        ->delimiter(',');
    sw->add_option("--memory-kb", sweep_s.memory_kb, "Memory budgets in KB (list or lo:hi:step)")->delimiter(',');
    sw->add_option("--p0", sweep_s.p0, "Persistence thresholds (list or lo:hi:step)")->delimiter(',');
    sw->add_option("--d0", sweep_s.d0, "Density thresholds (list or lo:hi:step)")->delimiter(',');
    sw->add_option("--bucket-width", sweep_s.bucket_width, "Bucket widths (list or lo:hi:step)")->delimiter(',');
    sw->add_option("--jobs", sweep_s.jobs, "Parallel accuracy cells")->check(CLI::PositiveNumber);
    add_trace_flags(sw, sweep_f, true);
    add_experiment_flags(sw, sweep_f, false);
    sw->add_option("--out", sweep_out, "Output file (default stdout)");
    sw->add_option("--format", sweep_format, "csv or json")->check(CLI::IsMember({"json", "csv"}));
    attach_config(sw);

    SynthFlags synth_f;
    auto* synth = app.add_subcommand("synth", "Generate a Poisson-model trace and its ground truth");
    synth->add_option("--flows", synth_f.flows, "Background flow count");
    synth->add_option("--lambda-mean", synth_f.lambda_mean, "Mean background rate per window");
    synth->add_option("--lambda-sd", synth_f.lambda_sd, "Standard deviation of background rates");
    synth->add_option("--planted", synth_f.planted, "Planted group lambda:count (repeatable)");
    synth->add_option("--windows", synth_f.windows, "Window count");
    synth->add_option("--seed", synth_f.seed, "Seed");
    synth->add_option("--out", synth_f.out, "Trace output file")->required();
    synth->add_option("--sidecar", synth_f.sidecar, "Ground-truth JSON (default <out>.truth.json)");
    attach_config(synth);

    TheoryFlags theory_f;
    auto* theory = app.add_subcommand("theory", "Check the Poisson flow model numerically");
    theory->add_option("--lambda", theory_f.lambda, "Poisson rate per window");
    theory->add_option("--windows", theory_f.windows, "Window count i");
    theory->add_option("--trials", theory_f.trials, "Monte Carlo trials");
    theory->add_option("--ejection-trials", theory_f.ejection_trials, "Ejection experiment trials");
    theory->add_option("--max-windows", theory_f.max_windows, "Largest window count of the convergence ladder");
    theory->add_option("--tolerance", theory_f.tolerance, "Convergence tolerance on the final mean-square error");
    theory->add_option("--seed", theory_f.seed, "Seed");
    theory->add_option("--out", theory_f.out, "Report file (default stdout)");
    attach_config(theory);

    ExperimentFlags dist_f;
    std::string dist_prefix;
    auto* dist = app.add_subcommand("dist", "Persistence and density histograms of a trace");
    add_trace_flags(dist, dist_f, false);
    dist->add_option("--out", dist_prefix, "Output prefix: <out>_persistence.csv, <out>_density.csv")->required();
    attach_config(dist);

    try {
        auto args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << '\n';
        return e.code;
    } catch (const CLI::FileError& e) {
        app.exit(e);
        return kIo;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (run->parsed()) return cmd_run(run_f, run_detector, run_out, run_format, run_dump);
        if (sw->parsed()) return cmd_sweep(sweep_f, sweep_s, sweep_out, sweep_format);
        if (synth->parsed()) return cmd_synth(synth_f);
        if (theory->parsed()) return cmd_theory(theory_f);
        if (dist->parsed()) return cmd_dist(dist_f, dist_prefix);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << '\n';
        return e.code;
    }
    return report(PSS_ERR_INTERNAL);
}
