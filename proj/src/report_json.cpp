#include "pssketch/report.hpp"

#include <cmath>
#include <initializer_list>

#include <json.hpp>

namespace pss {

using nlohmann::json;

namespace {

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::Config, std::string("invalid ") + what + " JSON: " + e.what());
    }
}

void require_object(const json& j, const char* what) {
    if (!j.is_object()) fail(ErrorCode::Config, std::string(what) + " must be a JSON object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) fail(ErrorCode::Config, std::string("unknown key '") + key + "' in " + what);
    }
}

[[noreturn]] void type_error(const char* key, const char* type) {
    fail(ErrorCode::Config, std::string("key '") + key + "' must be " + type);
}

template <class T>
void read_uint(const json& j, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_unsigned()) type_error(key, "a non-negative integer");
    out = static_cast<T>(it->get<std::uint64_t>());
}

void read_double(const json& j, const char* key, double& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) type_error(key, "a number");
    out = it->get<double>();
}

void read_bool(const json& j, const char* key, bool& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_boolean()) type_error(key, "a boolean");
    out = it->get<bool>();
}

template <class T, class F>
void read_list(const json& j, const char* key, std::vector<T>& out, F&& convert) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_array() || it->empty()) type_error(key, "a non-empty array");
    out.clear();
    for (const auto& v : *it) out.push_back(convert(v));
}

WidthConfig widths_from(const json& j) {
    require_object(j, "widths");
    check_keys(j,
               {"fingerprint_bits", "freq_bits", "pers_bits", "freq_overflow_bits", "pers_overflow_bits",
                "pers_overflow_threshold"},
               "widths");
    WidthConfig w;
    read_uint(j, "fingerprint_bits", w.fingerprint_bits);
    read_uint(j, "freq_bits", w.freq_bits);
    read_uint(j, "pers_bits", w.pers_bits);
    read_uint(j, "freq_overflow_bits", w.freq_overflow_bits);
    read_uint(j, "pers_overflow_bits", w.pers_overflow_bits);
    read_uint(j, "pers_overflow_threshold", w.pers_overflow_threshold);
    return w;
}

json widths_to(const WidthConfig& w) {
    return {{"fingerprint_bits", w.fingerprint_bits},
            {"freq_bits", w.freq_bits},
            {"pers_bits", w.pers_bits},
            {"freq_overflow_bits", w.freq_overflow_bits},
            {"pers_overflow_bits", w.pers_overflow_bits},
            {"pers_overflow_threshold", w.pers_overflow_threshold}};
}

ExperimentConfig experiment_from(const json& j) {
    require_object(j, "experiment config");
    check_keys(j,
               {"detector", "memory_kb", "p0", "d0", "bucket_width", "widths", "seed", "repeats", "throughput",
                "protection_fraction", "filter_fraction", "pisketch_cells", "pisketch_L", "weight_threshold"},
               "experiment config");
    ExperimentConfig c;
    if (auto it = j.find("detector"); it != j.end()) {
        if (!it->is_string()) type_error("detector", "a string");
        c.detector = parse_detector(it->get<std::string>());
    }
    read_double(j, "memory_kb", c.memory_kb);
    read_uint(j, "p0", c.criterion.p0);
    read_double(j, "d0", c.criterion.d0);
    read_uint(j, "bucket_width", c.bucket_width);
    if (auto it = j.find("widths"); it != j.end()) c.widths = widths_from(*it);
    read_uint(j, "seed", c.seed);
    read_uint(j, "repeats", c.repeats);
    read_bool(j, "throughput", c.throughput);
    read_double(j, "protection_fraction", c.protection_fraction);
    read_double(j, "filter_fraction", c.filter_fraction);
    read_uint(j, "pisketch_cells", c.pisketch_cells);
    read_uint(j, "pisketch_L", c.pisketch_L);
    if (auto it = j.find("weight_threshold"); it != j.end() && !it->is_null()) {
        if (!it->is_number_unsigned()) type_error("weight_threshold", "a non-negative integer or null");
        c.weight_threshold = it->get<std::uint32_t>();
    }
    c.validate();
    return c;
}

json experiment_to(const ExperimentConfig& c) {
    json j = {{"detector", to_string(c.detector)},
              {"memory_kb", c.memory_kb},
              {"p0", c.criterion.p0},
              {"d0", c.criterion.d0},
              {"bucket_width", c.bucket_width},
              {"widths", widths_to(c.widths)},
              {"seed", c.seed},
              {"repeats", c.repeats},
              {"throughput", c.throughput},
              {"protection_fraction", c.protection_fraction},
              {"filter_fraction", c.filter_fraction},
              {"pisketch_cells", c.pisketch_cells},
              {"pisketch_L", c.pisketch_L},
              {"weight_threshold", nullptr}};
    if (c.weight_threshold) j["weight_threshold"] = *c.weight_threshold;
    return j;
}

json metrics_to(const MetricsRecord& m) {
    json j = {{"detector", m.detector},
              {"config_digest", m.config_digest},
              {"memory_bits", m.memory_bits},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"are_f", m.are_f},
              {"are_p", m.are_p},
              {"are_mean", m.are_mean},
              {"reported", m.reported},
              {"reported_ps", m.reported_ps},
              {"truth", m.truth},
              {"true_positives", m.true_positives},
              {"throughput_pps", m.throughput_pps},
              {"note", m.note}};
    if (!m.error.empty()) j["error"] = m.error;
    return j;
}

json metadata() {
    return {{"are_population", "all flows reported by the detector"},
            {"are_quantities", "frequency and persistence separately; are_mean is their average"},
            {"precision_empty_report", 0},
            {"recall_empty_truth", "1 if the PS report is empty, else 0"},
            {"throughput", "median packets/s of the insert loop after one warm-up pass"}};
}

PopulationModel model_from(const json& j) {
    require_object(j, "population model");
    check_keys(j, {"flow_count", "lambda_mean", "lambda_stddev", "planted", "windows"}, "population model");
    PopulationModel m;
    read_uint(j, "flow_count", m.flow_count);
    read_double(j, "lambda_mean", m.lambda_mean);
    read_double(j, "lambda_stddev", m.lambda_stddev);
    if (auto it = j.find("planted"); it != j.end()) {
        if (!it->is_array()) type_error("planted", "an array");
        for (const auto& g : *it) {
            require_object(g, "planted group");
            check_keys(g, {"lambda", "count"}, "planted group");
            PlantedGroup pg;
            read_double(g, "lambda", pg.lambda);
            read_uint(g, "count", pg.count);
            m.planted.push_back(pg);
        }
    }
    m.validate();
    return m;
}

json model_to(const SynthSpec& s) {
    json planted = json::array();
    for (const auto& g : s.model.planted) planted.push_back({{"lambda", g.lambda}, {"count", g.count}});
    return {{"flow_count", s.model.flow_count},
            {"lambda_mean", s.model.lambda_mean},
            {"lambda_stddev", s.model.lambda_stddev},
            {"planted", planted},
            {"windows", s.windows}};
}

double rel_err(double got, double want) {
    return want == 0 ? std::fabs(got) : std::fabs(got - want) / std::fabs(want);
}

}  // namespace

ExperimentConfig experiment_from_json(const std::string& text) {
    return experiment_from(parse(text, "experiment config"));
}

std::string experiment_to_json(const ExperimentConfig& config) { return experiment_to(config).dump(2); }

SweepSpec sweep_from_json(const std::string& text) {
    const auto j = parse(text, "sweep");
    require_object(j, "sweep spec");
    check_keys(j, {"base", "detectors", "memory_kb", "p0", "d0", "bucket_width"}, "sweep spec");
    SweepSpec s;
    if (auto it = j.find("base"); it != j.end()) s.base = experiment_from(*it);
    read_list(j, "detectors", s.grid.detectors, [](const json& v) {
        if (!v.is_string()) type_error("detectors", "an array of strings");
        return parse_detector(v.get<std::string>());
    });
    read_list(j, "memory_kb", s.grid.memory_kb, [](const json& v) {
        if (!v.is_number() || !(v.get<double>() > 0)) type_error("memory_kb", "an array of positive numbers");
        return v.get<double>();
    });
    read_list(j, "p0", s.grid.p0, [](const json& v) {
        if (!v.is_number_unsigned()) type_error("p0", "an array of non-negative integers");
        return v.get<std::uint64_t>();
    });
    read_list(j, "d0", s.grid.d0, [](const json& v) {
        if (!v.is_number()) type_error("d0", "an array of numbers");
        return v.get<double>();
    });
    read_list(j, "bucket_width", s.grid.bucket_width, [](const json& v) {
        if (!v.is_number_unsigned()) type_error("bucket_width", "an array of non-negative integers");
        return v.get<std::size_t>();
    });
    return s;
}

SynthSpec synth_from_json(const std::string& text) {
    auto j = parse(text, "population model");
    if (j.is_object() && j.contains("model") && j.contains("planted_flows")) j = j["model"];
    SynthSpec s;
    s.model = model_from(j);
    read_uint(j, "windows", s.windows);
    return s;
}

TheoryParams theory_from_json(const std::string& text) {
    const auto j = parse(text, "theory parameters");
    require_object(j, "theory parameters");
    check_keys(j, {"lambda", "windows", "trials", "ejection_trials", "max_windows", "tolerance", "seed"},
               "theory parameters");
    TheoryParams p;
    read_double(j, "lambda", p.lambda);
    read_uint(j, "windows", p.windows);
    read_uint(j, "trials", p.trials);
    read_uint(j, "ejection_trials", p.ejection_trials);
    read_uint(j, "max_windows", p.max_windows);
    read_double(j, "tolerance", p.tolerance);
    read_uint(j, "seed", p.seed);
    return p;
}

std::string metrics_json(const ExperimentConfig& config, const MetricsRecord& m) {
    json j = {{"config", experiment_to(config)}, {"metrics", metrics_to(m)}, {"metadata", metadata()}};
    return j.dump(2) + "\n";
}

std::string sweep_json(const std::vector<ExperimentConfig>& configs, const std::vector<MetricsRecord>& rows) {
    json out = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back({{"config", experiment_to(configs[i])}, {"metrics", metrics_to(rows[i])}});
    }
    json j = {{"rows", out}, {"metadata", metadata()}};
    return j.dump(2) + "\n";
}

std::string synth_sidecar_json(const SynthSpec& spec, std::uint64_t seed, const SyntheticTrace& trace) {
    const auto stats = exact_stats(trace.trace);
    json planted = json::array();
    for (const auto& f : trace.flows) {
        if (f.group < 0) continue;
        FlowStats s;
        if (auto it = stats.find(f.key); it != stats.end()) s = it->second;
        planted.push_back({{"id", f.key},
                           {"lambda", f.lambda},
                           {"group", f.group},
                           {"frequency", s.frequency},
                           {"persistence", s.persistence}});
    }
    json j = {{"model", model_to(spec)},
              {"seed", seed},
              {"packets", trace.trace.size()},
              {"flows", trace.flows.size()},
              {"planted_flows", planted}};
    return j.dump(2) + "\n";
}

TheoryReport run_theory_checks(const TheoryParams& p) {
    const auto closed = theory_stats(p.lambda, p.windows);
    const auto pmf = pmf_expectations(p.lambda, p.windows);
    auto stats_json = [](const TheoryStats& t) {
        return json{{"e_f", t.e_f}, {"e_p", t.e_p}, {"e_d", t.e_d}, {"var_f", t.var_f}, {"var_p", t.var_p},
                    {"var_d_bound", t.var_d_bound}};
    };
    json checks = json::array();
    bool all = true;

    const double pmf_tol = 1e-9;
    const double max_rel = std::max({rel_err(closed.e_f, pmf.e_f), rel_err(closed.e_p, pmf.e_p),
                                     rel_err(closed.e_d, pmf.e_d), rel_err(closed.var_f, pmf.var_f),
                                     rel_err(closed.var_p, pmf.var_p),
                                     rel_err(closed.var_d_bound, pmf.var_d_bound)});
    const bool pmf_ok = max_rel < pmf_tol;
    checks.push_back({{"name", "closed_form_vs_pmf"},
                      {"estimates", stats_json(pmf)},
                      {"max_relative_error", max_rel},
                      {"tolerance", pmf_tol},
                      {"pass", pmf_ok}});
    all = all && pmf_ok;

    const auto mc = monte_carlo_stats(p.lambda, p.windows, p.trials, derive_seed(p.seed, 10));
    auto z = [](double mean, double se, double want) { return se > 0 ? std::fabs(mean - want) / se : 0.0; };
    const double zf = z(mc.mean_f, mc.se_f, closed.e_f);
    const double zp = z(mc.mean_p, mc.se_p, closed.e_p);
    const double zd = z(mc.mean_d, mc.se_d, closed.e_d);
    const bool mc_ok = zf <= 3 && zp <= 3 && zd <= 3;
    checks.push_back({{"name", "monte_carlo_moments"},
                      {"trials", mc.trials},
                      {"estimates", {{"mean_f", mc.mean_f}, {"mean_p", mc.mean_p}, {"mean_d", mc.mean_d}}},
                      {"standard_errors", {{"f", mc.se_f}, {"p", mc.se_p}, {"d", mc.se_d}}},
                      {"z_scores", {{"f", zf}, {"p", zp}, {"d", zd}}},
                      {"undefined_density", mc.undefined_density},
                      {"max_z", 3},
                      {"pass", mc_ok}});
    all = all && mc_ok;

    const auto conv = validate_convergence(p.lambda, p.max_windows, p.trials, derive_seed(p.seed, 11), p.tolerance);
    json points = json::array();
    for (const auto& pt : conv.points) {
        points.push_back({{"windows", pt.windows},
                          {"mse", pt.mse},
                          {"stderr", pt.stderr_},
                          {"trials_used", pt.used_trials}});
    }
    checks.push_back({{"name", "density_convergence"},
                      {"target", conv.target},
                      {"tolerance", conv.tolerance},
                      {"points", points},
                      {"decreasing", conv.decreasing},
                      {"final_below_tolerance", conv.final_below_tolerance},
                      {"pass", conv.pass()}});
    all = all && conv.pass();

    const auto ej = ejection_experiment(p.lambda, p.windows, p.ejection_trials, derive_seed(p.seed, 12));
    checks.push_back({{"name", "ejection_unbiased"},
                      {"trials", ej.trials},
                      {"redrawn", ej.redrawn},
                      {"mean_diff", ej.mean_diff},
                      {"stddev", ej.stddev},
                      {"interval99", {ej.ci99_low, ej.ci99_high}},
                      {"pass", ej.pass()}});
    all = all && ej.pass();

    json j = {{"parameters",
               {{"lambda", p.lambda},
                {"windows", p.windows},
                {"trials", p.trials},
                {"ejection_trials", p.ejection_trials},
                {"max_windows", p.max_windows},
                {"tolerance", p.tolerance},
                {"seed", p.seed}}},
              {"theory", stats_json(closed)},
              {"checks", checks},
              {"pass", all}};
    return {j.dump(2) + "\n", all};
}

}  // namespace pss
