#include "pssketch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

namespace pss {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::uint64_t budget_bits(const ExperimentConfig& c) {
    return static_cast<std::uint64_t>(c.memory_kb * static_cast<double>(bits_per_kb));
}

}  // namespace

const char* to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::PSSketch: return "pssketch";
        case DetectorKind::Exact: return "exact";
        case DetectorKind::Strawman: return "strawman";
        case DetectorKind::PiSketch: return "pisketch";
        case DetectorKind::PiSketchDensity: return "pisketch-density";
    }
    return "?";
}

DetectorKind parse_detector(const std::string& name) {
    for (auto k : all_detectors()) {
        if (name == to_string(k)) return k;
    }
    fail(ErrorCode::Config, "unknown detector '" + name + "'");
}

const std::vector<DetectorKind>& all_detectors() {
    static const std::vector<DetectorKind> kinds{DetectorKind::PSSketch, DetectorKind::Exact,
                                                 DetectorKind::Strawman, DetectorKind::PiSketch,
                                                 DetectorKind::PiSketchDensity};
    return kinds;
}

MetricsRecord score(const ReportSet& report, const std::set<FlowKey>& truth, const StatsMap& exact) {
    MetricsRecord m;
    m.truth = truth.size();
    m.reported = report.flows.size();
    double sum_f = 0, sum_p = 0;
    std::size_t n = 0;
    for (const auto& r : report.flows) {
        if (r.ps) {
            ++m.reported_ps;
            if (truth.count(r.key)) ++m.true_positives;
        }
        auto it = exact.find(r.key);
        if (it == exact.end() || it->second.persistence == 0) continue;
        const auto& y = it->second;
        sum_f += std::fabs(static_cast<double>(y.frequency) - static_cast<double>(r.stats.frequency)) /
                 static_cast<double>(y.frequency);
        sum_p += std::fabs(static_cast<double>(y.persistence) - static_cast<double>(r.stats.persistence)) /
                 static_cast<double>(y.persistence);
        ++n;
    }
    if (n > 0) {
        m.are_f = sum_f / static_cast<double>(n);
        m.are_p = sum_p / static_cast<double>(n);
        m.are_mean = (m.are_f + m.are_p) / 2;
    }
    const double tp = static_cast<double>(m.true_positives);
    m.precision = m.reported_ps == 0 ? 0.0 : tp / static_cast<double>(m.reported_ps);
    if (truth.empty()) {
        m.recall = m.reported_ps == 0 ? 1.0 : 0.0;
    } else {
        m.recall = tp / static_cast<double>(truth.size());
    }
    const double pr = m.precision + m.recall;
    m.f1 = pr > 0 ? 2 * m.precision * m.recall / pr : 0.0;
    return m;
}

double measure_throughput(const DetectorFactory& make, const WindowedTrace& trace, unsigned repeats) {
    if (trace.empty()) fail(ErrorCode::InvalidArgument, "throughput needs a non-empty trace");
    if (repeats < 1) fail(ErrorCode::InvalidArgument, "repeat count must be >= 1");
    {
        auto warm = make();
        feed(*warm, trace);
    }
    std::vector<double> rates;
    for (unsigned r = 0; r < repeats; ++r) {
        auto det = make();
        const auto start = std::chrono::steady_clock::now();
        feed(*det, trace);
        const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rates.push_back(static_cast<double>(trace.size()) / std::max(secs, 1e-9));
    }
    std::sort(rates.begin(), rates.end());
    const auto mid = rates.size() / 2;
    return rates.size() % 2 ? rates[mid] : (rates[mid - 1] + rates[mid]) / 2;
}

void ExperimentConfig::validate() const {
    if (repeats < 1) fail(ErrorCode::Config, "repeat count must be >= 1");
    if (!(memory_kb > 0)) fail(ErrorCode::Config, "memory budget must be > 0");
    if (bucket_width < 1) fail(ErrorCode::Config, "bucket width must be >= 1");
    if (!(protection_fraction > 0 && protection_fraction < 1)) {
        fail(ErrorCode::Config, "protection fraction must be in (0,1)");
    }
    if (!(filter_fraction > 0 && filter_fraction < 1)) fail(ErrorCode::Config, "filter fraction must be in (0,1)");
    criterion.validate();
    widths.validate();
}

std::string ExperimentConfig::digest() const {
    std::ostringstream os;
    os << to_string(detector) << '|' << fmt_double(memory_kb) << '|' << criterion.p0 << '|'
       << fmt_double(criterion.d0) << '|' << bucket_width << '|' << widths.fingerprint_bits << ','
       << widths.freq_bits << ',' << widths.pers_bits << ',' << widths.freq_overflow_bits << ','
       << widths.pers_overflow_bits << ',' << widths.pers_overflow_threshold << '|' << seed << '|'
       << fmt_double(protection_fraction) << '|' << fmt_double(filter_fraction) << '|' << pisketch_cells << '|'
       << pisketch_L << '|' << (weight_threshold ? std::to_string(*weight_threshold) : "best");
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_token(os.str())));
    return buf;
}

SketchConfig pssketch_config(const ExperimentConfig& c) {
    c.validate();
    const auto& w = c.widths;
    const std::uint64_t budget = budget_bits(c);
    const std::uint64_t pl_bits = WidthConfig::id_bits + w.freq_overflow_bits + w.pers_overflow_bits;
    const std::uint64_t cl_bits = w.fingerprint_bits + w.freq_bits + w.pers_bits + 2;
    SketchConfig s;
    s.bucket_width = c.bucket_width;
    s.widths = w;
    s.criterion = c.criterion;
    s.protection_capacity = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(static_cast<double>(budget) * c.protection_fraction) / pl_bits);
    const std::uint64_t used = s.protection_capacity * pl_bits;
    if (used >= budget || (budget - used) / (cl_bits * c.bucket_width) < 1) {
        fail(ErrorCode::Config, "memory budget too small for one PSSketch bucket");
    }
    s.buckets = (budget - used) / (cl_bits * c.bucket_width);
    s.hash_seed = derive_seed(c.seed, 1);
    s.rng_seed = derive_seed(c.seed, 2);
    return s;
}

StrawmanConfig strawman_config(const ExperimentConfig& c) {
    c.validate();
    const std::uint64_t budget = budget_bits(c);
    StrawmanConfig s;
    s.criterion = c.criterion;
    s.cms.cols = budget / 2 / (s.cms.rows * s.cms.counter_width);
    s.oos.cols = budget / 4 / (s.oos.rows * (s.oos.counter_width + 1));
    s.candidate_capacity = budget / 4 / StrawmanDetector::candidate_bits;
    if (s.cms.cols < 1 || s.oos.cols < 1 || s.candidate_capacity < 1) {
        fail(ErrorCode::Config, "memory budget too small for the strawman");
    }
    s.cms.seed = derive_seed(c.seed, 3);
    s.oos.seed = derive_seed(c.seed, 4);
    return s;
}

PiSketchConfig pisketch_config(const ExperimentConfig& c) {
    c.validate();
    const std::uint64_t budget = budget_bits(c);
    PiSketchConfig p;
    p.bucket_cells = c.pisketch_cells;
    p.L = c.pisketch_L;
    p.filter_bits = std::max<std::uint64_t>(
        64, static_cast<std::uint64_t>(static_cast<double>(budget) * c.filter_fraction) / 64 * 64);
    if (p.filter_bits >= budget) fail(ErrorCode::Config, "memory budget too small for PISketch");
    p.buckets = (budget - p.filter_bits) / (p.cell_bits() * p.bucket_cells);
    if (p.buckets < 1) fail(ErrorCode::Config, "memory budget too small for one PISketch bucket");
    p.seed = derive_seed(c.seed, 5);
    return p;
}

std::unique_ptr<Detector> make_detector(const ExperimentConfig& c) {
    switch (c.detector) {
        case DetectorKind::PSSketch: return std::make_unique<PSSketchDetector>(pssketch_config(c));
        case DetectorKind::Exact: c.validate(); return std::make_unique<ExactDetector>(c.criterion);
        case DetectorKind::Strawman: return std::make_unique<StrawmanDetector>(strawman_config(c));
        case DetectorKind::PiSketch:
            return std::make_unique<PiSketchDetector>(pisketch_config(c), PiSketchDetector::Mode::Weight,
                                                      c.criterion, c.weight_threshold.value_or(0));
        case DetectorKind::PiSketchDensity:
            return std::make_unique<PiSketchDetector>(pisketch_config(c), PiSketchDetector::Mode::Density,
                                                      c.criterion);
    }
    fail(ErrorCode::Internal, "unhandled detector kind");
}

Truth make_truth(const WindowedTrace& trace, const Criterion& criterion) {
    Truth t;
    t.exact = exact_stats(trace);
    t.ps = answer_set(t.exact, criterion);
    t.criterion = criterion;
    return t;
}

std::uint32_t best_weight_threshold(const PiSketch& sketch, const std::set<FlowKey>& truth) {
    std::vector<std::pair<std::uint32_t, bool>> cells;
    for (const auto& c : sketch.cells()) {
        if (c.live()) cells.emplace_back(c.weight, truth.count(c.id) > 0);
    }
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::uint32_t best = cells.empty() ? 1 : cells.front().first + 1;
    double best_f1 = -1;
    std::size_t reported = 0, tp = 0;
    for (std::size_t i = 0; i < cells.size();) {
        const auto w = cells[i].first;
        for (; i < cells.size() && cells[i].first == w; ++i) {
            ++reported;
            tp += cells[i].second;
        }
        const double p = static_cast<double>(tp) / static_cast<double>(reported);
        const double r = truth.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(truth.size());
        const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        if (f1 >= best_f1) {
            best_f1 = f1;
            best = w;
        }
    }
    return best;
}

namespace {

MetricsRecord run_accuracy(const ExperimentConfig& config, const WindowedTrace& trace, const StatsMap& exact,
                           const std::set<FlowKey>& truth, std::string* dump) {
    auto det = make_detector(config);
    feed(*det, trace);
    std::string note;
    if (config.detector == DetectorKind::PiSketch) {
        auto& pi = static_cast<PiSketchDetector&>(*det);
        std::uint32_t t;
        if (config.weight_threshold) {
            t = *config.weight_threshold;
            note = "weight_threshold=" + std::to_string(t);
        } else {
            t = best_weight_threshold(pi.sketch(), truth);
            note = "weight_threshold=best:" + std::to_string(t);
        }
        pi.set_weight_threshold(t);
    }
    auto m = score(det->query(), truth, exact);
    m.detector = std::string(det->name());
    m.config_digest = config.digest();
    m.memory_bits = det->memory_bits();
    m.note = note;
    if (dump) *dump = det->dump();
    return m;
}

MetricsRecord failed_cell(const ExperimentConfig& config, const std::exception& e) {
    MetricsRecord m;
    m.detector = to_string(config.detector);
    m.config_digest = config.digest();
    m.error = e.what();
    return m;
}

void add_throughput(const ExperimentConfig& config, const WindowedTrace& trace, MetricsRecord& m) {
    if (!config.throughput || trace.empty() || !m.error.empty()) return;
    m.throughput_pps = measure_throughput([&] { return make_detector(config); }, trace, config.repeats);
}

}  // namespace

MetricsRecord run_experiment(const ExperimentConfig& config, const WindowedTrace& trace, const Truth& truth,
                             std::string* dump) {
    const bool same = truth.criterion.p0 == config.criterion.p0 && truth.criterion.d0 == config.criterion.d0;
    auto m = same ? run_accuracy(config, trace, truth.exact, truth.ps, dump)
                  : run_accuracy(config, trace, truth.exact, answer_set(truth.exact, config.criterion), dump);
    add_throughput(config, trace, m);
    return m;
}

MetricsRecord run_experiment(const ExperimentConfig& config, const WindowedTrace& trace) {
    return run_experiment(config, trace, make_truth(trace, config.criterion));
}

std::vector<MetricsRecord> sweep(const std::vector<ExperimentConfig>& configs, const WindowedTrace& trace,
                                 unsigned jobs) {
    const auto exact = exact_stats(trace);
    std::vector<MetricsRecord> rows(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < configs.size();) {
            try {
                rows[i] = run_accuracy(configs[i], trace, exact, answer_set(exact, configs[i].criterion), nullptr);
            } catch (const std::exception& e) {
                rows[i] = failed_cell(configs[i], e);
            }
        }
    };
    jobs = std::clamp<unsigned>(jobs, 1, std::max<std::size_t>(1, configs.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < configs.size(); ++i) {
        try {
            add_throughput(configs[i], trace, rows[i]);
        } catch (const std::exception& e) {
            rows[i].error = e.what();
        }
    }
    return rows;
}

std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& base, const SweepGrid& grid) {
    std::vector<ExperimentConfig> out;
    for (double kb : grid.memory_kb)
        for (auto p0 : grid.p0)
            for (double d0 : grid.d0)
                for (auto y : grid.bucket_width)
                    for (auto det : grid.detectors) {
                        auto c = base;
                        c.memory_kb = kb;
                        c.criterion = {p0, d0};
                        c.bucket_width = y;
                        c.detector = det;
                        out.push_back(c);
                    }
    return out;
}

DistributionReport distribution_report(const WindowedTrace& trace) {
    const auto stats = exact_stats(trace);
    DistributionReport r;
    r.flows = stats.size();
    std::uint64_t max_p = 0;
    double max_d = 1;
    for (const auto& [k, s] : stats) {
        max_p = std::max(max_p, s.persistence);
        if (s.persistence >= 2) max_d = std::max(max_d, s.density());
    }
    for (std::uint64_t lo = 1; lo <= std::max<std::uint64_t>(max_p, 1); lo *= 2) {
        r.persistence.push_back({static_cast<double>(lo), static_cast<double>(lo * 2), 0});
    }
    // tenth-wide bins over [1,4), power-of-two bins above
    for (int k = 0; k < 30; ++k) r.density.push_back({1 + k / 10.0, 1 + (k + 1) / 10.0, 0});
    r.density.back().high = 4;
    for (double lo = 4; lo <= max_d; lo *= 2) r.density.push_back({lo, lo * 2, 0});

    for (const auto& [k, s] : stats) {
        const auto pb = static_cast<std::size_t>(std::bit_width(s.persistence) - 1);
        ++r.persistence[pb].count;
        if (s.persistence < 2) continue;
        const double d = s.density();
        std::size_t db;
        if (d < 4) {
            // exact rational comparison: bin k holds 10p + k*p <= 10f < 10p + (k+1)p
            db = static_cast<std::size_t>((10 * (s.frequency - s.persistence)) / s.persistence);
            db = std::min<std::size_t>(db, 29);
        } else {
            db = 30;
            while (db + 1 < r.density.size() && d >= r.density[db + 1].low) ++db;
        }
        ++r.density[db].count;
    }
    return r;
}

std::string metrics_csv_header() {
    return "detector,config_digest,memory_kb,memory_bits,p0,d0,bucket_width,seed,precision,recall,f1,"
           "are_f,are_p,are_mean,reported,reported_ps,truth,true_positives,throughput_pps,note,error";
}

std::string metrics_csv_row(const ExperimentConfig& c, const MetricsRecord& m) {
    std::ostringstream os;
    os << m.detector << ',' << m.config_digest << ',' << fmt_double(c.memory_kb) << ',' << m.memory_bits << ','
       << c.criterion.p0 << ',' << fmt_double(c.criterion.d0) << ',' << c.bucket_width << ',' << c.seed << ','
       << fmt_double(m.precision) << ',' << fmt_double(m.recall) << ',' << fmt_double(m.f1) << ','
       << fmt_double(m.are_f) << ',' << fmt_double(m.are_p) << ',' << fmt_double(m.are_mean) << ','
       << m.reported << ',' << m.reported_ps << ',' << m.truth << ',' << m.true_positives << ','
       << fmt_double(m.throughput_pps) << ',' << csv_escape(m.note) << ',' << csv_escape(m.error);
    return os.str();
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
    std::string out = "bin_low,bin_high,count\n";
    for (const auto& b : bins) {
        out += fmt_double(b.low) + ',' + fmt_double(b.high) + ',' + std::to_string(b.count) + '\n';
    }
    return out;
}

}  // namespace pss
