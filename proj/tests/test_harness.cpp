#include <doctest.h>

#include <algorithm>
#include <chrono>

#include "pssketch/harness.hpp"
#include "pssketch/synth.hpp"

using namespace pss;

namespace {

ReportSet report_of(std::initializer_list<ReportedFlow> flows) {
    ReportSet r;
    r.flows = flows;
    r.sort();
    return r;
}

const WindowedTrace& planted_trace() {
    static const WindowedTrace t = [] {
        PopulationModel m;
        m.flow_count = 3000;
        m.lambda_mean = 0.012;
        m.lambda_stddev = 0.003;
        m.planted = {{0.2, 40}, {3.0, 6}, {0.5, 12}};
        return generate_trace(m, 500, 7).trace;
    }();
    return t;
}

}  // namespace

TEST_CASE("score worked examples") {
    StatsMap exact{{1, {60, 55}}, {2, {70, 60}}, {3, {500, 60}}};
    const std::set<FlowKey> truth{1, 2};

    auto perfect = score(report_of({{1, {60, 55}, true}, {2, {70, 60}, true}}), truth, exact);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.are_f == 0.0);
    CHECK(perfect.are_p == 0.0);

    auto half = score(report_of({{1, {60, 55}, true}, {2, {70, 60}, true}, {3, {500, 60}, true}, {4, {9, 9}, true}}),
                      {1}, exact);
    CHECK(half.precision == doctest::Approx(0.25));
    auto pr = score(report_of({{1, {60, 55}, true}, {3, {500, 60}, true}}), {1}, exact);
    CHECK(pr.precision == 0.5);
    CHECK(pr.recall == 1.0);
    CHECK(pr.f1 == doctest::Approx(2.0 / 3.0));

    StatsMap one{{7, {260, 200}}};
    auto are = score(report_of({{7, {261, 200}, true}}), {7}, one);
    CHECK(are.are_f == doctest::Approx(1.0 / 260).epsilon(1e-12));
    CHECK(are.are_f == doctest::Approx(0.003846).epsilon(1e-3));
    CHECK(are.are_p == 0.0);
    CHECK(are.are_mean == doctest::Approx(0.5 / 260));

    // non-PS reported flows count for ARE only
    auto mixed = score(report_of({{1, {60, 55}, true}, {3, {400, 60}, false}}), truth, exact);
    CHECK(mixed.precision == 1.0);
    CHECK(mixed.recall == 0.5);
    CHECK(mixed.reported == 2);
    CHECK(mixed.reported_ps == 1);
    CHECK(mixed.are_f == doctest::Approx(0.1));
}

TEST_CASE("score conventions") {
    StatsMap exact{{1, {5, 5}}};
    auto both_empty = score({}, {}, exact);
    CHECK(both_empty.precision == 0.0);
    CHECK(both_empty.recall == 1.0);
    CHECK(score(report_of({{1, {5, 5}, true}}), {}, exact).recall == 0.0);
    auto none = score({}, {1}, exact);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    auto disjoint = score(report_of({{2, {5, 5}, true}}), {1}, StatsMap{{1, {5, 5}}, {2, {5, 5}}});
    CHECK(disjoint.f1 == 0.0);
}

TEST_CASE("score is symmetric under relabeling") {
    Rng rng(4);
    for (int round = 0; round < 30; ++round) {
        StatsMap exact, relabeled;
        std::set<FlowKey> truth, truth2;
        ReportSet r, r2;
        const auto mix = rng.next() | 1;
        for (FlowKey k = 1; k <= 40; ++k) {
            const FlowStats s{1 + rng.below(100), 1 + rng.below(50)};
            exact[k] = s;
            relabeled[k * mix] = s;
            if (rng.below(2)) {
                truth.insert(k);
                truth2.insert(k * mix);
            }
            if (rng.below(2)) {
                const FlowStats est{s.frequency + rng.below(3), s.persistence};
                const bool ps = rng.below(3) != 0;
                r.flows.push_back({k, est, ps});
                r2.flows.push_back({k * mix, est, ps});
            }
        }
        r.sort();
        r2.sort();
        const auto a = score(r, truth, exact), b = score(r2, truth2, relabeled);
        CHECK(a.precision == b.precision);
        CHECK(a.recall == b.recall);
        CHECK(a.f1 == b.f1);
        CHECK(a.are_f == doctest::Approx(b.are_f));
        CHECK(a.are_p == doctest::Approx(b.are_p));
        // F1 = 1 iff the PS subset equals the truth set
        CHECK((a.f1 == 1.0) == (r.ps_keys() == truth));
    }
}

TEST_CASE("exact detector scores perfectly") {
    ExperimentConfig c;
    c.detector = DetectorKind::Exact;
    c.throughput = false;
    c.criterion = {20, 1.3};
    auto m = run_experiment(c, planted_trace());
    CHECK(m.truth > 0);
    CHECK(m.f1 == 1.0);
    CHECK(m.are_mean == 0.0);
    CHECK(m.error.empty());
}

TEST_CASE("throughput measurement") {
    auto make = [] {
        ExperimentConfig c;
        return make_detector(c);
    };
    CHECK_THROWS_AS(measure_throughput(make, WindowedTrace{}, 1), Error);
    CHECK_THROWS_AS(measure_throughput(make, planted_trace(), 0), Error);

    const auto& t = planted_trace();
    WindowedTrace doubled = t;
    for (auto r : t.records) {
        r.window += t.window_count();
        doubled.records.push_back(r);
    }
    // best of a few attempts
    bool stable = false, linear = false;
    for (int attempt = 0; attempt < 5 && !(stable && linear); ++attempt) {
        const double a = measure_throughput(make, t, 5);
        const double b = measure_throughput(make, t, 5);
        stable = stable || std::abs(a - b) <= 0.2 * std::max(a, b);
        const double ta = static_cast<double>(t.size()) / a;
        const double tb = static_cast<double>(doubled.size()) / measure_throughput(make, doubled, 5);
        linear = linear || std::abs(tb / ta - 2.0) <= 0.3 * 2.0;
    }
    CHECK(stable);
    CHECK(linear);
}

TEST_CASE("expand_grid order and size") {
    ExperimentConfig base;
    SweepGrid g;
    g.memory_kb = {5, 10, 20};
    g.p0 = {20, 30, 40, 50, 60};
    auto cells = expand_grid(base, g);
    REQUIRE(cells.size() == 15);
    CHECK(cells[0].memory_kb == 5);
    CHECK(cells[0].criterion.p0 == 20);
    CHECK(cells[4].criterion.p0 == 60);
    CHECK(cells[5].memory_kb == 10);

    g.detectors = all_detectors();
    CHECK(expand_grid(base, g).size() == 75);
    CHECK(expand_grid(base, g)[1].detector == all_detectors()[1]);
}

TEST_CASE("sweep is deterministic and records failures in-row") {
    ExperimentConfig base;
    base.throughput = false;
    base.criterion = {20, 1.2};
    SweepGrid g;
    g.detectors = all_detectors();
    g.memory_kb = {0.001, 4, 16};
    auto cells = expand_grid(base, g);
    auto a = sweep(cells, planted_trace(), 1);
    auto b = sweep(cells, planted_trace(), 3);
    REQUIRE(a.size() == cells.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(metrics_csv_row(cells[i], a[i]) == metrics_csv_row(cells[i], b[i]));
        CHECK(a[i].detector == to_string(cells[i].detector));
    }
    CHECK_FALSE(a[0].error.empty());  // pssketch cannot fit in 8 bits
    CHECK(a[1].error.empty());        // exact has no budget
    for (std::size_t i = 5; i < a.size(); ++i) CHECK(a[i].error.empty());
}

TEST_CASE("PSSketch F1 is non-decreasing in memory") {
    ExperimentConfig base;
    base.throughput = false;
    base.criterion = {50, 1.2};
    SweepGrid g;
    g.memory_kb = {1, 2, 4, 8, 16, 32};
    const auto cells = expand_grid(base, g);
    const auto rows = sweep(cells, planted_trace());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CAPTURE(i);
        CHECK(rows[i].f1 >= rows[i - 1].f1 - 0.02);
    }
    CHECK(rows.back().f1 >= 0.95);
}

TEST_CASE("distribution report") {
    WindowedTrace singles;
    for (FlowKey k = 0; k < 50; ++k) singles.records.push_back({k, k / 10});
    auto d = distribution_report(singles);
    CHECK(d.flows == 50);
    REQUIRE_FALSE(d.persistence.empty());
    CHECK(d.persistence[0].count == 50);
    std::uint64_t dens = 0;
    for (const auto& b : d.density) dens += b.count;
    CHECK(dens == 0);

    const auto& t = planted_trace();
    auto r = distribution_report(t);
    const auto stats = exact_stats(t);
    std::uint64_t total = 0, multi = 0, dtotal = 0;
    for (const auto& b : r.persistence) total += b.count;
    for (const auto& [k, s] : stats) multi += s.persistence >= 2;
    for (const auto& b : r.density) {
        CHECK(b.low < b.high);
        dtotal += b.count;
    }
    CHECK(total == stats.size());
    CHECK(dtotal == multi);
    // planted flows with rate 0.2 sit just above density 1
    CHECK(r.density[1].count >= 20);

    const auto csv = histogram_csv(r.persistence);
    CHECK(csv.rfind("bin_low,bin_high,count\n", 0) == 0);
}

TEST_CASE("config validation and digest") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    const auto d = c.digest();
    CHECK(d.size() == 16);
    ExperimentConfig c2 = c;
    c2.memory_kb = 50;
    CHECK(c2.digest() != d);
    c2.repeats = 0;
    CHECK_THROWS_AS(c2.validate(), Error);
    CHECK_THROWS_AS(parse_detector("nope"), Error);
    CHECK(parse_detector("pisketch-density") == DetectorKind::PiSketchDensity);

    auto bits = [](const ExperimentConfig& e) { return make_detector(e)->memory_bits(); };
    for (auto kind : {DetectorKind::PSSketch, DetectorKind::Strawman, DetectorKind::PiSketch}) {
        ExperimentConfig e;
        e.detector = kind;
        e.memory_kb = 20;
        CHECK(bits(e) <= 20 * bits_per_kb);
        CHECK(bits(e) >= 19 * bits_per_kb);
    }
}
