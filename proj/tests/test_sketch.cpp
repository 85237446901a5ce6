#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "pssketch/sketch.hpp"
#include "replay.hpp"

using namespace pss;

namespace {

SketchConfig small(std::size_t x, std::size_t y, std::size_t r) {
    SketchConfig c;
    c.buckets = x;
    c.bucket_width = y;
    c.protection_capacity = r;
    return c;
}

// First uniform of a fresh generator, recomputed from the raw engine.
double first_uniform(std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    return static_cast<double>(eng() >> 11) / 9007199254740992.0;
}

int slot_of(const PSSketch& s, FlowKey e) {
    const auto b = s.bucket_of(e);
    for (std::size_t i = 0; i < s.config().bucket_width; ++i) {
        if (s.entry(b, i).fp == s.fingerprint_of(e)) return static_cast<int>(i);
    }
    return -1;
}

}  // namespace

TEST_CASE("construction and memory formula") {
    auto c = small(1000, 32, 500);
    PSSketch s(c);
    std::size_t entries = 0;
    for (std::size_t b = 0; b < c.buckets; ++b)
        for (std::size_t i = 0; i < c.bucket_width; ++i) entries += s.entry(b, i).empty();
    CHECK(entries == 32000);
    CHECK(memory_bits(c) == 1064000);

    auto doubled = c;
    doubled.buckets *= 2;
    CHECK(memory_bits(doubled) - memory_bits(c) == 32000ull * 32);
    CHECK(c.bucket_width == SketchConfig{}.bucket_width);

    CHECK_THROWS_AS(PSSketch(small(0, 32, 1)), Error);
    SketchConfig bad;
    bad.widths.fingerprint_bits = 40;
    bad.widths.freq_bits = 16;
    bad.widths.pers_bits = 16;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("max_storable") {
    WidthConfig w;
    CHECK(max_storable(w).frequency == 65025);
    CHECK(max_storable(w).persistence == 16065);
    WidthConfig one{1, 1, 1, 1, 1, 0};
    CHECK(max_storable(one).frequency == 1);
    CHECK(max_storable(one).persistence == 1);
}

TEST_CASE("reconstruction of the worked example") {
    WidthConfig w;
    auto s = reconstruct(1, 5, 3, 18, w);
    CHECK(s.frequency == 261);
    CHECK(s.persistence == 210);
    CHECK(s.density() == doctest::Approx(261.0 / 210.0).epsilon(1e-12));
    Criterion c{50, 1.2};
    CHECK_FALSE(c.admits(s));
    CHECK(s.persistence >= c.p0);
    // a just-protected flow reads as exactly the overflow value
    CHECK(reconstruct(0, 64, 1, 0, w).persistence == 64);
}

TEST_CASE("insert creates and updates entries") {
    PSSketch s(small(4, 4, 4));
    const FlowKey e = 77;
    CHECK(s.insert(e) == InsertOutcome::Created);
    const auto slot = slot_of(s, e);
    REQUIRE(slot >= 0);
    auto en = s.entry(s.bucket_of(e), slot);
    CHECK(en == CompetitionEntry{s.fingerprint_of(e), 1, 1, true, false});

    CHECK(s.insert(e) == InsertOutcome::Updated);
    en = s.entry(s.bucket_of(e), slot);
    CHECK(en.f == 2);
    CHECK(en.p == 1);

    s.new_window();
    en = s.entry(s.bucket_of(e), slot);
    CHECK_FALSE(en.seen);
    CHECK(en.f == 2);
    CHECK(en.p == 1);
    s.insert(e);
    en = s.entry(s.bucket_of(e), slot);
    CHECK(en.p == 2);
    CHECK(en.f == 3);
    CHECK(s.fingerprint_of(e) != 0);
}

TEST_CASE("new_window is idempotent apart from the counter") {
    PSSketch a(small(8, 4, 8)), b(small(8, 4, 8));
    Rng rng(4);
    for (int i = 0; i < 3000; ++i) {
        const auto k = rng.below(60);
        a.insert(k);
        b.insert(k);
        if (i % 97 == 0) {
            a.new_window();
            b.new_window();
        }
    }
    CHECK(a == b);
    a.new_window();
    a.new_window();
    b.new_window();
    CHECK(a.window() == b.window() + 1);
    auto body = [](const std::string& d) { return d.substr(d.find('\n')); };
    CHECK(body(a.dump()) == body(b.dump()));
    for (std::size_t bk = 0; bk < 8; ++bk)
        for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(a.entry(bk, i).seen);
}

TEST_CASE("contend replaces a p=1 entry with probability 1") {
    auto c = small(1, 2, 2);
    PSSketch s(c);
    s.insert(1);
    s.insert(2);
    s.new_window();
    s.insert(1);  // p=2, slot of key 2 keeps p=1
    const auto victim = slot_of(s, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto cs = c;
        cs.rng_seed = seed;
        PSSketch t(cs);
        t.insert(1);
        t.insert(2);
        t.new_window();
        t.insert(1);
        CHECK(t.insert(3) == InsertOutcome::Replaced);
        CHECK(t.entry(0, victim) == CompetitionEntry{t.fingerprint_of(3), 1, 1, true, false});
        CHECK(slot_of(t, 2) == -1);
    }
}

TEST_CASE("contend at p=4 follows the seeded draw") {
    std::uint64_t drop_seed = 0, keep_seed = 0;
    bool have_drop = false, have_keep = false;
    for (std::uint64_t seed = 1; !(have_drop && have_keep); ++seed) {
        const double u = first_uniform(seed);
        if (!have_drop && u >= 0.25) drop_seed = seed, have_drop = true;
        if (!have_keep && u < 0.25) keep_seed = seed, have_keep = true;
    }
    auto run = [](std::uint64_t seed, std::string* before, std::string* after) {
        auto c = small(1, 2, 2);
        c.rng_seed = seed;
        PSSketch s(c);
        for (int w = 0; w < 4; ++w) {
            if (w) s.new_window();
            s.insert(10);
            s.insert(20);
        }
        *before = s.dump();
        const auto o = s.insert(30);
        *after = s.dump();
        return o;
    };
    std::string before, after;
    CHECK(run(drop_seed, &before, &after) == InsertOutcome::Dropped);
    CHECK(before == after);
    CHECK(run(keep_seed, &before, &after) == InsertOutcome::Replaced);
    CHECK(before != after);
}

TEST_CASE("fully protected bucket drops arrivals without a draw") {
    auto c = small(1, 2, 4);
    c.widths.pers_overflow_threshold = 2;
    PSSketch s(c);
    s.insert(1);
    s.insert(2);
    s.new_window();
    CHECK(s.insert(1) == InsertOutcome::Protected);
    CHECK(s.insert(2) == InsertOutcome::Protected);
    const auto before = s.dump();
    for (FlowKey k = 100; k < 10100; ++k) CHECK(s.insert(k) == InsertOutcome::Dropped);
    CHECK(s.dump() == before);
    CHECK(s.entry(0, 0).protected_);
    CHECK(s.entry(0, 1).protected_);
}

TEST_CASE("frequency overflow before protection eliminates the flow") {
    PSSketch s(small(2, 4, 4));
    std::vector<SketchEvent> events;
    s.set_observer([&](const SketchEvent& e) { events.push_back(e); });
    for (int i = 0; i < 255; ++i) s.insert(9);
    CHECK(s.entry(s.bucket_of(9), slot_of(s, 9)).f == 255);
    CHECK(s.insert(9) == InsertOutcome::Eliminated);
    CHECK(slot_of(s, 9) == -1);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == SketchEvent::Kind::Eliminated);
    CHECK(events[0].stats.frequency == 256);
    s.check_invariants();
}

TEST_CASE("persistence overflow creates a protection entry") {
    PSSketch s(small(2, 4, 4));
    const FlowKey e = 5;
    for (int w = 0; w < 64; ++w) {
        if (w) s.new_window();
        s.insert(e);
        s.insert(e);
    }
    const auto* pe = s.protection(e);
    REQUIRE(pe != nullptr);
    CHECK(pe->f_of == 0);
    CHECK(pe->p_of == 1);
    const auto en = s.entry(s.bucket_of(e), slot_of(s, e));
    CHECK(en.protected_);
    CHECK(en.p == 0);
    CHECK(en.f == 128);
    auto rs = s.query();
    REQUIRE(rs.flows.size() == 1);
    CHECK(rs.flows[0].stats == FlowStats{128, 64});
    CHECK_FALSE(rs.flows[0].ps);
    s.check_invariants();
}

TEST_CASE("burst elimination caps f_of increments at two per window") {
    auto c = small(1, 4, 4);
    c.prune = false;
    PSSketch s(c);
    const FlowKey e = 8;
    for (int w = 0; w < 64; ++w) {
        if (w) s.new_window();
        s.insert(e);
    }
    REQUIRE(s.protection(e));
    s.new_window();
    for (int i = 0; i < 3 * 256; ++i) s.insert(e);
    CHECK(s.protection(e)->f_of == 2);
    CHECK(s.protection(e)->window_fof_increments == 2);
    s.new_window();
    CHECK(s.protection(e)->window_fof_increments == 0);
    for (int i = 0; i < 256; ++i) s.insert(e);
    CHECK(s.protection(e)->f_of == 3);
    s.check_invariants();
}

TEST_CASE("prune fires only when f_of exceeds p_of") {
    auto c = small(1, 4, 4);
    c.widths.pers_overflow_threshold = 2;
    PSSketch s(c);
    const FlowKey e = 3;
    // p_of = 3 after six windows
    for (int w = 0; w < 6; ++w) {
        if (w) s.new_window();
        s.insert(e);
    }
    REQUIRE(s.protection(e));
    CHECK(s.protection(e)->p_of == 3);
    // three f overflows spread over windows: f_of = 3 = p_of, no prune
    s.new_window();
    for (int i = 0; i < 256 - 6; ++i) s.insert(e);
    s.new_window();
    for (int i = 0; i < 256; ++i) s.insert(e);
    s.new_window();
    for (int i = 0; i < 256; ++i) s.insert(e);
    REQUIRE(s.protection(e));
    CHECK(s.protection(e)->f_of == 3);
    CHECK(s.protection(e)->p_of >= 3);
}

TEST_CASE("eviction removes the densest protected flow and its CL entry") {
    auto c = small(1, 8, 3);
    c.widths.pers_overflow_threshold = 10;
    PSSketch s(c);
    std::vector<SketchEvent> events;
    s.set_observer([&](const SketchEvent& ev) { events.push_back(ev); });
    const FlowKey a = 11, b = 13, d = 25, n = 99;
    for (int w = 0; w < 10; ++w) {
        if (w) s.new_window();
        for (auto [key, extra] : {std::pair{a, 1}, {b, 3}, {d, 15}, {n, 0}}) {
            const int count = 1 + (w == 0 ? extra : 0);
            for (int k = 0; k < count; ++k) s.insert(key);
        }
    }
    CHECK(s.protected_count() == 3);
    CHECK(s.protection(a));
    CHECK(s.protection(b));
    CHECK(s.protection(n));
    CHECK_FALSE(s.protection(d));
    CHECK(slot_of(s, d) == -1);
    bool saw = false;
    for (const auto& ev : events) {
        if (ev.kind == SketchEvent::Kind::Evicted) {
            CHECK(ev.key == d);
            CHECK(ev.stats == FlowStats{25, 10});
            saw = true;
        }
    }
    CHECK(saw);
    s.check_invariants();
}

TEST_CASE("counter saturation retires the flow without losing counts") {
    auto c = small(1, 4, 4);
    c.widths.pers_bits = 2;
    c.widths.pers_overflow_bits = 1;
    c.criterion = {4, 1.2};
    PSSketch s(c);
    const FlowKey e = 6;
    WindowedTrace t;
    for (std::uint64_t w = 0; w < 12; ++w) {
        if (w) s.new_window();
        s.insert(e);
        t.records.push_back({e, w});
    }
    REQUIRE(s.retired().count(e));
    CHECK(s.retired().at(e) == FlowStats{8, 8});
    auto rs = s.query();
    REQUIRE(rs.find(e));
    CHECK(rs.find(e)->stats == exact_stats(t).at(e));
    s.check_invariants();
}

TEST_CASE("scan matches the three-pass reference") {
    Rng rng(13);
    for (int round = 0; round < 200; ++round) {
        auto c = small(1 + rng.below(4), 1 + rng.below(12), 1 + rng.below(6));
        c.widths.fingerprint_bits = 3 + static_cast<unsigned>(rng.below(6));
        c.widths.pers_overflow_threshold = 2 + static_cast<std::uint32_t>(rng.below(6));
        c.rng_seed = rng.next();
        PSSketch s(c);
        for (int i = 0; i < 300; ++i) {
            if (rng.below(10) == 0) s.new_window();
            s.insert(rng.below(40));
            for (std::size_t b = 0; b < c.buckets; ++b) {
                const auto fp = 1 + static_cast<std::uint32_t>(rng.below((1u << c.widths.fingerprint_bits) - 1));
                CHECK(s.scan(b, fp) == s.scan_three_pass(b, fp));
            }
        }
    }
}

TEST_CASE("identical histories give identical state") {
    auto c = small(16, 8, 10);
    c.widths.pers_overflow_threshold = 8;
    PSSketch a(c), b(c);
    Rng ra(99), rb(99);
    for (int i = 0; i < 20000; ++i) {
        if (i % 300 == 0) {
            a.new_window();
            b.new_window();
        }
        CHECK(a.insert(ra.below(500)) == b.insert(rb.below(500)));
    }
    CHECK(a == b);
    CHECK(a.dump() == b.dump());
    auto qa = a.query(), qb = b.query();
    REQUIRE(qa.flows.size() == qb.flows.size());
    for (std::size_t i = 0; i < qa.flows.size(); ++i) {
        CHECK(qa.flows[i].key == qb.flows[i].key);
        CHECK(qa.flows[i].stats == qb.flows[i].stats);
    }
}

TEST_CASE("unbounded configuration reconstructs exact counts") {
    Rng rng(31);
    for (int round = 0; round < 10; ++round) {
        SketchConfig c = small(4096, 8, 4096);
        c.widths = {30, 16, 6, 16, 16, 0};
        c.criterion = {64, 1.2};
        c.hash_seed = rng.next();
        PSSketch s(c);
        WindowedTrace t;
        for (std::uint64_t w = 0; w < 150; ++w) {
            if (w) s.new_window();
            for (int i = 0; i < 60; ++i) {
                const FlowKey k = 1 + rng.below(100);
                s.insert(k);
                t.records.push_back({k, w});
            }
        }
        auto rs = s.query();
        auto brute = oracle::brute_counts(t.records);
        for (const auto& [k, cnt] : brute) {
            if (cnt.windows.size() < 64) continue;
            const auto* f = rs.find(k);
            REQUIRE(f != nullptr);
            CHECK(f->stats.frequency == cnt.packets);
            CHECK(f->stats.persistence == cnt.windows.size());
        }
        CHECK(rs.ps_keys() == oracle::brute_ps(brute, 64, 1.2));
    }
}

TEST_CASE("fingerprint collisions are rare at 16 bits") {
    SketchConfig c = small(100, 32, 1);
    PSSketch s(c);
    std::map<std::pair<std::size_t, std::uint32_t>, int> seen;
    int pairs = 0;
    for (FlowKey k = 0; k < 10000; ++k) pairs += seen[{s.bucket_of(k), s.fingerprint_of(k)}]++;
    // expected about n^2 / (2 X 2^16) = 7.6
    CHECK(pairs < 30);
}

TEST_CASE("random operations keep every invariant") {
    Rng rng(2024);
    std::size_t prunes = 0;
    for (int round = 0; round < 40; ++round) {
        SketchConfig c = small(1 + rng.below(6), 1 + rng.below(8), 1 + rng.below(5));
        c.widths.fingerprint_bits = 4 + static_cast<unsigned>(rng.below(12));
        c.widths.freq_bits = 4 + static_cast<unsigned>(rng.below(5));
        c.widths.pers_bits = 2 + static_cast<unsigned>(rng.below(4));
        c.widths.freq_overflow_bits = 1 + static_cast<unsigned>(rng.below(4));
        c.widths.pers_overflow_bits = 1 + static_cast<unsigned>(rng.below(4));
        const std::uint32_t thr_max = std::min(1u << c.widths.pers_bits, (1u << c.widths.freq_bits) / 4);
        if (thr_max < 2) continue;
        c.widths.pers_overflow_threshold = 2 + static_cast<std::uint32_t>(rng.below(thr_max - 1));
        c.rng_seed = rng.next();
        PSSketch s(c);
        const auto& w = c.widths;
        s.set_observer([&](const SketchEvent& ev) {
            if (ev.kind != SketchEvent::Kind::Pruned) return;
            ++prunes;
            CHECK(ev.stats.density() > 4.0);
            CHECK(ev.stats.density() > static_cast<double>(w.freq_limit()) / w.pers_limit());
        });
        const std::uint64_t keys = 2 + rng.below(40);
        for (int op = 0; op < 1500; ++op) {
            if (rng.below(20) == 0) {
                s.new_window();
                s.check_invariants();
                continue;
            }
            const FlowKey k = rng.below(keys);
            // heavy hitters make elimination, burst capping and pruning reachable
            const int repeat = rng.below(8) == 0 ? static_cast<int>(rng.below(300)) : 1;
            for (int rep = 0; rep < repeat; ++rep) {
                const auto b = s.bucket_of(k);
                const auto before = s.scan(b, s.fingerprint_of(k));
                std::vector<CompetitionEntry> prot;
                for (std::size_t i = 0; i < c.bucket_width; ++i) prot.push_back(s.entry(b, i));
                const auto o = s.insert(k);
                if (o == InsertOutcome::Replaced || o == InsertOutcome::Dropped) {
                    for (std::size_t i = 0; i < c.bucket_width; ++i) {
                        if (prot[i].protected_) CHECK(s.entry(b, i) == prot[i]);
                    }
                }
                if (o == InsertOutcome::Replaced) {
                    REQUIRE(before.min_slot >= 0);
                    CHECK(s.entry(b, before.min_slot).fp == s.fingerprint_of(k));
                    for (std::size_t i = 0; i < c.bucket_width; ++i) {
                        if (!prot[i].protected_ && !prot[i].empty()) CHECK(prot[before.min_slot].p <= prot[i].p);
                    }
                }
                s.check_invariants();
            }
        }
    }
    CHECK(prunes > 0);
}

TEST_CASE("running example matches the golden dumps") {
    const auto r = replay::run();
    REQUIRE(r.steps.size() == 7);
    CHECK(r.steps[0].outcome == InsertOutcome::Created);
    CHECK(r.steps[1].outcome == InsertOutcome::Updated);
    CHECK(r.steps[2].outcome == InsertOutcome::Replaced);
    CHECK(r.steps[3].outcome == InsertOutcome::Protected);
    CHECK(r.steps[4].outcome == InsertOutcome::Protected);
    CHECK(r.steps[6].outcome == InsertOutcome::Pruned);
    CHECK(r.steps[3].dump.find("PL id=1002 f_of=0 p_of=1") != std::string::npos);
    CHECK(r.steps[5].dump.find("PL id=1005 f_of=3 p_of=3") != std::string::npos);
    CHECK(r.steps[6].dump.find("id=1005") == std::string::npos);

    const std::string path = std::string(PSS_GOLDEN_DIR) + "/running_example.txt";
    const auto text = replay::render(r);
    if (std::getenv("PSS_UPDATE_GOLDENS")) {
        std::ofstream(path, std::ios::binary) << text;
    }
    CHECK(text == replay::read_file(path));
}
