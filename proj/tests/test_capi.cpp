#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pssketch/pssketch.h"

using nlohmann::json;

namespace {

const char* model = R"({"flow_count":200,"lambda_mean":0.05,"planted":[{"lambda":0.3,"count":10}],"windows":120})";

std::string take(char* s) {
    std::string out = s ? s : "";
    pss_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("version and error reporting") {
    CHECK(std::strlen(pss_version()) > 0);
    pss_trace* t = nullptr;
    CHECK(pss_trace_load("/nonexistent/x.csv", 0, &t) == PSS_ERR_IO);
    CHECK(t == nullptr);
    CHECK(std::strlen(pss_last_error()) > 0);
    CHECK(pss_trace_load(nullptr, 0, &t) == PSS_ERR_INVALID_ARGUMENT);
    CHECK(pss_trace_synthesize(R"({"lambda_mean":-1})", 1, &t) == PSS_ERR_CONFIG);

    pss_detector* d = nullptr;
    CHECK(pss_detector_create(R"({"memory_kb":"big"})", &d) == PSS_ERR_CONFIG);
    REQUIRE(pss_detector_create(nullptr, &d) == PSS_OK);
    CHECK(std::strlen(pss_last_error()) == 0);
    CHECK(pss_detector_memory_bits(d) <= 100u * 8192);
    pss_detector_free(d);
    pss_detector_free(nullptr);
    pss_trace_free(nullptr);
    pss_report_free(nullptr);
}

TEST_CASE("detector lifecycle") {
    pss_detector* d = nullptr;
    REQUIRE(pss_detector_create(R"({"detector":"exact","p0":3,"d0":1.5})", &d) == PSS_OK);
    for (int w = 0; w < 4; ++w) {
        if (w) CHECK(pss_detector_new_window(d) == PSS_OK);
        CHECK(pss_detector_insert(d, 42) == PSS_OK);
        if (w == 0) CHECK(pss_detector_insert(d, 42) == PSS_OK);
        CHECK(pss_detector_insert(d, 7) == PSS_OK);
        CHECK(pss_detector_insert(d, 7) == PSS_OK);
    }
    pss_report* r = nullptr;
    REQUIRE(pss_detector_query(d, &r) == PSS_OK);
    REQUIRE(pss_report_size(r) == 2);
    std::uint64_t flow = 0, f = 0, p = 0;
    int ps = -1;
    REQUIRE(pss_report_get(r, 0, &flow, &f, &p, &ps) == PSS_OK);
    CHECK(flow == 7);
    CHECK(f == 8);
    CHECK(p == 4);
    CHECK(ps == 0);
    REQUIRE(pss_report_get(r, 1, &flow, &f, &p, &ps) == PSS_OK);
    CHECK(flow == 42);
    CHECK(f == 5);
    CHECK(ps == 1);
    CHECK(pss_report_get(r, 2, &flow, &f, &p, &ps) == PSS_ERR_INVALID_ARGUMENT);
    pss_report_free(r);

    char* dump = nullptr;
    REQUIRE(pss_detector_dump(d, &dump) == PSS_OK);
    CHECK_FALSE(take(dump).empty());
    pss_detector_free(d);
}

TEST_CASE("trace synthesis, save and load") {
    pss_trace* t = nullptr;
    REQUIRE(pss_trace_synthesize(model, 3, &t) == PSS_OK);
    const auto n = pss_trace_size(t);
    CHECK(n > 0);
    CHECK(pss_trace_windows(t) <= 120);
    REQUIRE(pss_trace_save(t, "capi_trace.csv") == PSS_OK);
    pss_trace* back = nullptr;
    REQUIRE(pss_trace_load("capi_trace.csv", 0, &back) == PSS_OK);
    CHECK(pss_trace_size(back) == n);

    pss_detector* a = nullptr;
    pss_detector* b = nullptr;
    REQUIRE(pss_detector_create(R"({"memory_kb":4,"p0":20})", &a) == PSS_OK);
    REQUIRE(pss_detector_create(R"({"memory_kb":4,"p0":20})", &b) == PSS_OK);
    CHECK(pss_detector_feed(a, t) == PSS_OK);
    CHECK(pss_detector_feed(b, back) == PSS_OK);
    char* da = nullptr;
    char* db = nullptr;
    pss_detector_dump(a, &da);
    pss_detector_dump(b, &db);
    CHECK(take(da) == take(db));
    pss_detector_free(a);
    pss_detector_free(b);
    pss_trace_free(back);
    pss_trace_free(t);
    std::remove("capi_trace.csv");
}

TEST_CASE("experiments through the C API") {
    pss_trace* t = nullptr;
    REQUIRE(pss_trace_synthesize(model, 3, &t) == PSS_OK);

    char* metrics = nullptr;
    char* dump = nullptr;
    REQUIRE(pss_run(R"({"detector":"exact","p0":20,"throughput":false})", t, &metrics, &dump) == PSS_OK);
    const auto m = json::parse(take(metrics));
    CHECK(m["metrics"]["f1"] == 1.0);
    CHECK_FALSE(take(dump).empty());

    char* csv = nullptr;
    char* js = nullptr;
    REQUIRE(pss_sweep(R"({"base":{"throughput":false,"p0":20},"memory_kb":[2,4,8],"p0":[20,30,40,50,60]})", t, 2,
                      &csv, &js) == PSS_OK);
    const auto table = take(csv);
    CHECK(std::count(table.begin(), table.end(), '\n') == 16);
    CHECK(json::parse(take(js))["rows"].size() == 15);
    CHECK(pss_sweep("{}", t, 1, nullptr, nullptr) == PSS_OK);

    char* pers = nullptr;
    char* dens = nullptr;
    REQUIRE(pss_dist(t, &pers, &dens) == PSS_OK);
    CHECK(take(pers).rfind("bin_low,bin_high,count", 0) == 0);
    CHECK(take(dens).rfind("bin_low,bin_high,count", 0) == 0);
    pss_trace_free(t);

    REQUIRE(pss_synth(model, 5, "capi_synth.csv", "capi_synth.json") == PSS_OK);
    std::ifstream side("capi_synth.json");
    CHECK(json::parse(side)["planted_flows"].size() == 10);
    std::remove("capi_synth.csv");
    std::remove("capi_synth.json");
    CHECK(pss_synth(model, 5, "/nonexistent/dir/t.csv", "/nonexistent/dir/t.json") == PSS_ERR_IO);

    char* report = nullptr;
    int pass = -1;
    REQUIRE(pss_theory(R"({"trials":500,"ejection_trials":5000,"max_windows":100})", &report, &pass) == PSS_OK);
    CHECK(pass == 1);
    CHECK(json::parse(take(report))["pass"] == true);
    CHECK(pss_theory(R"({"lambda":0})", &report, &pass) == PSS_ERR_INVALID_ARGUMENT);
}
