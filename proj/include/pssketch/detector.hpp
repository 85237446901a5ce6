#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "pssketch/sketch.hpp"
#include "pssketch/trace.hpp"

namespace pss {

/// Common surface of every PS-flow detector the harness compares.
class Detector {
public:
    virtual ~Detector() = default;

    virtual std::string_view name() const = 0;
    virtual void new_window() = 0;
    virtual void insert(FlowKey e) = 0;
    virtual ReportSet query() const = 0;
    virtual std::uint64_t memory_bits() const = 0;
    virtual std::string dump() const = 0;
};

/// Inserts every record, calling new_window() once per window boundary crossed.
void feed(Detector& detector, const WindowedTrace& trace);

class PSSketchDetector final : public Detector {
public:
    explicit PSSketchDetector(const SketchConfig& config) : sketch_(config) {}

    std::string_view name() const override { return "pssketch"; }
    void new_window() override { sketch_.new_window(); }
    void insert(FlowKey e) override { sketch_.insert(e); }
    ReportSet query() const override { return sketch_.query(); }
    std::uint64_t memory_bits() const override { return pss::memory_bits(sketch_.config()); }
    std::string dump() const override { return sketch_.dump(); }

    const PSSketch& sketch() const { return sketch_; }
    PSSketch& sketch() { return sketch_; }

private:
    PSSketch sketch_;
};

/// Exact counting; reports every flow with p >= p0.
class ExactDetector final : public Detector {
public:
    explicit ExactDetector(const Criterion& criterion) : criterion_(criterion) {}

    std::string_view name() const override { return "exact"; }
    void new_window() override { ++window_; }
    void insert(FlowKey e) override;
    ReportSet query() const override;
    std::uint64_t memory_bits() const override;
    std::string dump() const override;

private:
    struct Acc {
        FlowStats stats;
        std::uint64_t last_window;
    };
    Criterion criterion_;
    std::uint64_t window_ = 0;
    std::unordered_map<FlowKey, Acc> flows_;
};

}  // namespace pss
