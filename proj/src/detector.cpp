#include "pssketch/detector.hpp"

#include <algorithm>
#include <sstream>

namespace pss {

void feed(Detector& detector, const WindowedTrace& trace) {
    std::uint64_t window = 0;
    for (const auto& r : trace.records) {
        for (; window < r.window; ++window) detector.new_window();
        detector.insert(r.flow);
    }
}

void ExactDetector::insert(FlowKey e) {
    auto [it, inserted] = flows_.try_emplace(e, Acc{{0, 0}, window_});
    auto& a = it->second;
    ++a.stats.frequency;
    if (inserted || a.last_window != window_) {
        ++a.stats.persistence;
        a.last_window = window_;
    }
}

ReportSet ExactDetector::query() const {
    ReportSet rs;
    for (const auto& [key, a] : flows_) {
        if (a.stats.persistence >= criterion_.p0) {
            rs.flows.push_back({key, a.stats, criterion_.admits(a.stats)});
        }
    }
    rs.sort();
    return rs;
}

std::uint64_t ExactDetector::memory_bits() const {
    // id + two 32-bit counters + last window per tracked flow
    return flows_.size() * (64 + 32 + 32 + 32);
}

std::string ExactDetector::dump() const {
    std::ostringstream os;
    os << "exact flows=" << flows_.size() << '\n';
    for (const auto& f : query().flows) {
        os << "FLOW id=" << f.key << " f=" << f.stats.frequency << " p=" << f.stats.persistence << '\n';
    }
    return os.str();
}

}  // namespace pss
