#include "pssketch/trace.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

namespace pss {

void Criterion::validate() const {
    if (p0 < 1) fail(ErrorCode::Config, "persistence threshold p0 must be >= 1");
    if (!(d0 >= 1.0)) fail(ErrorCode::Config, "density threshold d0 must be >= 1");
}

bool Criterion::admits(const FlowStats& s) const {
    if (s.persistence == 0 || s.persistence < p0) return false;
    // f <= d0 * p
    return static_cast<double>(s.frequency) <= d0 * static_cast<double>(s.persistence);
}

WindowedTrace partition_windows(std::span<const FlowKey> events, std::uint64_t window_size) {
    if (window_size == 0) fail(ErrorCode::InvalidArgument, "window size must be >= 1");
    WindowedTrace trace;
    trace.window_size = window_size;
    trace.records.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        trace.records.push_back({events[i], i / window_size});
    }
    return trace;
}

StatsMap exact_stats(const WindowedTrace& trace) {
    struct Acc {
        FlowStats stats;
        std::uint64_t last_window;
    };
    std::unordered_map<FlowKey, Acc> acc;
    acc.reserve(trace.records.size() / 4 + 16);
    for (const auto& r : trace.records) {
        auto [it, inserted] = acc.try_emplace(r.flow, Acc{{0, 0}, r.window});
        auto& a = it->second;
        ++a.stats.frequency;
        if (inserted || a.last_window != r.window) {
            ++a.stats.persistence;
            a.last_window = r.window;
        }
    }
    StatsMap out;
    out.reserve(acc.size());
    for (const auto& [key, a] : acc) out.emplace(key, a.stats);
    return out;
}

std::set<FlowKey> answer_set(const StatsMap& stats, const Criterion& criterion) {
    std::set<FlowKey> out;
    for (const auto& [key, s] : stats) {
        if (criterion.admits(s)) out.insert(key);
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_u64(std::string_view s, std::uint64_t& out, int base = 10) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
    return ec == std::errc() && ptr == s.data() + s.size();
}

FlowKey parse_flow_id(std::string_view s) {
    std::uint64_t v = 0;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        if (parse_u64(s.substr(2), v, 16)) return v;
    } else if (parse_u64(s, v)) {
        return v;
    }
    return hash_token(s);
}

}  // namespace

WindowedTrace read_trace(std::istream& in, std::uint64_t window_size) {
    WindowedTrace trace;
    std::vector<FlowKey> bare;
    enum class Layout { Unknown, Windowed, Bare } layout = Layout::Unknown;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto comma = text.find(',');
        const Layout this_layout = comma == std::string_view::npos ? Layout::Bare : Layout::Windowed;
        if (layout == Layout::Unknown) layout = this_layout;
        if (layout != this_layout) {
            fail(ErrorCode::Io, "line " + std::to_string(line_no) + ": mixed windowed and bare records");
        }
        if (layout == Layout::Bare) {
            bare.push_back(parse_flow_id(text));
            continue;
        }
        auto id = trim(text.substr(0, comma));
        auto win = trim(text.substr(comma + 1));
        std::uint64_t w = 0;
        if (id.empty() || !parse_u64(win, w)) {
            fail(ErrorCode::Io, "line " + std::to_string(line_no) + ": expected flow_id,window");
        }
        if (!trace.records.empty() && w < trace.records.back().window) {
            fail(ErrorCode::Io, "line " + std::to_string(line_no) + ": window index decreases");
        }
        trace.records.push_back({parse_flow_id(id), w});
    }
    if (in.bad()) fail(ErrorCode::Io, "read error");
    if (layout == Layout::Bare) {
        if (window_size == 0) {
            fail(ErrorCode::Config, "trace has no window column; a window size is required");
        }
        return partition_windows(bare, window_size);
    }
    return trace;
}

WindowedTrace load_trace(const std::string& path, std::uint64_t window_size) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open trace '" + path + "'");
    return read_trace(in, window_size);
}

void write_trace(std::ostream& out, const WindowedTrace& trace) {
    std::string buf;
    buf.reserve(1 << 16);
    char tmp[24];
    for (const auto& r : trace.records) {
        buf.append(tmp, std::to_chars(tmp, tmp + sizeof(tmp), r.flow).ptr);
        buf += ',';
        buf.append(tmp, std::to_chars(tmp, tmp + sizeof(tmp), r.window).ptr);
        buf += '\n';
        if (buf.size() > (1 << 16) - 64) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

void save_trace(const std::string& path, const WindowedTrace& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write trace '" + path + "'");
    write_trace(out, trace);
    if (!out) fail(ErrorCode::Io, "write error on '" + path + "'");
}

}  // namespace pss
