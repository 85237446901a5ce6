#include "pssketch/sketch.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace pss {

void WidthConfig::validate() const {
    auto in = [](unsigned v, unsigned lo, unsigned hi) { return v >= lo && v <= hi; };
    if (!in(fingerprint_bits, 1, 32)) fail(ErrorCode::Config, "fingerprint width must be in [1,32]");
    if (!in(freq_bits, 1, 16)) fail(ErrorCode::Config, "frequency counter width must be in [1,16]");
    if (!in(pers_bits, 1, 16)) fail(ErrorCode::Config, "persistence counter width must be in [1,16]");
    if (!in(freq_overflow_bits, 1, 16) || !in(pers_overflow_bits, 1, 16)) {
        fail(ErrorCode::Config, "overflow counter widths must be in [1,16]");
    }
    if (fingerprint_bits + freq_bits + pers_bits + flag_bits > 64) {
        fail(ErrorCode::Config, "competition entry does not fit in 64 bits");
    }
    if (pers_overflow_threshold != 0 &&
        (pers_overflow_threshold < 2 || pers_overflow_threshold > (1u << pers_bits))) {
        fail(ErrorCode::Config, "persistence overflow threshold must be in [2, 2^pers_bits]");
    }
}

void SketchConfig::validate() const {
    if (buckets < 1 || bucket_width < 1 || protection_capacity < 1) {
        fail(ErrorCode::Config, "X, Y and R must all be >= 1");
    }
    if (bucket_width > 0x7fffffff) fail(ErrorCode::Config, "bucket width too large");
    widths.validate();
    criterion.validate();
}

std::uint64_t memory_bits(const SketchConfig& c) {
    const auto& w = c.widths;
    const std::uint64_t entry = w.fingerprint_bits + w.freq_bits + w.pers_bits + WidthConfig::flag_bits;
    const std::uint64_t prot = WidthConfig::id_bits + w.freq_overflow_bits + w.pers_overflow_bits;
    return static_cast<std::uint64_t>(c.buckets) * c.bucket_width * entry +
           static_cast<std::uint64_t>(c.protection_capacity) * prot;
}

StorableMax max_storable(const WidthConfig& w) {
    auto ones = [](unsigned bits) { return (std::uint64_t{1} << bits) - 1; };
    return {ones(w.freq_overflow_bits) * ones(w.freq_bits), ones(w.pers_overflow_bits) * ones(w.pers_bits)};
}

FlowStats reconstruct(std::uint64_t f_of, std::uint64_t f_cl, std::uint64_t p_of, std::uint64_t p_cl,
                      const WidthConfig& w) {
    return {f_of * w.freq_limit() + f_cl, p_of * w.pers_limit() + p_cl};
}

const char* to_string(InsertOutcome o) {
    switch (o) {
        case InsertOutcome::Updated: return "updated";
        case InsertOutcome::Created: return "created";
        case InsertOutcome::Replaced: return "replaced";
        case InsertOutcome::Dropped: return "dropped";
        case InsertOutcome::Eliminated: return "eliminated";
        case InsertOutcome::Protected: return "protected";
        case InsertOutcome::Pruned: return "pruned";
    }
    return "?";
}

std::set<FlowKey> ReportSet::ps_keys() const {
    std::set<FlowKey> out;
    for (const auto& f : flows) {
        if (f.ps) out.insert(f.key);
    }
    return out;
}

const ReportedFlow* ReportSet::find(FlowKey key) const {
    auto it = std::lower_bound(flows.begin(), flows.end(), key,
                               [](const ReportedFlow& f, FlowKey k) { return f.key < k; });
    return it != flows.end() && it->key == key ? &*it : nullptr;
}

void ReportSet::sort() {
    std::sort(flows.begin(), flows.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
}

PSSketch::PSSketch(const SketchConfig& config) : config_(config), rng_(config.rng_seed) {
    config_.validate();
    const auto& w = config_.widths;
    auto mask = [](unsigned bits) { return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1; };
    layout_.fp_mask = mask(w.fingerprint_bits);
    layout_.f_mask = mask(w.freq_bits);
    layout_.p_mask = mask(w.pers_bits);
    layout_.f_shift = w.fingerprint_bits;
    layout_.p_shift = layout_.f_shift + w.freq_bits;
    layout_.w_shift = layout_.p_shift + w.pers_bits;
    layout_.of_shift = layout_.w_shift + 1;
    cells_.assign(config_.buckets * config_.bucket_width, 0);
    protection_.reserve(config_.protection_capacity);
}

CompetitionEntry PSSketch::unpack(std::uint64_t w) const {
    CompetitionEntry e;
    e.fp = static_cast<std::uint32_t>(w & layout_.fp_mask);
    e.f = static_cast<std::uint32_t>((w >> layout_.f_shift) & layout_.f_mask);
    e.p = static_cast<std::uint32_t>((w >> layout_.p_shift) & layout_.p_mask);
    e.seen = (w >> layout_.w_shift) & 1;
    e.protected_ = (w >> layout_.of_shift) & 1;
    return e;
}

std::uint64_t PSSketch::pack(const CompetitionEntry& e) const {
    return (std::uint64_t{e.fp} & layout_.fp_mask) | ((std::uint64_t{e.f} & layout_.f_mask) << layout_.f_shift) |
           ((std::uint64_t{e.p} & layout_.p_mask) << layout_.p_shift) |
           (std::uint64_t{e.seen} << layout_.w_shift) | (std::uint64_t{e.protected_} << layout_.of_shift);
}

std::size_t PSSketch::bucket_of(FlowKey e) const {
    return static_cast<std::size_t>(hash64(e, config_.hash_seed) % config_.buckets);
}

std::uint32_t PSSketch::fingerprint_of(FlowKey e) const {
    // Tag from the high bits, bucket from the residue: independent enough
    // that a tag collision within a bucket has probability ~2^-L_fp.
    const auto h = hash64(e, config_.hash_seed);
    const auto fp = static_cast<std::uint32_t>(h >> (64 - config_.widths.fingerprint_bits));
    return fp == 0 ? 1 : fp;
}

CompetitionEntry PSSketch::entry(std::size_t bucket, std::size_t slot) const {
    return unpack(word(bucket * config_.bucket_width + slot));
}

const ProtectionEntry* PSSketch::protection(FlowKey id) const {
    auto it = protection_.find(id);
    return it == protection_.end() ? nullptr : &it->second;
}

void PSSketch::new_window() {
    // Bulk clear of flag W; compiles to a straight vector loop.
    const std::uint64_t keep = ~(std::uint64_t{1} << layout_.w_shift);
    for (auto& w : cells_) w &= keep;
    for (auto& [id, pe] : protection_) pe.window_fof_increments = 0;
    ++window_;
}

BucketScan PSSketch::scan(std::size_t bucket, std::uint32_t fp) const {
    BucketScan s;
    const std::size_t base = bucket * config_.bucket_width;
    const int width = static_cast<int>(config_.bucket_width);
    for (int i = 0; i < width; ++i) {
        const auto w = cells_[base + i];
        const auto efp = static_cast<std::uint32_t>(w & layout_.fp_mask);
        if (efp == 0) {
            if (s.first_empty < 0) s.first_empty = i;
            continue;
        }
        if (efp == fp) s.match = i;
        if (!((w >> layout_.of_shift) & 1)) {
            const int p = static_cast<int>((w >> layout_.p_shift) & layout_.p_mask);
            if (s.min_p < 0 || p < s.min_p) {
                s.min_p = p;
                s.min_slot = i;
            }
        }
    }
    return s;
}

BucketScan PSSketch::scan_three_pass(std::size_t bucket, std::uint32_t fp) const {
    BucketScan s;
    const int width = static_cast<int>(config_.bucket_width);
    for (int i = 0; i < width; ++i) {
        if (entry(bucket, i).fp == fp) {
            s.match = i;
            break;
        }
    }
    for (int i = 0; i < width; ++i) {
        if (entry(bucket, i).empty()) {
            s.first_empty = i;
            break;
        }
    }
    for (int i = 0; i < width; ++i) {
        const auto e = entry(bucket, i);
        if (e.empty() || e.protected_) continue;
        if (s.min_slot < 0 || static_cast<int>(e.p) < s.min_p) {
            s.min_slot = i;
            s.min_p = static_cast<int>(e.p);
        }
    }
    return s;
}

InsertOutcome PSSketch::insert(FlowKey e) {
    const std::size_t bucket = bucket_of(e);
    const std::uint32_t fp = fingerprint_of(e);
    const BucketScan s = scan(bucket, fp);
    const std::size_t base = bucket * config_.bucket_width;
    if (s.match >= 0) return update_entry(e, base + s.match);
    if (s.first_empty >= 0) {
        word(base + s.first_empty) = pack({fp, 1, 1, true, false});
        return InsertOutcome::Created;
    }
    return contend(bucket, s, fp);
}

InsertOutcome PSSketch::contend(std::size_t bucket, const BucketScan& s, std::uint32_t fp) {
    // A protected flow cannot be replaced.
    if (s.min_slot < 0) return InsertOutcome::Dropped;
    const double u = rng_.uniform();
    if (u * s.min_p >= 1.0) return InsertOutcome::Dropped;
    word(bucket * config_.bucket_width + s.min_slot) = pack({fp, 1, 1, true, false});
    return InsertOutcome::Replaced;
}

InsertOutcome PSSketch::update_entry(FlowKey e, std::size_t slot) {
    auto en = unpack(word(slot));
    if (!en.seen) {
        ++en.p;
        en.seen = true;
    }
    ++en.f;
    const auto f_limit = config_.widths.freq_limit();
    const auto p_limit = config_.widths.pers_limit();

    if (!en.protected_) {
        if (en.f >= f_limit) {
            // f overflowed before p: density already exceeds 2^L_f / p_limit.
            word(slot) = 0;
            emit(SketchEvent::Kind::Eliminated, 0, {en.f, en.p}, slot);
            return InsertOutcome::Eliminated;
        }
        if (en.p >= p_limit) {
            en.p = 0;
            en.protected_ = true;
            word(slot) = pack(en);
            protect(e, slot, Overflow::Persistence);
            return InsertOutcome::Protected;
        }
        word(slot) = pack(en);
        return InsertOutcome::Updated;
    }

    const bool p_over = en.p >= p_limit;
    const bool f_over = en.f >= f_limit;
    if (p_over) en.p = 0;
    if (f_over) en.f = 0;
    word(slot) = pack(en);
    if (!p_over && !f_over) return InsertOutcome::Updated;

    auto owner = owner_.find(slot);
    if (owner == owner_.end()) fail(ErrorCode::Internal, "protected CL entry without PL owner");
    const FlowKey id = owner->second;
    if (p_over) {
        if (protect(id, slot, Overflow::Persistence) == ReportOutcome::Saturated) {
            return InsertOutcome::Pruned;
        }
    }
    if (f_over) {
        const auto r = protect(id, slot, Overflow::Frequency);
        if (r == ReportOutcome::PrunedSelf || r == ReportOutcome::Saturated) return InsertOutcome::Pruned;
    }
    return InsertOutcome::Protected;
}

FlowStats PSSketch::stats_of(const ProtectionEntry& pe) const {
    const auto en = unpack(word(pe.slot));
    return reconstruct(pe.f_of, en.f, pe.p_of, en.p, config_.widths);
}

void PSSketch::emit(SketchEvent::Kind kind, FlowKey key, const FlowStats& stats, std::size_t slot) {
    if (observer_) observer_({kind, key, stats, slot});
}

void PSSketch::remove_protected(FlowKey id) {
    auto it = protection_.find(id);
    word(it->second.slot) = 0;
    owner_.erase(it->second.slot);
    protection_.erase(it);
}

ReportOutcome PSSketch::protect(FlowKey e, std::size_t slot, Overflow which) {
    auto it = protection_.find(e);
    const auto& w = config_.widths;

    if (which == Overflow::Persistence && it == protection_.end()) {
        ReportOutcome outcome = ReportOutcome::Created;
        if (protection_.size() >= config_.protection_capacity) {
            // Evict the densest protected flow; ties go to the smallest id.
            const ProtectionEntry* victim = nullptr;
            FlowStats victim_stats;
            for (const auto& [id, pe] : protection_) {
                const auto s = stats_of(pe);
                if (victim == nullptr) {
                    victim = &pe;
                    victim_stats = s;
                    continue;
                }
                const auto lhs = static_cast<unsigned __int128>(s.frequency) * victim_stats.persistence;
                const auto rhs = static_cast<unsigned __int128>(victim_stats.frequency) * s.persistence;
                if (lhs > rhs || (lhs == rhs && id < victim->id)) {
                    victim = &pe;
                    victim_stats = s;
                }
            }
            const FlowKey victim_id = victim->id;
            emit(SketchEvent::Kind::Evicted, victim_id, victim_stats, victim->slot);
            remove_protected(victim_id);
            outcome = ReportOutcome::EvictedOther;
        }
        protection_.emplace(e, ProtectionEntry{e, 0, 1, 0, slot});
        owner_[slot] = e;
        emit(SketchEvent::Kind::Protected, e, stats_of(protection_.at(e)), slot);
        return outcome;
    }
    if (it == protection_.end()) fail(ErrorCode::Internal, "frequency overflow reported for unprotected flow");

    auto& pe = it->second;
    auto saturate = [&](FlowStats s) {
        emit(SketchEvent::Kind::Saturated, e, s, pe.slot);
        auto& r = retired_[e];
        r.frequency += s.frequency;
        r.persistence += s.persistence;
        remove_protected(e);
        return ReportOutcome::Saturated;
    };

    if (which == Overflow::Persistence) {
        if (pe.p_of >= w.pers_overflow_max()) {
            auto s = stats_of(pe);
            s.persistence += w.pers_limit();
            return saturate(s);
        }
        ++pe.p_of;
        return ReportOutcome::Updated;
    }

    if (config_.burst_elimination && pe.window_fof_increments >= 2) return ReportOutcome::BurstCapped;
    if (pe.f_of >= w.freq_overflow_max()) {
        auto s = stats_of(pe);
        s.frequency += w.freq_limit();
        return saturate(s);
    }
    ++pe.f_of;
    ++pe.window_fof_increments;
    if (config_.prune && pe.f_of > pe.p_of) {
        emit(SketchEvent::Kind::Pruned, e, stats_of(pe), pe.slot);
        remove_protected(e);
        return ReportOutcome::PrunedSelf;
    }
    return ReportOutcome::Updated;
}

ReportSet PSSketch::query() const {
    ReportSet rs;
    rs.flows.reserve(protection_.size() + retired_.size());
    for (const auto& [id, pe] : protection_) {
        const auto en = unpack(word(pe.slot));
        auto owner = owner_.find(pe.slot);
        if (!en.protected_ || owner == owner_.end() || owner->second != id) {
            fail(ErrorCode::Internal, "protected flow has no matching CL entry");
        }
        auto s = reconstruct(pe.f_of, en.f, pe.p_of, en.p, config_.widths);
        if (auto r = retired_.find(id); r != retired_.end()) {
            s.frequency += r->second.frequency;
            s.persistence += r->second.persistence;
        }
        rs.flows.push_back({id, s, false});
    }
    for (const auto& [id, s] : retired_) {
        if (!protection_.count(id)) rs.flows.push_back({id, s, false});
    }
    for (auto& f : rs.flows) f.ps = config_.criterion.admits(f.stats);
    rs.sort();
    return rs;
}

std::string PSSketch::dump() const {
    std::ostringstream os;
    os << "pssketch window=" << window_ << " X=" << config_.buckets << " Y=" << config_.bucket_width
       << " R=" << config_.protection_capacity << '\n';
    for (std::size_t b = 0; b < config_.buckets; ++b) {
        for (std::size_t s = 0; s < config_.bucket_width; ++s) {
            const auto e = entry(b, s);
            if (e.empty()) continue;
            os << "CL " << b << ' ' << s << " fp=" << e.fp << " f=" << e.f << " p=" << e.p
               << " flags=" << int(e.seen) << int(e.protected_) << '\n';
        }
    }
    std::vector<const ProtectionEntry*> pl;
    for (const auto& [id, pe] : protection_) pl.push_back(&pe);
    std::sort(pl.begin(), pl.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* pe : pl) {
        os << "PL id=" << pe->id << " f_of=" << pe->f_of << " p_of=" << pe->p_of << '\n';
    }
    for (const auto& [id, s] : retired_) {
        os << "RET id=" << id << " f=" << s.frequency << " p=" << s.persistence << '\n';
    }
    return os.str();
}

void PSSketch::check_invariants() const {
    auto violated = [](const std::string& what) { fail(ErrorCode::Internal, "invariant violated: " + what); };
    const auto& w = config_.widths;
    const auto Y = config_.bucket_width;
    std::size_t protected_slots = 0;
    for (std::size_t b = 0; b < config_.buckets; ++b) {
        std::set<std::uint32_t> seen_fps;
        for (std::size_t s = 0; s < Y; ++s) {
            const std::size_t slot = b * Y + s;
            const auto raw = word(slot);
            const auto e = unpack(raw);
            const std::string where = "slot " + std::to_string(slot);
            if (e.empty()) {
                if (raw != 0) violated(where + ": empty entry with nonzero fields");
                continue;
            }
            if (raw != pack(e)) violated(where + ": bits outside the packed fields");
            if (e.f >= w.freq_limit()) violated(where + ": f out of range");
            if (e.p >= w.pers_limit()) violated(where + ": p out of range");
            if (!seen_fps.insert(e.fp).second) violated(where + ": duplicate fingerprint in bucket");
            auto owner = owner_.find(slot);
            if (e.protected_) {
                ++protected_slots;
                if (owner == owner_.end()) violated(where + ": OF set without PL entry");
                auto pe = protection_.find(owner->second);
                if (pe == protection_.end() || pe->second.slot != slot) violated(where + ": owner mismatch");
            } else {
                if (owner != owner_.end()) violated(where + ": PL owner on unprotected entry");
                if (e.p < 1) violated(where + ": unprotected entry with p = 0");
            }
        }
    }
    if (protection_.size() > config_.protection_capacity) violated("PL over capacity");
    if (protection_.size() != protected_slots || owner_.size() != protected_slots) {
        violated("PL membership does not match OF flags");
    }
    for (const auto& [id, pe] : protection_) {
        if (pe.id != id) violated("PL key mismatch");
        if (pe.f_of > w.freq_overflow_max() || pe.p_of > w.pers_overflow_max()) violated("PL counter width");
        if (pe.p_of < 1) violated("PL entry with p_of = 0");
        if (config_.burst_elimination && pe.window_fof_increments > 2) violated("burst cap exceeded");
        if (pe.slot / Y != bucket_of(id) || unpack(word(pe.slot)).fp != fingerprint_of(id)) {
            violated("PL entry slot does not hold its flow");
        }
        if (config_.prune && pe.f_of > pe.p_of) violated("unpruned entry with f_of > p_of");
    }
}

bool PSSketch::operator==(const PSSketch& o) const {
    return cells_ == o.cells_ && protection_ == o.protection_ && owner_ == o.owner_ && retired_ == o.retired_ &&
           rng_ == o.rng_ && window_ == o.window_;
}

}  // namespace pss
