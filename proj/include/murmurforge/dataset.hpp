#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "murmurforge/prime_basis.hpp"

namespace murmurforge {

// ---------------------------------------------------------------------------
// Origin tags
// ---------------------------------------------------------------------------

/// Object types that give rise to the stored L-functions.
enum class Origin : std::uint8_t { CMF = 0, ECQ, ART, ECNF, BMF, HMF, DIR, G2Q };

inline constexpr std::size_t kOriginCount = 8;
inline constexpr std::array<std::string_view, kOriginCount> kOriginNames = {
    "CMF", "ECQ", "ART", "ECNF", "BMF", "HMF", "DIR", "G2Q"};

inline std::string_view origin_name(Origin o) {
    return kOriginNames[static_cast<std::size_t>(o)];
}

inline std::optional<Origin> origin_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kOriginCount; ++i)
        if (kOriginNames[i] == name) return static_cast<Origin>(i);
    return std::nullopt;
}

/// Small set of origin tags, kept in the canonical tag order when listed.
class OriginSet {
public:
    OriginSet() = default;
    OriginSet(std::initializer_list<Origin> tags) {
        for (Origin o : tags) insert(o);
    }

    void insert(Origin o) { bits_ |= bit(o); }
    bool contains(Origin o) const { return (bits_ & bit(o)) != 0; }
    bool empty() const { return bits_ == 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (std::uint8_t b = bits_; b; b &= b - 1) ++n;
        return n;
    }
    std::uint8_t bits() const { return bits_; }

    bool intersects(OriginSet other) const { return (bits_ & other.bits_) != 0; }
    bool contains_all(OriginSet other) const { return (bits_ & other.bits_) == other.bits_; }

    std::vector<Origin> to_vector() const {
        std::vector<Origin> out;
        for (std::size_t i = 0; i < kOriginCount; ++i)
            if (bits_ & (1u << i)) out.push_back(static_cast<Origin>(i));
        return out;
    }

    /// Semicolon-joined tag list; empty set gives the empty string.
    std::string to_string() const {
        std::string out;
        for (Origin o : to_vector()) {
            if (!out.empty()) out += ';';
            out += origin_name(o);
        }
        return out;
    }

    /// Parses a semicolon-joined tag list. Unknown or empty tags are rejected.
    static OriginSet parse(std::string_view text) {
        OriginSet set;
        if (text.empty()) return set;
        std::size_t pos = 0;
        for (;;) {
            const std::size_t next = text.find(';', pos);
            const std::string_view tok = next == std::string_view::npos
                                              ? text.substr(pos)
                                              : text.substr(pos, next - pos);
            if (tok.empty())
                throw std::invalid_argument("empty origin tag in '" + std::string(text) + "'");
            auto o = origin_from_name(tok);
            if (!o) throw std::invalid_argument("unknown origin tag '" + std::string(tok) + "'");
            set.insert(*o);
            if (next == std::string_view::npos) break;
            pos = next + 1;
        }
        return set;
    }

    bool operator==(const OriginSet&) const = default;

private:
    static std::uint8_t bit(Origin o) {
        return static_cast<std::uint8_t>(1u << static_cast<std::uint8_t>(o));
    }
    std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Records and validation
// ---------------------------------------------------------------------------

/// One rational L-function: metadata plus the 168 integer coefficients a_p
/// in the arithmetic normalization, aligned with PrimeBasis.
struct LFunctionRecord {
    std::string label;
    int degree = 1;                  // d
    int weight = 0;                  // w
    std::int64_t conductor = 1;      // N
    int order = 0;                   // r, vanishing order at the central point
    OriginSet origins;
    std::vector<std::int64_t> ap;
};

/// Whether a record was produced by this library or ingested from an
/// external export. External records keep coefficient-bound violations as
/// warnings: exports can carry bad-prime Euler factors that exceed the
/// naive bound.
enum class Provenance { Generated, External };

struct Violation {
    std::string field;
    std::optional<int> prime;
    std::string message;
};

struct ValidationResult {
    std::vector<Violation> errors;
    std::vector<Violation> warnings;
    bool ok() const { return errors.empty(); }
};

namespace detail {
// p^w, saturating far above any representable coefficient bound.
inline unsigned __int128 ipow_sat(std::int64_t base, int exp) {
    const unsigned __int128 cap = (unsigned __int128)1 << 100;
    unsigned __int128 r = 1;
    for (int i = 0; i < exp; ++i) {
        r *= (unsigned __int128)base;
        if (r > cap) return cap;
    }
    return r;
}
} // namespace detail

/// Checks a record against the basis. The coefficient bound
/// |a_p| <= d * p^(w/2) is tested exactly as a_p^2 <= d^2 * p^w in wide
/// integers. Violations are data, not exceptions.
inline ValidationResult validate(const LFunctionRecord& rec, const PrimeBasis& basis,
                                 Provenance provenance = Provenance::Generated) {
    ValidationResult res;
    auto err = [&](std::string field, std::string msg, std::optional<int> p = std::nullopt) {
        res.errors.push_back({std::move(field), p, std::move(msg)});
    };

    if (rec.label.empty()) err("label", "label is empty");
    if (rec.degree < 1) err("degree", "degree must be positive");
    if (rec.weight < 0) err("weight", "weight must be non-negative");
    if (rec.conductor < 1) err("conductor", "conductor must be positive");
    if (rec.order < 0) err("order", "order must be non-negative");

    if (rec.ap.size() != basis.size()) {
        err("length", "ap has length " + std::to_string(rec.ap.size()) + ", expected " +
                          std::to_string(basis.size()));
        return res;
    }
    if (rec.degree < 1 || rec.weight < 0) return res;

    const unsigned __int128 d2 = (unsigned __int128)rec.degree * (unsigned __int128)rec.degree;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const int p = basis[i];
        const std::int64_t a = rec.ap[i];
        const unsigned __int128 lhs =
            (unsigned __int128)(a < 0 ? -(unsigned long long)a : (unsigned long long)a) *
            (unsigned __int128)(a < 0 ? -(unsigned long long)a : (unsigned long long)a);
        const unsigned __int128 rhs = d2 * detail::ipow_sat(p, rec.weight);
        if (lhs > rhs) {
            Violation v{"ap", p,
                        "|a_" + std::to_string(p) + "| = " + std::to_string(a < 0 ? -a : a) +
                            " exceeds d*p^(w/2)"};
            if (provenance == Provenance::External)
                res.warnings.push_back(std::move(v));
            else
                res.errors.push_back(std::move(v));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Ordered collection of records over a shared basis. Immutable after
/// construction; safe to share across threads read-only.
class Dataset {
public:
    Dataset() = default;

    /// Validates every record and label uniqueness. Throws on any error;
    /// bound warnings from external records are appended to *warnings.
    static Dataset build(PrimeBasis basis, std::vector<LFunctionRecord> records,
                         Provenance provenance = Provenance::Generated,
                         std::vector<std::string>* warnings = nullptr) {
        std::unordered_set<std::string_view> seen;
        seen.reserve(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& rec = records[i];
            if (!seen.insert(rec.label).second)
                throw std::invalid_argument("duplicate label '" + rec.label + "'");
            ValidationResult vr = validate(rec, basis, provenance);
            if (!vr.ok())
                throw std::invalid_argument("record " + std::to_string(i) + " ('" + rec.label +
                                            "'): " + vr.errors.front().field + ": " +
                                            vr.errors.front().message);
            if (warnings)
                for (const auto& w : vr.warnings)
                    warnings->push_back("record '" + rec.label + "': " + w.message);
        }
        Dataset ds;
        ds.basis_ = std::move(basis);
        ds.records_ = std::move(records);
        return ds;
    }

    const PrimeBasis& basis() const { return basis_; }
    std::span<const LFunctionRecord> records() const { return records_; }
    const LFunctionRecord& operator[](std::size_t i) const { return records_[i]; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

private:
    PrimeBasis basis_;
    std::vector<LFunctionRecord> records_;
};

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Conjunction of optional clauses; absent clauses match everything.
struct FilterPredicate {
    std::optional<int> degree;
    std::optional<int> weight;
    std::optional<int> max_order;
    std::optional<int> exact_order;
    OriginSet origins_any;  // empty = no constraint
    OriginSet origins_all;  // empty = no constraint

    bool matches(const LFunctionRecord& rec) const {
        if (degree && rec.degree != *degree) return false;
        if (weight && rec.weight != *weight) return false;
        if (max_order && rec.order > *max_order) return false;
        if (exact_order && rec.order != *exact_order) return false;
        if (!origins_any.empty() && !rec.origins.intersects(origins_any)) return false;
        if (!origins_all.empty() && !rec.origins.contains_all(origins_all)) return false;
        return true;
    }
};

/// Records satisfying every supplied clause, in their original order.
inline Dataset filter(const Dataset& ds, const FilterPredicate& pred) {
    std::vector<LFunctionRecord> kept;
    for (const auto& rec : ds.records())
        if (pred.matches(rec)) kept.push_back(rec);
    // Records were validated when ds was built; External keeps any
    // ingest-time bound irregularities from re-erroring here.
    return Dataset::build(ds.basis(), std::move(kept), Provenance::External);
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Counts along each metadata axis, pairwise origin intersections, and the
/// exclusive counts per distinct origin combination (UpSet-style bars).
struct DatasetSummary {
    std::size_t total = 0;
    std::map<int, std::size_t> by_order;
    std::map<int, std::size_t> by_degree;
    std::map<int, std::size_t> by_weight;
    std::array<std::size_t, kOriginCount> by_origin{};
    std::array<std::array<std::size_t, kOriginCount>, kOriginCount> origin_intersections{};
    std::map<std::uint8_t, std::size_t> by_origin_combination;

    std::size_t order_count(int r) const {
        auto it = by_order.find(r);
        return it == by_order.end() ? 0 : it->second;
    }
    std::size_t intersection(Origin a, Origin b) const {
        return origin_intersections[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
};

inline DatasetSummary summarize(const Dataset& ds) {
    DatasetSummary s;
    s.total = ds.size();
    for (const auto& rec : ds.records()) {
        ++s.by_order[rec.order];
        ++s.by_degree[rec.degree];
        ++s.by_weight[rec.weight];
        ++s.by_origin_combination[rec.origins.bits()];
        const auto tags = rec.origins.to_vector();
        for (Origin a : tags) {
            ++s.by_origin[static_cast<std::size_t>(a)];
            for (Origin b : tags)
                if (a != b) ++s.origin_intersections[static_cast<std::size_t>(a)]
                                                    [static_cast<std::size_t>(b)];
        }
    }
    return s;
}

} // namespace murmurforge
