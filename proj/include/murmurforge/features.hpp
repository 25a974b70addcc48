#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "murmurforge/dataset.hpp"
#include "murmurforge/linalg.hpp"
#include "murmurforge/parallel.hpp"
#include "murmurforge/prime_basis.hpp"

namespace murmurforge {

/// 168 reals aligned with PrimeBasis.
using FeatureVector = std::array<double, kPrimeCount>;

enum class Normalization { Atilde, Abar };

inline std::string normalization_name(Normalization n) {
    return n == Normalization::Atilde ? "atilde" : "abar";
}

namespace detail {

// Per-weight table of p^(e/2) with e = w-1 or w, computed as
// exp((e/2) * log p) and cached; the same scale is reused across an
// entire dataset pass.
inline const std::array<double, kPrimeCount>& half_power_table(const PrimeBasis& basis, int e) {
    static std::mutex mu;
    static std::unordered_map<int, std::array<double, kPrimeCount>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(e);
    if (it != cache.end()) return it->second;
    std::array<double, kPrimeCount> table{};
    for (std::size_t i = 0; i < basis.size(); ++i)
        table[i] = std::exp(0.5 * e * std::log(static_cast<double>(basis[i])));
    return cache.emplace(e, table).first->second;
}

// Pairwise (tree) summation; accurate and fixed-shape for a given length.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 32) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

} // namespace detail

/// Murmuration-style normalization a_p / p^((w-1)/2); equals raw a_p when
/// w = 1. Entries land in [-d sqrt(p), d sqrt(p)].
inline FeatureVector atilde(const LFunctionRecord& rec, const PrimeBasis& basis) {
    if (rec.ap.size() != basis.size()) throw std::invalid_argument("atilde: ap length mismatch");
    const auto& scale = detail::half_power_table(basis, rec.weight - 1);
    FeatureVector out;
    for (std::size_t i = 0; i < basis.size(); ++i)
        out[i] = static_cast<double>(rec.ap[i]) / scale[i];
    return out;
}

/// Bound-relative normalization a_p / (d * p^(w/2)); entries in [-1, 1]
/// for records satisfying the coefficient bound.
inline FeatureVector abar(const LFunctionRecord& rec, const PrimeBasis& basis) {
    if (rec.ap.size() != basis.size()) throw std::invalid_argument("abar: ap length mismatch");
    const auto& scale = detail::half_power_table(basis, rec.weight);
    const double d = static_cast<double>(rec.degree);
    FeatureVector out;
    for (std::size_t i = 0; i < basis.size(); ++i)
        out[i] = static_cast<double>(rec.ap[i]) / (d * scale[i]);
    return out;
}

inline FeatureVector normalized(const LFunctionRecord& rec, const PrimeBasis& basis,
                                Normalization norm) {
    return norm == Normalization::Atilde ? atilde(rec, basis) : abar(rec, basis);
}

/// Feature matrix: row i is abar of record i.
inline DenseMatrix pointcloud(const Dataset& ds) {
    DenseMatrix X(ds.size(), kPrimeCount);
    parallel_blocks(ds.size(), 1024, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const FeatureVector v = abar(ds[i], ds.basis());
            auto row = X.row(i);
            for (std::size_t j = 0; j < kPrimeCount; ++j) row[j] = v[j];
        }
    });
    return X;
}

/// Mestre-Nagao sum S(B) = (1/log B) * sum_{p < B} a_p log(p) / p over the
/// basis primes, in the arithmetic normalization.
inline double mestre_nagao(const LFunctionRecord& rec, const PrimeBasis& basis, double B) {
    if (!(B > 2.0 && B <= 1000.0))
        throw std::invalid_argument("mestre_nagao: B must satisfy 2 < B <= 1000");
    if (rec.ap.size() != basis.size()) throw std::invalid_argument("mestre_nagao: ap length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const double p = static_cast<double>(basis[i]);
        if (!(p < B)) break;
        sum += static_cast<double>(rec.ap[i]) * std::log(p) / p;
    }
    return sum / std::log(B);
}

/// Per-prime average of a normalized coefficient, grouped by vanishing
/// order. Only orders present in the dataset appear.
struct MurmurationTable {
    Normalization normalization = Normalization::Atilde;
    std::vector<int> primes;          // the basis
    std::vector<int> classes;         // sorted vanishing orders present
    DenseMatrix means;                // classes.size() x primes.size()
    std::vector<std::size_t> counts;  // per class
};

inline MurmurationTable murmuration_table(const Dataset& ds, Normalization norm) {
    if (ds.empty()) throw std::invalid_argument("murmuration_table: empty dataset");
    const PrimeBasis& basis = ds.basis();

    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.size(); ++i) groups[ds[i].order].push_back(i);

    MurmurationTable table;
    table.normalization = norm;
    table.primes.assign(basis.primes().begin(), basis.primes().end());
    table.means = DenseMatrix(groups.size(), basis.size());

    std::size_t c = 0;
    std::vector<double> column;
    for (const auto& [order, rows] : groups) {
        table.classes.push_back(order);
        table.counts.push_back(rows.size());
        column.resize(rows.size());
        for (std::size_t j = 0; j < basis.size(); ++j) {
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const LFunctionRecord& rec = ds[rows[k]];
                const auto& scale =
                    detail::half_power_table(basis, norm == Normalization::Atilde
                                                        ? rec.weight - 1
                                                        : rec.weight);
                const double denom = norm == Normalization::Atilde
                                         ? scale[j]
                                         : static_cast<double>(rec.degree) * scale[j];
                column[k] = static_cast<double>(rec.ap[j]) / denom;
            }
            table.means(c, j) = detail::pairwise_sum(column) / static_cast<double>(rows.size());
        }
        ++c;
    }
    return table;
}

// ---------------------------------------------------------------------------
// Murmuration CSV: header "p,order_<r0>,...", one row per prime, then a
// trailing comment "# counts: r0=...,r1=...".
// ---------------------------------------------------------------------------

inline void write_murmuration_csv(const MurmurationTable& table, std::ostream& out) {
    out << "p";
    for (int r : table.classes) out << ",order_" << r;
    out << "\n";
    char buf[40];
    for (std::size_t j = 0; j < table.primes.size(); ++j) {
        out << table.primes[j];
        for (std::size_t c = 0; c < table.classes.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", table.means(c, j));
            out << ',' << buf;
        }
        out << "\n";
    }
    out << "# counts:";
    for (std::size_t c = 0; c < table.classes.size(); ++c)
        out << (c == 0 ? " " : ",") << 'r' << table.classes[c] << '=' << table.counts[c];
    out << "\n";
}

inline MurmurationTable read_murmuration_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::size_t pos = 0;
        for (;;) {
            const std::size_t next = line.find(',', pos);
            cells.push_back(line.substr(pos, next == std::string::npos ? std::string::npos
                                                                       : next - pos));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        return cells;
    };
    auto parse_double = [](const std::string& s) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw std::invalid_argument("murmuration csv: bad number '" + s + "'");
        return v;
    };

    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("murmuration csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split(line);
    if (header.empty() || header[0] != "p")
        throw std::invalid_argument("murmuration csv: header must start with 'p'");

    MurmurationTable table;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i].rfind("order_", 0) != 0)
            throw std::invalid_argument("murmuration csv: bad column '" + header[i] + "'");
        table.classes.push_back(std::stoi(header[i].substr(6)));
    }

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# counts:", 0) == 0) {
            std::string rest = line.substr(9);
            std::size_t pos = 0;
            while (pos < rest.size()) {
                while (pos < rest.size() && (rest[pos] == ' ' || rest[pos] == ',')) ++pos;
                if (pos >= rest.size()) break;
                if (rest[pos] != 'r')
                    throw std::invalid_argument("murmuration csv: bad counts entry");
                const std::size_t eq = rest.find('=', pos);
                if (eq == std::string::npos)
                    throw std::invalid_argument("murmuration csv: bad counts entry");
                const std::size_t end = rest.find(',', eq);
                table.counts.push_back(std::stoull(
                    rest.substr(eq + 1, end == std::string::npos ? std::string::npos
                                                                 : end - eq - 1)));
                pos = end == std::string::npos ? rest.size() : end;
            }
            continue;
        }
        auto cells = split(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("murmuration csv: row width mismatch");
        table.primes.push_back(std::stoi(cells[0]));
        std::vector<double> vals;
        for (std::size_t i = 1; i < cells.size(); ++i) vals.push_back(parse_double(cells[i]));
        rows.push_back(std::move(vals));
    }

    table.means = DenseMatrix(table.classes.size(), table.primes.size());
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t c = 0; c < table.classes.size(); ++c) table.means(c, j) = rows[j][c];
    return table;
}

} // namespace murmurforge
