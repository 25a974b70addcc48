#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "murmurforge/dataset.hpp"

namespace murmurforge {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kCsvVersionLine = "# murmurforge-v1";

/// Parse failure with the offending position. row 0 is the header.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t row, std::string column, const std::string& message)
        : std::runtime_error("row " + std::to_string(row) +
                             (column.empty() ? "" : ", column " + column) + ": " + message),
          row_(row),
          column_(std::move(column)) {}

    std::size_t row() const { return row_; }
    const std::string& column() const { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

namespace detail {

inline bool label_charset_ok(std::string_view label) {
    for (char c : label) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        if (!ok) return false;
    }
    return !label.empty();
}

template <class Int>
inline Int parse_int(std::string_view cell, std::size_t row, const std::string& column) {
    Int v{};
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
        throw ParseError(row, column, "not an integer: '" + std::string(cell) + "'");
    return v;
}

inline std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t next = line.find(',', pos);
        cells.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos
                                                                        : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return cells;
}

inline std::vector<std::string> expected_header(const PrimeBasis& basis) {
    std::vector<std::string> cols = {"label", "degree", "weight", "conductor", "order", "origins"};
    for (int p : basis.primes()) cols.push_back("a_" + std::to_string(p));
    return cols;
}

} // namespace detail

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Reads the canonical CSV layout: a "# murmurforge-v1" version line, the
/// 6 + 168 column header, then one record per line with a semicolon-joined
/// origins cell. Structural problems throw ParseError with the position;
/// coefficient-bound irregularities of this externally sourced data are
/// collected as warnings.
inline Dataset read_csv(std::istream& in, std::vector<std::string>* warnings = nullptr) {
    PrimeBasis basis;
    const auto header_cols = detail::expected_header(basis);

    std::string line;
    auto next_line = [&](std::string& out) {
        if (!std::getline(in, out)) return false;
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return true;
    };

    if (!next_line(line)) throw ParseError(0, "", "empty file: missing version line");
    if (line != kCsvVersionLine)
        throw ParseError(0, "", "unknown format version line '" + line + "'");
    if (!next_line(line)) throw ParseError(0, "", "missing column header");

    const auto cells = detail::split_line(line);
    if (cells.size() != header_cols.size())
        throw ParseError(0, "",
                         "expected " + std::to_string(header_cols.size()) + " columns, found " +
                             std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] != header_cols[i])
            throw ParseError(0, header_cols[i],
                             "bad header column '" + std::string(cells[i]) + "'");

    std::vector<LFunctionRecord> records;
    std::size_t row = 0;
    while (next_line(line)) {
        ++row;
        if (line.empty()) throw ParseError(row, "", "blank line");
        const auto c = detail::split_line(line);
        if (c.size() != header_cols.size())
            throw ParseError(row, "",
                             "expected " + std::to_string(header_cols.size()) + " cells, found " +
                                 std::to_string(c.size()));
        LFunctionRecord rec;
        rec.label = std::string(c[0]);
        if (!detail::label_charset_ok(rec.label))
            throw ParseError(row, "label", "bad label '" + rec.label + "'");
        rec.degree = detail::parse_int<int>(c[1], row, "degree");
        rec.weight = detail::parse_int<int>(c[2], row, "weight");
        rec.conductor = detail::parse_int<std::int64_t>(c[3], row, "conductor");
        rec.order = detail::parse_int<int>(c[4], row, "order");
        try {
            rec.origins = OriginSet::parse(c[5]);
        } catch (const std::invalid_argument& e) {
            throw ParseError(row, "origins", e.what());
        }
        rec.ap.reserve(basis.size());
        for (std::size_t i = 0; i < basis.size(); ++i)
            rec.ap.push_back(detail::parse_int<std::int64_t>(c[6 + i], row, header_cols[6 + i]));
        records.push_back(std::move(rec));
    }

    try {
        return Dataset::build(std::move(basis), std::move(records), Provenance::External, warnings);
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, "", e.what());
    }
}

inline void write_csv(const Dataset& ds, std::ostream& out) {
    out << kCsvVersionLine << "\n";
    const auto header_cols = detail::expected_header(ds.basis());
    for (std::size_t i = 0; i < header_cols.size(); ++i)
        out << (i ? "," : "") << header_cols[i];
    out << "\n";
    for (const auto& rec : ds.records()) {
        if (!detail::label_charset_ok(rec.label))
            throw std::invalid_argument("write_csv: label '" + rec.label +
                                        "' outside [A-Za-z0-9._-]");
        out << rec.label << ',' << rec.degree << ',' << rec.weight << ',' << rec.conductor << ','
            << rec.order << ',' << rec.origins.to_string();
        for (std::int64_t a : rec.ap) out << ',' << a;
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_csv: stream write failure");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline void write_json(const Dataset& ds, std::ostream& out) {
    nlohmann::ordered_json doc;
    doc["format_version"] = kFormatVersion;
    doc["records"] = nlohmann::ordered_json::array();
    for (const auto& rec : ds.records()) {
        nlohmann::ordered_json r;
        r["label"] = rec.label;
        r["degree"] = rec.degree;
        r["weight"] = rec.weight;
        r["conductor"] = rec.conductor;
        r["order"] = rec.order;
        r["origins"] = nlohmann::ordered_json::array();
        for (Origin o : rec.origins.to_vector()) r["origins"].push_back(origin_name(o));
        r["ap"] = rec.ap;
        doc["records"].push_back(std::move(r));
    }
    out << doc.dump(1) << "\n";
    if (!out) throw std::runtime_error("write_json: stream write failure");
}

inline Dataset read_json(std::istream& in, std::vector<std::string>* warnings = nullptr) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, "", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("format_version") ||
        !doc["format_version"].is_number_integer())
        throw ParseError(0, "format_version", "missing format_version");
    if (doc["format_version"].get<int>() != kFormatVersion)
        throw ParseError(0, "format_version",
                         "unknown format version " + doc["format_version"].dump());
    if (!doc.contains("records") || !doc["records"].is_array())
        throw ParseError(0, "records", "missing records array");

    PrimeBasis basis;
    std::vector<LFunctionRecord> records;
    std::size_t row = 0;
    for (const auto& r : doc["records"]) {
        ++row;
        auto need = [&](const char* key) -> const nlohmann::json& {
            if (!r.contains(key)) throw ParseError(row, key, "missing field");
            return r[key];
        };
        LFunctionRecord rec;
        if (!need("label").is_string()) throw ParseError(row, "label", "must be a string");
        rec.label = r["label"].get<std::string>();
        if (!detail::label_charset_ok(rec.label))
            throw ParseError(row, "label", "bad label '" + rec.label + "'");
        auto get_int = [&](const char* key, auto& out) {
            const auto& v = need(key);
            if (!v.is_number_integer()) throw ParseError(row, key, "must be an integer");
            out = v.get<std::decay_t<decltype(out)>>();
        };
        get_int("degree", rec.degree);
        get_int("weight", rec.weight);
        get_int("conductor", rec.conductor);
        get_int("order", rec.order);
        const auto& origins = need("origins");
        if (!origins.is_array()) throw ParseError(row, "origins", "must be an array");
        for (const auto& o : origins) {
            if (!o.is_string()) throw ParseError(row, "origins", "tags must be strings");
            auto tag = origin_from_name(o.get<std::string>());
            if (!tag) throw ParseError(row, "origins", "unknown origin tag " + o.dump());
            rec.origins.insert(*tag);
        }
        const auto& ap = need("ap");
        if (!ap.is_array()) throw ParseError(row, "ap", "must be an array");
        rec.ap.reserve(ap.size());
        for (const auto& a : ap) {
            if (!a.is_number_integer()) throw ParseError(row, "ap", "coefficients must be integers");
            rec.ap.push_back(a.get<std::int64_t>());
        }
        records.push_back(std::move(rec));
    }
    try {
        return Dataset::build(std::move(basis), std::move(records), Provenance::External, warnings);
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, "", e.what());
    }
}

// ---------------------------------------------------------------------------
// Files: extension dispatch, .gz input, atomic output
// ---------------------------------------------------------------------------

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline std::string gunzip_file(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw std::runtime_error("gzip read failure on '" + path + "'");
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace detail

/// Reads a dataset file, dispatching on extension: .json[.gz] as JSON,
/// anything else as CSV; a trailing .gz is decompressed first.
inline Dataset read_dataset_file(const std::string& path,
                                 std::vector<std::string>* warnings = nullptr) {
    std::string text = detail::ends_with(path, ".gz") ? detail::gunzip_file(path)
                                                      : detail::read_text_file(path);
    std::string_view stem = path;
    if (detail::ends_with(stem, ".gz")) stem.remove_suffix(3);
    std::istringstream in(std::move(text));
    return detail::ends_with(stem, ".json") ? read_json(in, warnings) : read_csv(in, warnings);
}

/// Writes via a temp file in the same directory, renamed into place on
/// success, so failures never leave a partial output.
inline void write_file_atomic(const std::string& path,
                              const std::function<void(std::ostream&)>& writer) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
        try {
            writer(out);
        } catch (...) {
            out.close();
            std::remove(tmp.c_str());
            throw;
        }
        out.flush();
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw std::runtime_error("write failure on '" + tmp + "'");
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

/// Writes a dataset as CSV or JSON by extension, atomically.
inline void write_dataset_file(const Dataset& ds, const std::string& path) {
    const bool json = detail::ends_with(path, ".json");
    write_file_atomic(path, [&](std::ostream& out) {
        if (json)
            write_json(ds, out);
        else
            write_csv(ds, out);
    });
}

} // namespace murmurforge
