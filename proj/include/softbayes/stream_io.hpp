#pragma once

// Stream files. JSONL, one round per line, either reduced
//   {"p": [p1, ..., pN]}
// or full
//   {"dists": [[...], ...], "x": k}   (k is the 0-based symbol column)
// and CSV with a header row followed by N probability columns.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "softbayes/core.hpp"

namespace softbayes {

class StreamFormatError : public std::runtime_error {
public:
    StreamFormatError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace detail {

inline bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

inline std::vector<double> reduce_line(const nlohmann::json& j) {
    if (j.contains("p")) return j.at("p").get<std::vector<double>>();
    if (j.contains("dists") && j.contains("x")) {
        const auto dists = j.at("dists").get<std::vector<std::vector<double>>>();
        const auto x = j.at("x").get<std::size_t>();
        std::vector<double> p;
        p.reserve(dists.size());
        for (const auto& d : dists) {
            if (x >= d.size()) throw std::invalid_argument("symbol index outside an expert distribution");
            p.push_back(d[x]);
        }
        return p;
    }
    throw std::invalid_argument("round needs \"p\" or \"dists\" and \"x\"");
}

} // namespace detail

inline ExpertStream read_stream_jsonl(std::istream& in) {
    std::optional<ExpertStream> stream;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        try {
            auto p = detail::reduce_line(nlohmann::json::parse(line));
            if (!stream) stream.emplace(p.size());
            stream->push(std::move(p));
        } catch (const std::exception& e) {
            throw StreamFormatError(lineno, e.what());
        }
    }
    if (!stream) throw StreamFormatError(lineno, "stream has no rounds");
    return *stream;
}

inline ExpertStream read_stream_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
        break;
    }
    if (columns == 0) throw StreamFormatError(lineno, "missing CSV header");

    ExpertStream stream(columns);
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::blank(line)) continue;
        try {
            std::vector<double> p;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                std::size_t used = 0;
                p.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
                    throw std::invalid_argument("bad number '" + cell + "'");
            }
            stream.push(std::move(p));
        } catch (const std::exception& e) {
            throw StreamFormatError(lineno, e.what());
        }
    }
    if (stream.empty()) throw StreamFormatError(lineno, "stream has no rounds");
    return stream;
}

inline bool is_csv_path(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

inline ExpertStream read_stream_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stream file " + path);
    return is_csv_path(path) ? read_stream_csv(in) : read_stream_jsonl(in);
}

inline void write_stream_jsonl(std::ostream& out, const ExpertStream& stream) {
    for (const auto& r : stream.rounds()) {
        out << "{\"p\":[";
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_double(r[i]);
        out << "]}\n";
    }
}

inline void write_stream_csv(std::ostream& out, const ExpertStream& stream) {
    for (std::size_t i = 0; i < stream.experts(); ++i) out << (i ? "," : "") << "p" << (i + 1);
    out << "\n";
    for (const auto& r : stream.rounds()) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_double(r[i]);
        out << "\n";
    }
}

/// FNV-1a over the bit patterns of every probability, for report headers.
inline std::uint64_t stream_fingerprint(const ExpertStream& stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    mix(stream.experts());
    for (const auto& r : stream.rounds())
        for (double p : r.probs()) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &p, sizeof bits);
            mix(bits);
        }
    return h;
}

} // namespace softbayes
