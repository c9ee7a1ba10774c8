#pragma once

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "population.hpp"

namespace atsd {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when an output path cannot be written; nothing is left behind.
class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Population file:
//   M=<int>
//   Nh=<comma list>
//   grid=<int>
//   seed=<int>
//   h,j,y,x,z,w          one line per unit, h-major, 1-based, %.17g reals
//   checksum=<hex>       FNV-1a 64 of every preceding byte
inline std::string serialize_population(const Population& pop) {
    std::string body;
    body += "M=" + std::to_string(pop.psu_count()) + "\n";
    body += "Nh=";
    for (int h = 0; h < pop.psu_count(); ++h) {
        if (h) body += ",";
        body += std::to_string(pop.psu_size(h));
    }
    body += "\ngrid=" + std::to_string(pop.grid_side()) + "\n";
    body += "seed=" + std::to_string(pop.seed()) + "\n";
    for (int h = 0; h < pop.psu_count(); ++h)
        for (const Unit& u : pop.psu(h)) {
            body += std::to_string(u.psu) + "," + std::to_string(u.ssu) + "," + format_real(u.y) + "," +
                    format_real(u.x) + "," + format_real(u.z) + "," + std::to_string(u.w) + "\n";
        }
    return body + "checksum=" + hex64(fnv1a64(body)) + "\n";
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline long long parse_int(std::string_view s, std::string_view what) {
    std::string tmp(s);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(tmp.c_str(), &end, 10);
    if (tmp.empty() || end != tmp.c_str() + tmp.size() || errno != 0)
        throw FormatError("population file: bad integer for " + std::string(what) + ": '" + tmp + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what) {
    std::string tmp(s);
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(tmp.c_str(), &end, 10);
    if (tmp.empty() || tmp[0] == '-' || end != tmp.c_str() + tmp.size() || errno != 0)
        throw FormatError("population file: bad unsigned integer for " + std::string(what));
    return v;
}

inline double parse_real(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size())
        throw FormatError("population file: bad real '" + tmp + "'");
    return v;
}

inline std::string_view header_value(std::string_view line, std::string_view key) {
    if (line.size() <= key.size() || line.substr(0, key.size()) != key || line[key.size()] != '=')
        throw FormatError("population file: expected header '" + std::string(key) + "='");
    return line.substr(key.size() + 1);
}

}  // namespace detail

inline Population parse_population(std::string_view text) {
    const auto marker = text.rfind("checksum=");
    if (marker == std::string_view::npos || (marker != 0 && text[marker - 1] != '\n'))
        throw FormatError("population file: missing checksum line (truncated?)");
    const std::string_view body = text.substr(0, marker);
    std::string_view tail = text.substr(marker + 9);
    if (!tail.empty() && tail.back() == '\n') tail.remove_suffix(1);
    if (tail.find('\n') != std::string_view::npos) throw FormatError("population file: data after checksum");
    if (tail != hex64(fnv1a64(body))) throw FormatError("population file: checksum mismatch");

    std::vector<std::string_view> lines = detail::split(body, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.size() < 4) throw FormatError("population file: incomplete header");

    const long long M = detail::parse_int(detail::header_value(lines[0], "M"), "M");
    std::vector<int> sizes;
    for (auto part : detail::split(detail::header_value(lines[1], "Nh"), ','))
        sizes.push_back(static_cast<int>(detail::parse_int(part, "Nh")));
    const int grid = static_cast<int>(detail::parse_int(detail::header_value(lines[2], "grid"), "grid"));
    const std::uint64_t seed = detail::parse_u64(detail::header_value(lines[3], "seed"), "seed");
    if (M < 1 || static_cast<long long>(sizes.size()) != M) throw FormatError("population file: M and Nh disagree");

    std::size_t expected = 0;
    for (int n : sizes) {
        if (n < 1) throw FormatError("population file: PSU size must be >= 1");
        expected += static_cast<std::size_t>(n);
    }
    if (lines.size() - 4 != expected) throw FormatError("population file: unit count does not match Nh");

    std::vector<std::vector<Unit>> psus(static_cast<std::size_t>(M));
    std::size_t line = 4;
    for (std::size_t h = 0; h < psus.size(); ++h) {
        for (int j = 0; j < sizes[h]; ++j, ++line) {
            const auto fields = detail::split(lines[line], ',');
            if (fields.size() != 6) throw FormatError("population file: unit line needs 6 fields");
            Unit u;
            u.psu = static_cast<int>(detail::parse_int(fields[0], "h"));
            u.ssu = static_cast<int>(detail::parse_int(fields[1], "j"));
            u.y = detail::parse_real(fields[2]);
            u.x = detail::parse_real(fields[3]);
            u.z = detail::parse_real(fields[4]);
            u.w = static_cast<int>(detail::parse_int(fields[5], "w"));
            psus[h].push_back(u);
        }
    }
    try {
        return Population(grid, seed, std::move(psus));
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("population file: ") + e.what());
    }
}

// Writes through a sibling temporary and renames, so a failure never leaves
// a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw OutputError("cannot open '" + path.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw OutputError("write to '" + path.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw OutputError("cannot move output into '" + path.string() + "'");
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_population(const Population& pop, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_population(pop));
}

inline Population load_population(const std::filesystem::path& path) { return parse_population(read_file(path)); }

}  // namespace atsd
