#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "trajcogn/errors.hpp"

namespace trajcogn::csv {

// Splits one CSV line. Fields may be double-quoted; "" inside quotes is a
// literal quote. No embedded newlines.
inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string quote_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw RecordError(line, "expected a number, got '" + s + "'");
    }
    return value;
}

inline std::int64_t parse_int(const std::string& s, std::size_t line) {
    std::int64_t value = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw RecordError(line, "expected an integer, got '" + s + "'");
    }
    return value;
}

// Shortest representation that round-trips a double through parse_double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    for (int prec = 1; prec <= 16; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        std::from_chars(shorter, shorter + std::char_traits<char>::length(shorter), back);
        if (back == v) {
            return shorter;
        }
    }
    return buf;
}

struct Reader {
    std::ifstream in;
    std::size_t line_no = 0;

    explicit Reader(const std::string& path) : in(path) {
        if (!in) {
            throw DatasetError("cannot open file: " + path);
        }
    }

    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line == "\r") {
                continue;
            }
            fields = split_line(line);
            return true;
        }
        return false;
    }
};

}  // namespace trajcogn::csv
