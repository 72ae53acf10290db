#pragma once

// Line-delimited JSON helpers shared by every file format in the project.

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "errors.hpp"

namespace sdgn {

using json = nlohmann::json;

// Calls `fn(record, line_number)` for every non-blank line of `in`.
inline void for_each_record(std::istream& in, const std::function<void(const json&, std::size_t)>& fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        }
        catch (const json::parse_error& e) {
            throw parse_error(lineno, std::string("malformed JSON: ") + e.what());
        }
        if (!rec.is_object()) throw parse_error(lineno, "record is not an object");
        fn(rec, lineno);
    }
}

inline void write_record(std::ostream& out, const json& rec) {
    out << rec.dump() << '\n';
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    return out;
}

// FNV-1a over the canonical dump; stable across runs and platforms.
inline std::uint64_t digest(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c: bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string digest_hex(const json& j) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << digest(j.dump());
    return os.str();
}

} // namespace sdgn
