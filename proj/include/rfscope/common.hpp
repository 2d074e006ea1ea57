#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rfscope {

// Runtime failure with a message meant for the user (shape mismatch, bad
// file, numeric abort). CLI maps it to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input text (DSL, CSV, config). CLI maps it to exit code 2.
class ParseError : public std::runtime_error {
public:
    ParseError(int line, int col, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + msg),
          line(line), col(col) {}
    int line;
    int col;
};

// FNV-1a, used for provenance hashes in manifests and ERF sidecars.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s) { return fnv1a(s.data(), s.size()); }

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

} // namespace rfscope
