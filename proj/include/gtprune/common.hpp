#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtprune {

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// FNV-1a, used for dataset/config content hashes and rng stream derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline std::size_t ceil_frac(double frac, std::size_t total) {
    if (frac <= 0.0) return 0;
    double raw = frac * static_cast<double>(total);
    auto r = static_cast<std::size_t>(raw);
    if (static_cast<double>(r) < raw) ++r;
    return r;
}

// Half-up rounding for keep counts (k rounds half-up per token-pruner contract).
inline std::size_t round_half_up(double x) {
    if (x <= 0.0) return 0;
    return static_cast<std::size_t>(x + 0.5);
}

}  // namespace gtprune
