#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace foodfuse {

// Tensor extents. Kept as plain ints; nothing here needs >2^31 per axis.
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); i++) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

// Error taxonomy; the CLI maps these onto exit codes 2/3/4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by primitive ops on nonconforming operands.
struct ShapeError : std::runtime_error {
    ShapeError(const std::string& op, const Shape& a, const Shape& b)
        : std::runtime_error(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
    ShapeError(const std::string& op, const std::string& detail)
        : std::runtime_error(op + ": " + detail) {}
};

}  // namespace foodfuse
