#pragma once

#include <charconv>
#include <string>

namespace crisisforest {

// Shortest round-trip decimal form; reparsing reproduces the exact bits.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace crisisforest
