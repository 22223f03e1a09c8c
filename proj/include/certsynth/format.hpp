#pragma once

#include <cstdio>
#include <string>

namespace certsynth {

// Shortest-safe round-trip decimal form (17 significant digits).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace certsynth
