#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace tesrx::detail {

/// Fixed 12-significant-digit representation used by every emitter, so equal
/// results serialize to equal bytes.
inline std::string format_g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

}  // namespace tesrx::detail
