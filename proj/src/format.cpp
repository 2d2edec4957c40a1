#include "mixfit/format.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace mixfit {

std::string format_number(double x) {
  char buf[64];
  if (x != 0.0 && std::isfinite(x) && std::fabs(x) < 1e-4) {
    std::snprintf(buf, sizeof buf, "%.11e", x);
  } else {
    std::snprintf(buf, sizeof buf, "%.12g", x);
  }
  return buf;
}

std::string format_exact(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace mixfit
