#pragma once

#include <string>

namespace mixfit {

/// 12 significant digits; scientific notation for nonzero |x| < 1e-4.
std::string format_number(double x);

/// Shortest form that round-trips a double exactly.
std::string format_exact(double x);

}  // namespace mixfit
