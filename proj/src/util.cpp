#include "moalign/util.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moalign {

std::array<double, 5> quantile_summary(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("quantile_summary: no values");
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    double pos = q * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  return {values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

}  // namespace moalign
