#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "mixfit/measure.hpp"

namespace testing_util {

// Random measure with k atoms in [lo, hi]^q and Dirichlet(1) weights.
inline mixfit::MixingMeasure random_measure(std::mt19937_64& rng, std::size_t k, std::size_t q, double lo = -3.0,
                                            double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::exponential_distribution<double> e(1.0);
  std::vector<std::vector<double>> atoms(k, std::vector<double>(q));
  std::vector<double> w(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (auto& c : atoms[i]) c = u(rng);
    w[i] = e(rng) + 1e-3;
    total += w[i];
  }
  for (auto& x : w) x /= total;
  // Renormalize once more so the sum is within the constructor's tolerance.
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) s += w[i];
  w[k - 1] = 1.0 - s;
  return mixfit::make_measure(atoms, w);
}

inline std::vector<std::vector<double>> atoms_of(const mixfit::MixingMeasure& g) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < g.size(); ++i) out.emplace_back(g.atom(i).begin(), g.atom(i).end());
  return out;
}

}  // namespace testing_util
