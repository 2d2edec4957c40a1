#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mixfit/estimator.hpp"

namespace mixfit {

struct OrderResult {
  /// Smallest l whose fitted Phi-distance is <= threshold; empty when no l qualifies.
  std::optional<std::size_t> k_hat;
  double threshold = 0.0;
  /// Phi-distances indexed by l - 1.
  std::vector<double> objectives;
  /// Fit at k_hat, or at k_max when undetermined. Absent from estimate_order().
  std::optional<FitResult> plug_in;

  bool undetermined() const { return !k_hat.has_value(); }
};

/// a_n = c1 sqrt(ln n / n); default c1 is sqrt(3)/2 (KS), 2 ||ker||_inf (MMD), 1 (moments).
double default_threshold(const PhiSpec& phi, std::size_t n, std::optional<double> c1 = std::nullopt);

/// Default c1 for phi.
double default_c1(const PhiSpec& phi);

/// First-crossing rule over Phi-distances objectives[l - 1], l = 1, 2, ...
OrderResult estimate_order(const std::vector<double>& objectives, double threshold);
OrderResult estimate_order(const std::vector<FitResult>& fits, double threshold);

/// Fits every order up to k_max, selects k_hat and returns the plug-in fit.
OrderResult plug_in(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, std::size_t k_max,
                    const ParamDomain& domain, const OptimizerOptions& opts,
                    std::optional<double> c1 = std::nullopt,
                    std::span<const MixingMeasure> extra_starts = {});

/// Numerical b_G: smallest population Phi-distance from G to a measure with one atom fewer.
double separation_gap(const KernelFamily& fam, const PhiSpec& phi, const MixingMeasure& g,
                      const ParamDomain& domain, const OptimizerOptions& opts);

/// Population Phi-distance sup_phi |G phi - H phi|. KS uses the dense-grid rule of
/// separation_gap; MMD the exact grams; moments the exact moment vectors.
double population_phi_distance(const KernelFamily& fam, const PhiSpec& phi, const MixingMeasure& g,
                               const MixingMeasure& h, const ParamDomain& domain);

}  // namespace mixfit
