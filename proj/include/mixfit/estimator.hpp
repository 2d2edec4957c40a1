#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mixfit/data.hpp"
#include "mixfit/family.hpp"
#include "mixfit/measure.hpp"
#include "mixfit/phi.hpp"

namespace mixfit {

struct OptimizerOptions {
  unsigned restarts = 8;
  unsigned max_iterations = 2000;  // Nelder-Mead iterations per start
  double objective_tolerance = 1e-9;
  double simplex_tolerance = 1e-10;
  std::uint64_t seed = 0;
  /// When false only caller-supplied starts are used.
  bool use_default_starts = true;

  void validate() const;
};

struct FitResult {
  MixingMeasure measure;
  double objective = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::size_t start_index = 0;
};

using MeasureObjective = std::function<double(const MixingMeasure&)>;

/// Starting measures: the data-quantile candidate first, then random ones.
std::vector<MixingMeasure> initializations(const KernelFamily& fam, const DataSet& data, std::size_t k,
                                           const ParamDomain& domain, std::size_t count,
                                           std::uint64_t seed);

/// Nelder-Mead from `init` in the unconstrained coordinates (logit atoms, softmax weights).
/// `trace`, when given, receives the best objective after every iteration.
FitResult local_search(const MeasureObjective& objective, const MixingMeasure& init,
                       const ParamDomain& domain, const OptimizerOptions& opts,
                       std::vector<double>* trace = nullptr);

/// Minimum Phi-distance estimate over k-atom measures in `domain`. Extra starts with fewer
/// than k atoms are padded by duplicating their heaviest atom.
FitResult fit(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, std::size_t k,
              const ParamDomain& domain, const OptimizerOptions& opts,
              std::span<const MixingMeasure> extra_starts = {});

/// Same, reusing a prepared cache.
FitResult fit(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, const PhiCache& cache,
              std::size_t k, const ParamDomain& domain, const OptimizerOptions& opts,
              std::span<const MixingMeasure> extra_starts = {});

/// Fits for l = 1..k_max; element l-1 has l atoms and objectives are nonincreasing in l.
std::vector<FitResult> fit_all_orders(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data,
                                      std::size_t k_max, const ParamDomain& domain,
                                      const OptimizerOptions& opts,
                                      std::span<const MixingMeasure> extra_starts = {});

std::vector<FitResult> fit_all_orders(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data,
                                      const PhiCache& cache, std::size_t k_max,
                                      const ParamDomain& domain, const OptimizerOptions& opts,
                                      std::span<const MixingMeasure> extra_starts = {});

/// Throws unless `domain` is a valid parameter box for fam (matching dimension and inside
/// the open mean domain).
void check_domain_for_family(const KernelFamily& fam, const ParamDomain& domain);

}  // namespace mixfit
