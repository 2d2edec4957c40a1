#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixfit/estimator.hpp"
#include "mixfit/order.hpp"

namespace mixfit {

enum class StudyMode { KnownK, PlugIn };

// Declarative Monte Carlo experiment: for every n in n_grid and every replication r,
// draw n points from P_truth with seed replication_seed(master_seed, n, r), estimate,
// and record W_ell(estimate, truth).
struct RateStudyConfig {
  KernelFamily family;
  MixingMeasure truth;
  PhiSpec phi;
  ParamDomain domain;
  StudyMode mode = StudyMode::KnownK;
  std::size_t k = 0;  // fitted order in KnownK mode; 0 means truth.size()
  std::size_t k_max = 4;
  std::optional<double> c1;
  std::vector<std::size_t> n_grid;
  std::size_t replications = 1;
  double ell = 1.0;
  bool power = false;  // record W_ell^ell instead of W_ell
  std::uint64_t master_seed = 0;
  OptimizerOptions opts;
  bool inject_truth = false;  // add the truth as an extra optimizer start
  unsigned threads = 1;
  bool median = false;

  void validate() const;
};

struct StudyRow {
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;
  std::size_t reps = 0;
  std::optional<double> frac_correct;
  std::optional<double> median;
};

struct ReplicationRecord {
  std::size_t n = 0;
  std::size_t r = 0;
  std::uint64_t seed = 0;
  double error = 0.0;            // W_ell (or W_ell^ell)
  double objective = 0.0;        // fitted objective
  double truth_objective = 0.0;  // objective evaluated at the truth
  std::optional<std::size_t> k_hat;
  double threshold = 0.0;
  double empirical_process = 0.0;  // Phi-distance between truth and data
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<ReplicationRecord> replications;  // ordered by (n, r)
};

/// SplitMix-style avalanche of (master, n, r).
std::uint64_t replication_seed(std::uint64_t master, std::size_t n, std::size_t r);

StudyResult run_study(const RateStudyConfig& cfg);
std::vector<StudyRow> run_rate_study(const RateStudyConfig& cfg);
/// Requires PlugIn mode; rows carry the fraction of replications with k_hat = k(truth).
std::vector<StudyRow> run_order_study(const RateStudyConfig& cfg);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
};

/// OLS of log(mean) on log(n).
SlopeFit fit_log_log_slope(const std::vector<StudyRow>& rows);

std::string to_csv(const std::vector<StudyRow>& rows);
void write_csv(const std::vector<StudyRow>& rows, const std::string& path);
std::vector<StudyRow> read_csv(const std::string& text);

std::string svg_plot(const std::vector<StudyRow>& rows, const std::optional<SlopeFit>& fit,
                     const std::string& title = "");
void render_svg_plot(const std::vector<StudyRow>& rows, const std::optional<SlopeFit>& fit,
                     const std::string& path, const std::string& title = "");

}  // namespace mixfit
