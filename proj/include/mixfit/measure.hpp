#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mixfit {

// Axis-aligned compact box Theta in R^q.
class ParamDomain {
 public:
  ParamDomain(std::vector<double> lower, std::vector<double> upper);

  /// Same interval [lo, hi] on every one of q coordinates.
  static ParamDomain cube(std::size_t q, double lo, double hi);

  std::size_t dim() const { return lower_.size(); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  bool contains(std::span<const double> theta) const;
  std::vector<double> clamp(std::span<const double> theta) const;
  /// Euclidean diameter of the box.
  double diameter() const;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

// A finite discrete probability measure sum_i p_i delta_{theta_i} on R^q.
//
// Immutable once built. Atoms are stored row-major in a flat buffer.
class MixingMeasure {
 public:
  std::size_t size() const { return weights_.size(); }
  std::size_t dim() const { return dim_; }

  std::span<const double> atom(std::size_t i) const {
    return {atoms_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& flat_atoms() const { return atoms_; }

  /// Index of the atom with the largest weight (first one on ties).
  std::size_t heaviest() const;

  bool operator==(const MixingMeasure&) const = default;

 private:
  friend MixingMeasure make_measure(const std::vector<std::vector<double>>&,
                                    const std::vector<double>&,
                                    const std::optional<ParamDomain>&);
  MixingMeasure() = default;

  std::size_t dim_ = 0;
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

inline constexpr double kWeightTolerance = 1e-12;
inline constexpr double kAtomMergeTolerance = 1e-12;

/// Validates and builds a measure. Atoms within kAtomMergeTolerance in sup-norm
/// are merged and their weights summed.
MixingMeasure make_measure(const std::vector<std::vector<double>>& atoms,
                           const std::vector<double>& weights,
                           const std::optional<ParamDomain>& domain = std::nullopt);

/// Convenience for q = 1.
MixingMeasure make_measure_1d(const std::vector<double>& atoms,
                              const std::vector<double>& weights,
                              const std::optional<ParamDomain>& domain = std::nullopt);

/// Atoms mapped to eps * (theta_i - theta); weights unchanged.
MixingMeasure shift_scale(const MixingMeasure& g, std::span<const double> theta, double eps);

/// Exact W_ell between two measures with Euclidean ground metric.
double wasserstein(const MixingMeasure& g, const MixingMeasure& h, double ell);

/// Optimal coupling for cost ||theta_i - theta'_j||^ell; entry [i][j] is mass moved.
std::vector<std::vector<double>> optimal_coupling(const MixingMeasure& g, const MixingMeasure& h,
                                                  double ell);

// ---- multi-index moments ----

using MultiIndex = std::vector<unsigned>;

/// All alpha in N^q with |alpha| <= order, graded lexicographic order
/// (by total degree, then lexicographically descending in the first coordinate).
std::vector<MultiIndex> enumerate_multi_indices(std::size_t q, unsigned order);

/// m_alpha(G - theta0) for every 1 <= |alpha| <= order.
std::map<MultiIndex, double> moment_vector(const MixingMeasure& g, unsigned order,
                                           std::span<const double> theta0);

/// Scalar moments m_j(G - theta0), j = 1..order, for q = 1.
std::vector<double> moments_1d(const MixingMeasure& g, unsigned order, double theta0);

// ---- plain-text serialization: one atom per line, `p theta_1 ... theta_q` ----

MixingMeasure read_measure(std::istream& in);
MixingMeasure read_measure_file(const std::string& path);
void write_measure(std::ostream& out, const MixingMeasure& g);
void write_measure_file(const std::string& path, const MixingMeasure& g);

std::string to_string(const MixingMeasure& g);

}  // namespace mixfit
