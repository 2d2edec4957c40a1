#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mixfit/data.hpp"
#include "mixfit/measure.hpp"
#include "mixfit/rng.hpp"

namespace mixfit {

// Component families P_theta, all in mean parameterization.
struct GaussianLocation {
  double sigma = 1.0;
  std::size_t dim = 1;
};
struct Poisson {};
struct GammaShape {
  double alpha = 1.0;  // fixed shape; rate = alpha / theta
};
struct Binomial {
  unsigned trials = 1;  // theta = trials * p
};
struct NegativeBinomial {
  double r = 1.0;  // success probability p = r / (r + theta)
};

class KernelFamily {
 public:
  using Variant = std::variant<GaussianLocation, Poisson, GammaShape, Binomial, NegativeBinomial>;

  static KernelFamily gaussian(double sigma = 1.0, std::size_t dim = 1);
  static KernelFamily poisson();
  static KernelFamily gamma(double alpha);
  static KernelFamily binomial(unsigned trials);
  static KernelFamily negative_binomial(double r);

  /// Parses `gaussian(sigma=1.0,d=1)`, `poisson`, `gamma(alpha=2)`, `binomial(m=10)`,
  /// `negbinomial(r=3)`; case-insensitive and whitespace-tolerant.
  static KernelFamily parse(std::string_view spec);

  const Variant& variant() const { return v_; }
  template <class T>
  const T* get_if() const { return std::get_if<T>(&v_); }

  std::string name() const;
  /// Canonical spec string accepted by parse().
  std::string spec() const;

  /// Observation dimension d (equals the parameter dimension q).
  std::size_t dim() const;
  bool is_discrete() const;
  bool is_univariate() const { return dim() == 1; }

  /// Mean domain tildeTheta as an open interval (lo, hi); Gaussian is (-inf, inf).
  double mean_lower() const;
  double mean_upper() const;
  bool in_mean_domain(std::span<const double> theta) const;
  bool in_mean_domain(double theta) const { return in_mean_domain(std::span<const double>(&theta, 1)); }
  /// Closure of the mean domain.
  bool in_mean_closure(double theta) const;

  /// Standard deviation of one coordinate of X ~ P_theta.
  double component_sd(double theta) const;

 private:
  explicit KernelFamily(Variant v) : v_(v) {}
  Variant v_;
};

/// Density (continuous) or mass (discrete) of X = x under P_theta.
double density(const KernelFamily& fam, std::span<const double> x, std::span<const double> theta);
double density(const KernelFamily& fam, double x, double theta);

/// F(x | theta) = P(X <= x); product of coordinate CDFs for multivariate Gaussian.
double cdf(const KernelFamily& fam, std::span<const double> x, std::span<const double> theta);
double cdf(const KernelFamily& fam, double x, double theta);
/// Left limit P(X < x). Equal to cdf for continuous families.
double cdf_left(const KernelFamily& fam, double x, double theta);

/// One draw from P_theta; writes dim() coordinates into out.
void sample(const KernelFamily& fam, std::span<const double> theta, RandomStream& rng,
            std::span<double> out);
double sample(const KernelFamily& fam, double theta, RandomStream& rng);

/// n iid draws from P_G by ancestral sampling, reproducible given seed.
DataSet sample_mixture(const KernelFamily& fam, const MixingMeasure& g, std::size_t n,
                       std::uint64_t seed);

/// Throws AtomOutOfKernelDomain unless every atom of g lies in the mean domain.
void check_atoms_in_kernel_domain(const KernelFamily& fam, const MixingMeasure& g);

// ---- moment structure ----

/// Coefficients c[0..i] (index = power of theta) of E_theta[X^i].
std::vector<double> moment_polynomial(const KernelFamily& fam, unsigned i);

/// Coefficients a[0..j] (index = power of x) of t_j(x | theta0), the polynomial
/// statistic with E_theta t_j(X | theta0) = (theta - theta0)^j.
std::vector<double> orthogonal_stat(const KernelFamily& fam, unsigned j, double theta0);

/// (1/n) sum_i t_j(X_i | theta0) for j = 1..order.
std::vector<double> t_bar(const KernelFamily& fam, const DataSet& data, unsigned order,
                          double theta0);

/// Horner evaluation of sum_i c[i] x^i.
double eval_poly(std::span<const double> coeffs, double x);

}  // namespace mixfit
