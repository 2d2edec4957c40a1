#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mixfit/data.hpp"
#include "mixfit/family.hpp"
#include "mixfit/measure.hpp"

namespace mixfit {

// ---- RKHS kernels on the observation space ----

struct GaussianRbf {
  double gamma = 1.0;  // ker(x, y) = exp(-gamma ||x - y||_2^2)
};
struct LaplaceKernel {
  double scale = 1.0;  // ker(x, y) = exp(-||x - y||_1 / scale)
};

class RkhsKernel {
 public:
  using Variant = std::variant<GaussianRbf, LaplaceKernel>;

  static RkhsKernel rbf(double gamma);
  static RkhsKernel laplace(double scale);

  const Variant& variant() const { return v_; }
  bool is_rbf() const { return std::holds_alternative<GaussianRbf>(v_); }

  double operator()(std::span<const double> x, std::span<const double> y) const;
  /// One coordinate factor; the kernel is the product of these over coordinates.
  double factor(double z) const;
  /// sup |ker|; 1 for both variants.
  double sup_norm() const { return 1.0; }

  std::string spec() const;

 private:
  explicit RkhsKernel(Variant v) : v_(v) {}
  Variant v_;
};

// ---- test-function classes ----

struct KsPhi {};
struct MmdPhi {
  RkhsKernel kernel;
};
struct MomentsPhi {
  unsigned order = 1;
  double theta0 = 0.0;
};

class PhiSpec {
 public:
  using Variant = std::variant<KsPhi, MmdPhi, MomentsPhi>;

  static PhiSpec ks();
  static PhiSpec mmd(RkhsKernel kernel);
  static PhiSpec moments(unsigned order, double theta0);

  /// `ks`, `mmd(rbf,gamma=1.0)`, `mmd(laplace,scale=1.0)`, `moments(order=3,theta0=0)`.
  static PhiSpec parse(std::string_view spec);

  const Variant& variant() const { return v_; }
  template <class T>
  const T* get_if() const { return std::get_if<T>(&v_); }

  std::string name() const;
  std::string spec() const;

 private:
  explicit PhiSpec(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

/// Throws IncompatiblePhiFamily when phi cannot be evaluated for fam.
void check_phi_family(const PhiSpec& phi, const KernelFamily& fam);

// ---- objectives ----

/// sum_i p_i F(x | theta_i).
double mixture_cdf(const KernelFamily& fam, const MixingMeasure& g, std::span<const double> x);
double mixture_cdf(const KernelFamily& fam, const MixingMeasure& g, double x);

/// sup_x |F_G(x) - F_n(x)| for d in {1, 2}.
double ks_objective(const KernelFamily& fam, const MixingMeasure& g, const DataSet& data);

/// K(theta, theta') = E ker(Z, Z'), Z ~ P_theta, Z' ~ P_theta' independent.
double mmd_gram(const KernelFamily& fam, const RkhsKernel& ker, std::span<const double> theta,
                std::span<const double> theta2);
double mmd_gram(const KernelFamily& fam, const RkhsKernel& ker, double theta, double theta2);

/// J_n(theta) = (1/n) sum_i E ker(Z, X_i), Z ~ P_theta.
double mmd_jn(const KernelFamily& fam, const RkhsKernel& ker, std::span<const double> theta,
              const DataSet& data);
double mmd_jn(const KernelFamily& fam, const RkhsKernel& ker, double theta, const DataSet& data);

/// (1/n^2) sum_{a,b} ker(X_a, X_b), the part of D^2_MMD that does not depend on G.
double mmd_data_term(const RkhsKernel& ker, const DataSet& data);

/// sum p_i p_j K(theta_i, theta_j) - 2 sum p_i J_n(theta_i), optionally plus the data term
/// (which makes it the squared MMD between P_G and the empirical measure).
double mmd_objective(const KernelFamily& fam, const RkhsKernel& ker, const MixingMeasure& g,
                     const DataSet& data, bool include_data_term = false);

/// V-statistic estimate of D^2_MMD between two samples.
double mmd_squared_empirical(const RkhsKernel& ker, const DataSet& p, const DataSet& q);

/// Squared MMD between two mixtures P_G and P_H, from the gram function alone.
double mmd_squared_population(const KernelFamily& fam, const RkhsKernel& ker,
                              const MixingMeasure& g, const MixingMeasure& h);

/// || m(G - theta0) - tbar ||_inf with m the scalar moments of orders 1..tbar.size().
double moment_objective(const KernelFamily& fam, const MixingMeasure& g,
                        std::span<const double> tbar, double theta0);

// Data-dependent precomputation, built once per data set and read-only afterwards.
struct PhiCache {
  // KS, d = 1: distinct sorted values with right- and left-continuous empirical CDFs.
  std::vector<double> ks_values;
  std::vector<double> ks_fn;
  std::vector<double> ks_fn_left;
  // KS, d = 2: distinct coordinate values (with a trailing +inf) and the count grid
  // counts[(a + 1) * (ny + 1) + (b + 1)] = #{x <= xs[a], y <= ys[b]}; index 0 is -inf.
  std::vector<double> ks_xs;
  std::vector<double> ks_ys;
  std::vector<double> ks_grid;
  // MMD on integer data: distinct values and their relative frequencies.
  std::vector<double> mmd_values;
  std::vector<double> mmd_freq;
  std::optional<double> mmd_data_term;
  // Moments.
  std::vector<double> tbar;
};

PhiCache prepare_phi_cache(const PhiSpec& phi, const KernelFamily& fam, const DataSet& data,
                           bool with_mmd_data_term = false);

/// Dispatches to the KS, MMD (data term omitted) or moment objective.
double phi_objective(const PhiSpec& phi, const KernelFamily& fam, const MixingMeasure& g,
                     const DataSet& data, const PhiCache* cache = nullptr);

/// Converts an objective value into the Phi-distance sup_phi |G phi - tbar_phi|. Identity for
/// KS and moments; for MMD sqrt(objective + data term), which needs the data term cached.
double phi_distance(const PhiSpec& phi, double objective, const PhiCache& cache);

}  // namespace mixfit
