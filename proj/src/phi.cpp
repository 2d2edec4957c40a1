#include "mixfit/phi.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "mixfit/error.hpp"
#include "mixfit/format.hpp"
#include "parse_util.hpp"

namespace mixfit {

// ---- kernels ----

RkhsKernel RkhsKernel::rbf(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw Error(ErrorCode::InvalidArgument, "rbf gamma must be > 0");
  return RkhsKernel(GaussianRbf{gamma});
}

RkhsKernel RkhsKernel::laplace(double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw Error(ErrorCode::InvalidArgument, "laplace scale must be > 0");
  return RkhsKernel(LaplaceKernel{scale});
}

double RkhsKernel::factor(double z) const {
  if (auto r = std::get_if<GaussianRbf>(&v_)) return std::exp(-r->gamma * z * z);
  return std::exp(-std::fabs(z) / std::get<LaplaceKernel>(v_).scale);
}

double RkhsKernel::operator()(std::span<const double> x, std::span<const double> y) const {
  double s = 0.0;
  if (auto r = std::get_if<GaussianRbf>(&v_)) {
    for (std::size_t c = 0; c < x.size(); ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
    return std::exp(-r->gamma * s);
  }
  for (std::size_t c = 0; c < x.size(); ++c) s += std::fabs(x[c] - y[c]);
  return std::exp(-s / std::get<LaplaceKernel>(v_).scale);
}

std::string RkhsKernel::spec() const {
  if (auto r = std::get_if<GaussianRbf>(&v_)) return "rbf,gamma=" + format_exact(r->gamma);
  return "laplace,scale=" + format_exact(std::get<LaplaceKernel>(v_).scale);
}

// ---- phi specs ----

PhiSpec PhiSpec::ks() { return PhiSpec(KsPhi{}); }
PhiSpec PhiSpec::mmd(RkhsKernel kernel) { return PhiSpec(MmdPhi{kernel}); }
PhiSpec PhiSpec::moments(unsigned order, double theta0) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "moments order must be >= 1");
  if (!std::isfinite(theta0)) throw Error(ErrorCode::InvalidArgument, "theta0 must be finite");
  return PhiSpec(MomentsPhi{order, theta0});
}

namespace {

double parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "bad value '" + value + "' for '" + key + "'");
  }
}

}  // namespace

PhiSpec PhiSpec::parse(std::string_view spec) {
  const auto [name, args] = split_call(spec);
  if (name == "ks") {
    if (!args.empty()) throw Error(ErrorCode::ParseError, "ks takes no arguments");
    return ks();
  }
  if (name == "mmd") {
    std::string kind = "rbf";
    std::map<std::string, double> kv;
    for (std::size_t i = 0; i < args.size(); ++i) {
      const auto& [k, v] = args[i];
      if (v.empty()) {
        if (i != 0) throw Error(ErrorCode::ParseError, "expected key=value, got '" + k + "'");
        kind = k;
      } else {
        kv[k] = parse_number(k, v);
      }
    }
    if (kind == "rbf" || kind == "gaussian") {
      double gamma = 1.0;
      for (const auto& [k, v] : kv) {
        if (k != "gamma") throw Error(ErrorCode::ParseError, "unknown mmd parameter '" + k + "'");
        gamma = v;
      }
      return mmd(RkhsKernel::rbf(gamma));
    }
    if (kind == "laplace") {
      double scale = 1.0;
      for (const auto& [k, v] : kv) {
        if (k != "scale") throw Error(ErrorCode::ParseError, "unknown mmd parameter '" + k + "'");
        scale = v;
      }
      return mmd(RkhsKernel::laplace(scale));
    }
    throw Error(ErrorCode::ParseError, "unknown rkhs kernel '" + kind + "'");
  }
  if (name == "moments" || name == "gmm") {
    double order = 1.0;
    double theta0 = 0.0;
    bool have_order = false;
    for (const auto& [k, v] : args) {
      if (v.empty()) throw Error(ErrorCode::ParseError, "expected key=value, got '" + k + "'");
      if (k == "order") {
        order = parse_number(k, v);
        have_order = true;
      } else if (k == "theta0") {
        theta0 = parse_number(k, v);
      } else {
        throw Error(ErrorCode::ParseError, "unknown moments parameter '" + k + "'");
      }
    }
    if (!have_order || order < 1 || order != std::floor(order))
      throw Error(ErrorCode::ParseError, "moments requires integer order >= 1");
    return moments(static_cast<unsigned>(order), theta0);
  }
  throw Error(ErrorCode::ParseError, "unknown phi '" + name + "'");
}

std::string PhiSpec::name() const {
  if (std::holds_alternative<KsPhi>(v_)) return "ks";
  if (std::holds_alternative<MmdPhi>(v_)) return "mmd";
  return "moments";
}

std::string PhiSpec::spec() const {
  if (std::holds_alternative<KsPhi>(v_)) return "ks";
  if (auto m = get_if<MmdPhi>()) return "mmd(" + m->kernel.spec() + ")";
  const auto& m = std::get<MomentsPhi>(v_);
  return "moments(order=" + std::to_string(m.order) + ",theta0=" + format_exact(m.theta0) + ")";
}

void check_phi_family(const PhiSpec& phi, const KernelFamily& fam) {
  if (phi.get_if<KsPhi>() && fam.dim() > 2)
    throw Error(ErrorCode::IncompatiblePhiFamily, "ks supports observation dimension <= 2");
  if (auto m = phi.get_if<MomentsPhi>()) {
    if (!fam.is_univariate())
      throw Error(ErrorCode::IncompatiblePhiFamily, "moments need a univariate family");
    try {
      orthogonal_stat(fam, m->order, m->theta0);
    } catch (const Error& e) {
      throw Error(ErrorCode::IncompatiblePhiFamily, e.what());
    }
  }
}

// ---- mixture CDF and KS ----

double mixture_cdf(const KernelFamily& fam, const MixingMeasure& g, std::span<const double> x) {
  check_atoms_in_kernel_domain(fam, g);
  double f = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) f += g.weight(i) * cdf(fam, x, g.atom(i));
  return f;
}

double mixture_cdf(const KernelFamily& fam, const MixingMeasure& g, double x) {
  return mixture_cdf(fam, g, std::span<const double>(&x, 1));
}

namespace {

void build_ks_cache_1d(const DataSet& data, PhiCache& cache) {
  std::vector<double> xs = data.values;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  std::size_t i = 0;
  while (i < xs.size()) {
    std::size_t j = i;
    while (j < xs.size() && xs[j] == xs[i]) ++j;
    cache.ks_values.push_back(xs[i]);
    cache.ks_fn_left.push_back(static_cast<double>(i) / n);
    cache.ks_fn.push_back(static_cast<double>(j) / n);
    i = j;
  }
}

std::vector<double> distinct_with_inf(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  v.push_back(std::numeric_limits<double>::infinity());
  return v;
}

void build_ks_cache_2d(const DataSet& data, PhiCache& cache) {
  const std::size_t n = data.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = data.at(i)[0];
    y[i] = data.at(i)[1];
  }
  cache.ks_xs = distinct_with_inf(x);
  cache.ks_ys = distinct_with_inf(y);
  const std::size_t nx = cache.ks_xs.size(), ny = cache.ks_ys.size();
  const std::size_t stride = ny + 1;
  std::vector<double> grid((nx + 1) * stride, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = std::lower_bound(cache.ks_xs.begin(), cache.ks_xs.end(), x[i]) - cache.ks_xs.begin();
    const auto b = std::lower_bound(cache.ks_ys.begin(), cache.ks_ys.end(), y[i]) - cache.ks_ys.begin();
    grid[(a + 1) * stride + (b + 1)] += 1.0;
  }
  for (std::size_t a = 1; a <= nx; ++a)
    for (std::size_t b = 1; b <= ny; ++b)
      grid[a * stride + b] += grid[(a - 1) * stride + b] + grid[a * stride + b - 1] -
                              grid[(a - 1) * stride + b - 1];
  for (double& c : grid) c /= static_cast<double>(n);
  cache.ks_grid = std::move(grid);
}

double ks_from_cache_1d(const KernelFamily& fam, const MixingMeasure& g, const PhiCache& cache) {
  const auto& vals = cache.ks_values;
  double sup = 0.0;
  if (auto gl = fam.get_if<GaussianLocation>()) {
    const double scale = 1.0 / (gl->sigma * std::numbers::sqrt2);
    for (std::size_t v = 0; v < vals.size(); ++v) {
      double f = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        f += g.weight(i) * 0.5 * std::erfc(-(vals[v] - g.atom(i)[0]) * scale);
      sup = std::max({sup, std::fabs(f - cache.ks_fn[v]), std::fabs(f - cache.ks_fn_left[v])});
    }
    return sup;
  }
  const bool discrete = fam.is_discrete();
  for (std::size_t v = 0; v < vals.size(); ++v) {
    double f = 0.0, f_left = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double th = g.atom(i)[0];
      f += g.weight(i) * cdf(fam, vals[v], th);
      f_left += g.weight(i) * (discrete ? cdf_left(fam, vals[v], th) : 0.0);
    }
    if (!discrete) f_left = f;
    sup = std::max({sup, std::fabs(f - cache.ks_fn[v]), std::fabs(f_left - cache.ks_fn_left[v])});
  }
  return sup;
}

double ks_from_cache_2d(const KernelFamily& fam, const MixingMeasure& g, const PhiCache& cache) {
  const auto* gl = fam.get_if<GaussianLocation>();
  if (!gl) throw Error(ErrorCode::UnsupportedDimension, "2-d KS needs the Gaussian family");
  const std::size_t nx = cache.ks_xs.size(), ny = cache.ks_ys.size(), k = g.size();
  const double scale = 1.0 / (gl->sigma * std::numbers::sqrt2);
  // Per-atom coordinate CDFs.
  std::vector<double> fx(k * nx), fy(k * ny);
  for (std::size_t i = 0; i < k; ++i) {
    const auto th = g.atom(i);
    for (std::size_t a = 0; a < nx; ++a)
      fx[i * nx + a] = std::isinf(cache.ks_xs[a]) ? 1.0 : 0.5 * std::erfc(-(cache.ks_xs[a] - th[0]) * scale);
    for (std::size_t b = 0; b < ny; ++b)
      fy[i * ny + b] = std::isinf(cache.ks_ys[b]) ? 1.0 : 0.5 * std::erfc(-(cache.ks_ys[b] - th[1]) * scale);
  }
  const std::size_t stride = ny + 1;
  const auto& c = cache.ks_grid;
  double sup = 0.0;
  for (std::size_t a = 0; a < nx; ++a) {
    for (std::size_t b = 0; b < ny; ++b) {
      double f = 0.0;
      for (std::size_t i = 0; i < k; ++i) f += g.weight(i) * fx[i * nx + a] * fy[i * ny + b];
      // Empirical CDF at the corner and its three one-sided limits.
      const double e11 = c[(a + 1) * stride + (b + 1)];
      const double e01 = c[a * stride + (b + 1)];
      const double e10 = c[(a + 1) * stride + b];
      const double e00 = c[a * stride + b];
      sup = std::max({sup, std::fabs(f - e11), std::fabs(f - e01), std::fabs(f - e10),
                      std::fabs(f - e00)});
    }
  }
  return sup;
}

}  // namespace

double ks_objective(const KernelFamily& fam, const MixingMeasure& g, const DataSet& data) {
  if (data.empty()) throw Error(ErrorCode::EmptyData, "ks objective needs data");
  if (data.dim > 2 || fam.dim() > 2)
    throw Error(ErrorCode::UnsupportedDimension, "ks objective supports d <= 2");
  const auto cache = prepare_phi_cache(PhiSpec::ks(), fam, data);
  return phi_objective(PhiSpec::ks(), fam, g, data, &cache);
}

// ---- MMD ----

namespace {

// E f(Z) for Z ~ N(mean, sd^2), f one coordinate factor of the kernel.
double gaussian_expect_factor(const RkhsKernel& ker, double mean, double sd) {
  if (auto r = std::get_if<GaussianRbf>(&ker.variant())) {
    const double denom = 1.0 + 2.0 * r->gamma * sd * sd;
    return std::exp(-r->gamma * mean * mean / denom) / std::sqrt(denom);
  }
  auto integrand = [&](double z) {
    const double u = (z - mean) / sd;
    return ker.factor(z) * std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
  };
  using Gk = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double lo = mean - 12.0 * sd, hi = mean + 12.0 * sd;
  if (lo < 0.0 && hi > 0.0) {
    return Gk::integrate(integrand, lo, 0.0, 20, 1e-13) + Gk::integrate(integrand, 0.0, hi, 20, 1e-13);
  }
  return Gk::integrate(integrand, lo, hi, 20, 1e-13);
}

// Mass function of a discrete family on 0..X where P(X > X) < 1e-10.
std::vector<double> pmf_table(const KernelFamily& fam, double theta) {
  std::vector<double> p;
  double mass = 0.0;
  const double upper = fam.mean_upper();
  for (double x = 0.0; x <= upper; x += 1.0) {
    const double v = density(fam, x, theta);
    p.push_back(v);
    mass += v;
    if (x > theta && 1.0 - mass < 1e-10) break;
    if (p.size() > 10'000'000) break;
  }
  return p;
}

// E f(X) for X ~ Gamma(alpha, rate alpha / theta).
double gamma_expect(const KernelFamily& fam, double theta, const std::function<double(double)>& f) {
  auto integrand = [&](double x) {
    if (!(x > 0.0)) return 0.0;
    return f(x) * density(fam, x, theta);
  };
  boost::math::quadrature::tanh_sinh<double> ts;
  boost::math::quadrature::exp_sinh<double> es;
  const double head = ts.integrate(integrand, 0.0, theta, 1e-11);
  const double tail = es.integrate([&](double t) { return integrand(theta + t); }, 1e-11);
  return head + tail;
}

void distinct_frequencies(const DataSet& data, std::vector<double>& values, std::vector<double>& freq) {
  std::vector<double> xs = data.values;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size();) {
    std::size_t j = i;
    while (j < xs.size() && xs[j] == xs[i]) ++j;
    values.push_back(xs[i]);
    freq.push_back(static_cast<double>(j - i) / n);
    i = j;
  }
}

double jn_impl(const KernelFamily& fam, const RkhsKernel& ker, std::span<const double> theta,
               const DataSet& data, const std::vector<double>* values, const std::vector<double>* freq) {
  if (data.empty()) throw Error(ErrorCode::EmptyData, "J_n needs data");
  if (!fam.in_mean_domain(theta))
    throw Error(ErrorCode::ParameterOutOfDomain, "J_n parameter outside the mean domain");
  const std::size_t n = data.size();
  if (auto gl = fam.get_if<GaussianLocation>()) {
    if (auto r = std::get_if<GaussianRbf>(&ker.variant())) {
      // Closed form: prod_c a / sqrt(a^2 + 2 gamma) exp(-a^2 gamma (theta_c - x_c)^2 / (a^2 + 2 gamma)).
      const double a2 = 1.0 / (gl->sigma * gl->sigma);
      const double denom = a2 + 2.0 * r->gamma;
      const double pref = std::pow(std::sqrt(a2 / denom), static_cast<double>(gl->dim));
      const double rate = a2 * r->gamma / denom;
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.at(i);
        double d2 = 0.0;
        for (std::size_t c = 0; c < gl->dim; ++c) d2 += (theta[c] - x[c]) * (theta[c] - x[c]);
        sum += std::exp(-rate * d2);
      }
      return pref * sum / static_cast<double>(n);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.at(i);
      double prod = 1.0;
      for (std::size_t c = 0; c < gl->dim; ++c) prod *= gaussian_expect_factor(ker, theta[c] - x[c], gl->sigma);
      sum += prod;
    }
    return sum / static_cast<double>(n);
  }
  if (fam.is_discrete()) {
    std::vector<double> local_values, local_freq;
    if (!values) {
      distinct_frequencies(data, local_values, local_freq);
      values = &local_values;
      freq = &local_freq;
    }
    const auto p = pmf_table(fam, theta[0]);
    double sum = 0.0;
    for (std::size_t v = 0; v < values->size(); ++v) {
      double inner = 0.0;
      for (std::size_t x = 0; x < p.size(); ++x) inner += p[x] * ker.factor(static_cast<double>(x) - (*values)[v]);
      sum += (*freq)[v] * inner;
    }
    return sum;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = data.at(i)[0];
    sum += gamma_expect(fam, theta[0], [&](double x) { return ker.factor(x - xi); });
  }
  return sum / static_cast<double>(n);
}

}  // namespace

double mmd_gram(const KernelFamily& fam, const RkhsKernel& ker, std::span<const double> theta,
                std::span<const double> theta2) {
  if (!fam.in_mean_domain(theta) || !fam.in_mean_domain(theta2))
    throw Error(ErrorCode::ParameterOutOfDomain, "gram parameter outside the mean domain");
  if (auto gl = fam.get_if<GaussianLocation>()) {
    // Z - Z' ~ N(theta - theta', 2 sigma^2) coordinatewise.
    double prod = 1.0;
    for (std::size_t c = 0; c < gl->dim; ++c)
      prod *= gaussian_expect_factor(ker, theta[c] - theta2[c], std::numbers::sqrt2 * gl->sigma);
    return prod;
  }
  if (fam.is_discrete()) {
    const auto p = pmf_table(fam, theta[0]);
    const auto q = pmf_table(fam, theta2[0]);
    double s = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x)
      for (std::size_t y = 0; y < q.size(); ++y)
        s += p[x] * q[y] * ker.factor(static_cast<double>(x) - static_cast<double>(y));
    return s;
  }
  const double t2 = theta2[0];
  return gamma_expect(fam, theta[0], [&](double x) {
    return gamma_expect(fam, t2, [&](double y) { return ker.factor(x - y); });
  });
}

double mmd_gram(const KernelFamily& fam, const RkhsKernel& ker, double theta, double theta2) {
  return mmd_gram(fam, ker, std::span<const double>(&theta, 1), std::span<const double>(&theta2, 1));
}

double mmd_jn(const KernelFamily& fam, const RkhsKernel& ker, std::span<const double> theta,
              const DataSet& data) {
  return jn_impl(fam, ker, theta, data, nullptr, nullptr);
}

double mmd_jn(const KernelFamily& fam, const RkhsKernel& ker, double theta, const DataSet& data) {
  return mmd_jn(fam, ker, std::span<const double>(&theta, 1), data);
}

double mmd_data_term(const RkhsKernel& ker, const DataSet& data) {
  if (data.empty()) throw Error(ErrorCode::EmptyData, "data term needs data");
  const std::size_t n = data.size();
  double off = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) off += ker(data.at(a), data.at(b));
  const double nn = static_cast<double>(n);
  return (static_cast<double>(n) + 2.0 * off) / (nn * nn);
}

namespace {

double mmd_objective_impl(const KernelFamily& fam, const RkhsKernel& ker, const MixingMeasure& g,
                          const DataSet& data, const PhiCache* cache) {
  if (data.empty()) throw Error(ErrorCode::EmptyData, "mmd objective needs data");
  check_atoms_in_kernel_domain(fam, g);
  const bool use_freq = cache && !cache->mmd_values.empty();
  double quad = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    quad += g.weight(i) * g.weight(i) * mmd_gram(fam, ker, g.atom(i), g.atom(i));
    for (std::size_t j = i + 1; j < g.size(); ++j)
      quad += 2.0 * g.weight(i) * g.weight(j) * mmd_gram(fam, ker, g.atom(i), g.atom(j));
  }
  double lin = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    lin += g.weight(i) * jn_impl(fam, ker, g.atom(i), data, use_freq ? &cache->mmd_values : nullptr,
                                 use_freq ? &cache->mmd_freq : nullptr);
  return quad - 2.0 * lin;
}

}  // namespace

double mmd_objective(const KernelFamily& fam, const RkhsKernel& ker, const MixingMeasure& g,
                     const DataSet& data, bool include_data_term) {
  const double v = mmd_objective_impl(fam, ker, g, data, nullptr);
  return include_data_term ? v + mmd_data_term(ker, data) : v;
}

double mmd_squared_empirical(const RkhsKernel& ker, const DataSet& p, const DataSet& q) {
  if (p.empty() || q.empty()) throw Error(ErrorCode::EmptyData, "mmd needs two nonempty samples");
  if (p.dim != q.dim) throw Error(ErrorCode::DimensionMismatch, "samples differ in dimension");
  const double m = static_cast<double>(p.size()), n = static_cast<double>(q.size());
  double cross = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a)
    for (std::size_t b = 0; b < q.size(); ++b) cross += ker(p.at(a), q.at(b));
  const double v = mmd_data_term(ker, p) - 2.0 * cross / (m * n) + mmd_data_term(ker, q);
  return std::max(v, 0.0);
}

double mmd_squared_population(const KernelFamily& fam, const RkhsKernel& ker,
                              const MixingMeasure& g, const MixingMeasure& h) {
  check_atoms_in_kernel_domain(fam, g);
  check_atoms_in_kernel_domain(fam, h);
  auto bilinear = [&](const MixingMeasure& a, const MixingMeasure& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j)
        s += a.weight(i) * b.weight(j) * mmd_gram(fam, ker, a.atom(i), b.atom(j));
    return s;
  };
  return std::max(bilinear(g, g) - 2.0 * bilinear(g, h) + bilinear(h, h), 0.0);
}

// ---- moments ----

double moment_objective(const KernelFamily& fam, const MixingMeasure& g, std::span<const double> tbar,
                        double theta0) {
  if (!fam.is_univariate() || g.dim() != 1)
    throw Error(ErrorCode::IncompatiblePhiFamily, "moment objective needs q = 1");
  if (tbar.empty()) throw Error(ErrorCode::LengthMismatch, "tbar is empty");
  const auto m = moments_1d(g, static_cast<unsigned>(tbar.size()), theta0);
  double sup = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) sup = std::max(sup, std::fabs(m[j] - tbar[j]));
  return sup;
}

// ---- dispatch ----

PhiCache prepare_phi_cache(const PhiSpec& phi, const KernelFamily& fam, const DataSet& data,
                           bool with_mmd_data_term) {
  if (data.empty()) throw Error(ErrorCode::EmptyData, "no observations");
  if (data.dim != fam.dim())
    throw Error(ErrorCode::DimensionMismatch, "data dimension " + std::to_string(data.dim) +
                                                  " vs family dimension " + std::to_string(fam.dim()));
  check_phi_family(phi, fam);
  PhiCache cache;
  if (phi.get_if<KsPhi>()) {
    if (data.dim == 1) {
      build_ks_cache_1d(data, cache);
    } else if (data.dim == 2) {
      build_ks_cache_2d(data, cache);
    } else {
      throw Error(ErrorCode::UnsupportedDimension, "ks objective supports d <= 2");
    }
  } else if (auto m = phi.get_if<MmdPhi>()) {
    if (fam.is_discrete()) distinct_frequencies(data, cache.mmd_values, cache.mmd_freq);
    if (with_mmd_data_term) {
      if (fam.is_discrete()) {
        double s = 0.0;
        for (std::size_t a = 0; a < cache.mmd_values.size(); ++a)
          for (std::size_t b = 0; b < cache.mmd_values.size(); ++b)
            s += cache.mmd_freq[a] * cache.mmd_freq[b] *
                 m->kernel.factor(cache.mmd_values[a] - cache.mmd_values[b]);
        cache.mmd_data_term = s;
      } else {
        cache.mmd_data_term = mmd_data_term(m->kernel, data);
      }
    }
  } else {
    const auto& mp = std::get<MomentsPhi>(phi.variant());
    cache.tbar = t_bar(fam, data, mp.order, mp.theta0);
  }
  return cache;
}

double phi_objective(const PhiSpec& phi, const KernelFamily& fam, const MixingMeasure& g,
                     const DataSet& data, const PhiCache* cache) {
  std::optional<PhiCache> local;
  if (!cache) {
    local = prepare_phi_cache(phi, fam, data);
    cache = &*local;
  }
  if (phi.get_if<KsPhi>()) {
    check_atoms_in_kernel_domain(fam, g);
    return data.dim == 1 ? ks_from_cache_1d(fam, g, *cache) : ks_from_cache_2d(fam, g, *cache);
  }
  if (auto m = phi.get_if<MmdPhi>()) return mmd_objective_impl(fam, m->kernel, g, data, cache);
  const auto& mp = std::get<MomentsPhi>(phi.variant());
  return moment_objective(fam, g, cache->tbar, mp.theta0);
}

double phi_distance(const PhiSpec& phi, double objective, const PhiCache& cache) {
  if (!phi.get_if<MmdPhi>()) return objective;
  if (!cache.mmd_data_term)
    throw Error(ErrorCode::InvalidArgument, "mmd distance needs the cached data term");
  return std::sqrt(std::max(objective + *cache.mmd_data_term, 0.0));
}

}  // namespace mixfit
