#include "mixfit/family.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mixfit/error.hpp"
#include "mixfit/format.hpp"
#include "parse_util.hpp"

namespace mixfit {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double RandomStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---- construction and parsing ----

KernelFamily KernelFamily::gaussian(double sigma, std::size_t dim) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be > 0");
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "gaussian dimension must be >= 1");
  return KernelFamily(GaussianLocation{sigma, dim});
}

KernelFamily KernelFamily::poisson() { return KernelFamily(Poisson{}); }

KernelFamily KernelFamily::gamma(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw Error(ErrorCode::InvalidArgument, "gamma shape alpha must be > 0");
  return KernelFamily(GammaShape{alpha});
}

KernelFamily KernelFamily::binomial(unsigned trials) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "binomial trials m must be >= 1");
  return KernelFamily(Binomial{trials});
}

KernelFamily KernelFamily::negative_binomial(double r) {
  if (!(r > 0.0) || !std::isfinite(r))
    throw Error(ErrorCode::InvalidArgument, "negative binomial r must be > 0");
  return KernelFamily(NegativeBinomial{r});
}

namespace {

std::string compact_lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c)))
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

double parse_value(const std::string& key, const std::string& value) {
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


std::pair<std::string, std::vector<std::pair<std::string, std::string>>> split_call(
    std::string_view spec) {
  const std::string s = compact_lower(spec);
  const auto open = s.find('(');
  if (open == std::string::npos) return {s, {}};
  if (s.back() != ')') throw Error(ErrorCode::ParseError, "unbalanced parenthesis in '" + s + "'");
  std::string name = s.substr(0, open);
  std::string body = s.substr(open + 1, s.size() - open - 2);
  std::vector<std::pair<std::string, std::string>> args;
  std::size_t pos = 0;
  while (pos <= body.size() && !body.empty()) {
    auto comma = body.find(',', pos);
    if (comma == std::string::npos) comma = body.size();
    std::string item = body.substr(pos, comma - pos);
    if (item.empty()) throw Error(ErrorCode::ParseError, "empty argument in '" + s + "'");
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      args.emplace_back(item, "");
    } else {
      args.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    pos = comma + 1;
    if (comma == body.size()) break;
  }
  return {name, args};
}

KernelFamily KernelFamily::parse(std::string_view spec) {
  const auto [name, args] = split_call(spec);
  std::map<std::string, double> kv;
  for (const auto& [k, v] : args) {
    if (v.empty()) throw Error(ErrorCode::ParseError, "expected key=value, got '" + k + "'");
    kv[k] = parse_value(k, v);
  }
  auto take = [&](const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const double v = it->second;
    kv.erase(it);
    return v;
  };
  auto reject_rest = [&]() {
    if (!kv.empty())
      throw Error(ErrorCode::ParseError,
                  "unknown parameter '" + kv.begin()->first + "' for family '" + name + "'");
  };

  if (name == "gaussian" || name == "normal") {
    const double sigma = take("sigma", 1.0);
    const double d = take("d", 1.0);
    reject_rest();
    if (d < 1 || d != std::floor(d)) throw Error(ErrorCode::ParseError, "gaussian d must be a positive integer");
    return gaussian(sigma, static_cast<std::size_t>(d));
  }
  if (name == "poisson") {
    reject_rest();
    return poisson();
  }
  if (name == "gamma") {
    const double alpha = take("alpha", std::numeric_limits<double>::quiet_NaN());
    reject_rest();
    if (std::isnan(alpha)) throw Error(ErrorCode::ParseError, "gamma requires alpha=<value>");
    return gamma(alpha);
  }
  if (name == "binomial") {
    const double m = take("m", std::numeric_limits<double>::quiet_NaN());
    reject_rest();
    if (std::isnan(m) || m < 1 || m != std::floor(m))
      throw Error(ErrorCode::ParseError, "binomial requires integer m >= 1");
    return binomial(static_cast<unsigned>(m));
  }
  if (name == "negbinomial" || name == "negativebinomial") {
    const double r = take("r", std::numeric_limits<double>::quiet_NaN());
    reject_rest();
    if (std::isnan(r)) throw Error(ErrorCode::ParseError, "negbinomial requires r=<value>");
    return negative_binomial(r);
  }
  throw Error(ErrorCode::ParseError, "unknown family '" + name + "'");
}

std::string KernelFamily::name() const {
  return std::visit(overloaded{[](const GaussianLocation&) { return std::string("gaussian"); },
                               [](const Poisson&) { return std::string("poisson"); },
                               [](const GammaShape&) { return std::string("gamma"); },
                               [](const Binomial&) { return std::string("binomial"); },
                               [](const NegativeBinomial&) { return std::string("negbinomial"); }},
                    v_);
}

std::string KernelFamily::spec() const {
  return std::visit(
      overloaded{[](const GaussianLocation& g) {
                   return "gaussian(sigma=" + format_exact(g.sigma) + ",d=" + std::to_string(g.dim) + ")";
                 },
                 [](const Poisson&) { return std::string("poisson"); },
                 [](const GammaShape& g) { return "gamma(alpha=" + format_exact(g.alpha) + ")"; },
                 [](const Binomial& b) { return "binomial(m=" + std::to_string(b.trials) + ")"; },
                 [](const NegativeBinomial& b) { return "negbinomial(r=" + format_exact(b.r) + ")"; }},
      v_);
}

std::size_t KernelFamily::dim() const {
  if (auto g = get_if<GaussianLocation>()) return g->dim;
  return 1;
}

bool KernelFamily::is_discrete() const {
  return std::holds_alternative<Poisson>(v_) || std::holds_alternative<Binomial>(v_) ||
         std::holds_alternative<NegativeBinomial>(v_);
}

double KernelFamily::mean_lower() const {
  if (std::holds_alternative<GaussianLocation>(v_)) return -std::numeric_limits<double>::infinity();
  return 0.0;
}

double KernelFamily::mean_upper() const {
  if (auto b = get_if<Binomial>()) return static_cast<double>(b->trials);
  return std::numeric_limits<double>::infinity();
}

bool KernelFamily::in_mean_domain(std::span<const double> theta) const {
  if (theta.size() != dim()) return false;
  for (double t : theta) {
    if (!std::isfinite(t) || !(t > mean_lower() && t < mean_upper())) return false;
  }
  return true;
}

bool KernelFamily::in_mean_closure(double theta) const {
  return std::isfinite(theta) && theta >= mean_lower() && theta <= mean_upper();
}

double KernelFamily::component_sd(double theta) const {
  return std::visit(
      overloaded{[](const GaussianLocation& g) { return g.sigma; },
                 [&](const Poisson&) { return std::sqrt(theta); },
                 [&](const GammaShape& g) { return theta / std::sqrt(g.alpha); },
                 [&](const Binomial& b) { return std::sqrt(theta * (1.0 - theta / b.trials)); },
                 [&](const NegativeBinomial& b) { return std::sqrt(theta + theta * theta / b.r); }},
      v_);
}

// ---- densities and CDFs ----

namespace {

void require_param(const KernelFamily& fam, std::span<const double> theta) {
  if (!fam.in_mean_domain(theta))
    throw Error(ErrorCode::ParameterOutOfDomain,
                "mean parameter outside the domain of family " + fam.name());
}

void require_dim(const KernelFamily& fam, std::span<const double> x) {
  if (x.size() != fam.dim()) throw Error(ErrorCode::DimensionMismatch, "observation dimension");
}

bool is_count(double x) { return x >= 0.0 && x == std::floor(x); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

double density(const KernelFamily& fam, std::span<const double> x, std::span<const double> theta) {
  require_param(fam, theta);
  require_dim(fam, x);
  return std::visit(
      overloaded{
          [&](const GaussianLocation& g) {
            double log_d = 0.0;
            for (std::size_t c = 0; c < g.dim; ++c) {
              const double z = (x[c] - theta[c]) / g.sigma;
              log_d += -0.5 * z * z - std::log(g.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
            }
            return std::exp(log_d);
          },
          [&](const Poisson&) {
            if (!is_count(x[0])) throw Error(ErrorCode::SupportViolation, "poisson needs a count");
            return std::exp(x[0] * std::log(theta[0]) - theta[0] - std::lgamma(x[0] + 1.0));
          },
          [&](const GammaShape& g) {
            if (!(x[0] > 0.0)) throw Error(ErrorCode::SupportViolation, "gamma needs x > 0");
            const double beta = g.alpha / theta[0];
            return std::exp(g.alpha * std::log(beta) - std::lgamma(g.alpha) +
                            (g.alpha - 1.0) * std::log(x[0]) - beta * x[0]);
          },
          [&](const Binomial& b) {
            if (!is_count(x[0]) || x[0] > b.trials)
              throw Error(ErrorCode::SupportViolation, "binomial needs a count in [0, m]");
            const double m = b.trials;
            const double p = theta[0] / m;
            return std::exp(std::lgamma(m + 1.0) - std::lgamma(x[0] + 1.0) - std::lgamma(m - x[0] + 1.0) +
                            x[0] * std::log(p) + (m - x[0]) * std::log1p(-p));
          },
          [&](const NegativeBinomial& b) {
            if (!is_count(x[0])) throw Error(ErrorCode::SupportViolation, "negbinomial needs a count");
            const double p = b.r / (b.r + theta[0]);
            return std::exp(std::lgamma(x[0] + b.r) - std::lgamma(x[0] + 1.0) - std::lgamma(b.r) +
                            x[0] * std::log1p(-p) + b.r * std::log(p));
          }},
      fam.variant());
}

double density(const KernelFamily& fam, double x, double theta) {
  return density(fam, std::span<const double>(&x, 1), std::span<const double>(&theta, 1));
}

double cdf(const KernelFamily& fam, std::span<const double> x, std::span<const double> theta) {
  require_param(fam, theta);
  require_dim(fam, x);
  return std::visit(
      overloaded{[&](const GaussianLocation& g) {
                   double f = 1.0;
                   for (std::size_t c = 0; c < g.dim; ++c) f *= normal_cdf((x[c] - theta[c]) / g.sigma);
                   return f;
                 },
                 [&](const Poisson&) {
                   const double k = std::floor(x[0]);
                   if (k < 0.0) return 0.0;
                   return boost::math::gamma_q(k + 1.0, theta[0]);
                 },
                 [&](const GammaShape& g) {
                   if (x[0] <= 0.0) return 0.0;
                   return boost::math::gamma_p(g.alpha, g.alpha * x[0] / theta[0]);
                 },
                 [&](const Binomial& b) {
                   const double k = std::floor(x[0]);
                   if (k < 0.0) return 0.0;
                   if (k >= b.trials) return 1.0;
                   const double p = theta[0] / b.trials;
                   return boost::math::ibetac(k + 1.0, b.trials - k, p);
                 },
                 [&](const NegativeBinomial& b) {
                   const double k = std::floor(x[0]);
                   if (k < 0.0) return 0.0;
                   const double p = b.r / (b.r + theta[0]);
                   return boost::math::ibeta(b.r, k + 1.0, p);
                 }},
      fam.variant());
}

double cdf(const KernelFamily& fam, double x, double theta) {
  return cdf(fam, std::span<const double>(&x, 1), std::span<const double>(&theta, 1));
}

double cdf_left(const KernelFamily& fam, double x, double theta) {
  if (!fam.is_discrete()) return cdf(fam, x, theta);
  return cdf(fam, std::ceil(x) - 1.0, theta);
}

// ---- sampling ----

namespace {

// Inverse-CDF sampler for the integer-valued families, started at the mode so
// that the expected walk length is O(sd).
class DiscreteSampler {
 public:
  DiscreteSampler(const KernelFamily& fam, double theta) : fam_(fam), theta_(theta) {
    double mode = std::floor(theta);
    if (auto b = fam.get_if<Binomial>()) mode = std::min(mode, static_cast<double>(b->trials));
    mode_ = mode;
    cdf_mode_ = cdf(fam, mode, theta);
    pmf_mode_ = density(fam, mode, theta);
  }

  double draw(RandomStream& rng) const {
    const double u = rng.uniform();
    double k = mode_;
    double f = cdf_mode_;
    double pmf = pmf_mode_;
    if (u <= f) {
      while (k > 0.0) {
        if (u > f - pmf) break;
        f -= pmf;
        pmf *= down_ratio(k);
        k -= 1.0;
        if (pmf <= 0.0) break;
      }
      return k;
    }
    const double upper = fam_.mean_upper();
    while (u > f && k + 1.0 <= upper) {
      pmf *= up_ratio(k);
      k += 1.0;
      if (pmf <= 0.0 && k > mode_ + 1.0) break;
      f += pmf;
    }
    return k;
  }

 private:
  // pmf(k + 1) / pmf(k)
  double up_ratio(double k) const {
    if (fam_.get_if<Poisson>()) return theta_ / (k + 1.0);
    if (auto b = fam_.get_if<Binomial>()) {
      const double p = theta_ / b->trials;
      return (b->trials - k) / (k + 1.0) * p / (1.0 - p);
    }
    const auto* nb = fam_.get_if<NegativeBinomial>();
    const double p = nb->r / (nb->r + theta_);
    return (k + nb->r) / (k + 1.0) * (1.0 - p);
  }
  // pmf(k - 1) / pmf(k)
  double down_ratio(double k) const { return 1.0 / up_ratio(k - 1.0); }

  const KernelFamily& fam_;
  double theta_;
  double mode_;
  double cdf_mode_;
  double pmf_mode_;
};

double standard_gamma(double alpha, RandomStream& rng) {
  if (alpha < 1.0) {
    const double g = standard_gamma(alpha + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double z, v;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

void sample(const KernelFamily& fam, std::span<const double> theta, RandomStream& rng,
            std::span<double> out) {
  require_param(fam, theta);
  if (out.size() != fam.dim()) throw Error(ErrorCode::DimensionMismatch, "sample output size");
  if (auto g = fam.get_if<GaussianLocation>()) {
    for (std::size_t c = 0; c < g->dim; ++c) out[c] = theta[c] + g->sigma * rng.normal();
    return;
  }
  if (auto g = fam.get_if<GammaShape>()) {
    out[0] = standard_gamma(g->alpha, rng) * theta[0] / g->alpha;
    return;
  }
  out[0] = DiscreteSampler(fam, theta[0]).draw(rng);
}

double sample(const KernelFamily& fam, double theta, RandomStream& rng) {
  if (fam.dim() != 1) throw Error(ErrorCode::UnsupportedFamily, "scalar sample needs d = 1");
  double out = 0.0;
  sample(fam, std::span<const double>(&theta, 1), rng, std::span<double>(&out, 1));
  return out;
}

void check_atoms_in_kernel_domain(const KernelFamily& fam, const MixingMeasure& g) {
  if (g.dim() != fam.dim())
    throw Error(ErrorCode::DimensionMismatch,
                "measure dimension " + std::to_string(g.dim()) + " vs family dimension " +
                    std::to_string(fam.dim()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!fam.in_mean_domain(g.atom(i)))
      throw Error(ErrorCode::AtomOutOfKernelDomain,
                  "atom " + std::to_string(i) + " outside the mean domain of " + fam.name());
  }
}

DataSet sample_mixture(const KernelFamily& fam, const MixingMeasure& g, std::size_t n,
                       std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample size n must be >= 1");
  check_atoms_in_kernel_domain(fam, g);
  RandomStream rng(seed);
  const std::size_t d = fam.dim();
  DataSet data{d, std::vector<double>(n * d)};

  std::vector<double> cumulative(g.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) cumulative[i] = (acc += g.weight(i));

  std::vector<DiscreteSampler> discrete;
  if (fam.is_discrete()) {
    for (std::size_t i = 0; i < g.size(); ++i) discrete.emplace_back(fam, g.atom(i)[0]);
  }

  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * acc;
    std::size_t comp = 0;
    while (comp + 1 < g.size() && u > cumulative[comp]) ++comp;
    std::span<double> out(data.values.data() + s * d, d);
    if (fam.is_discrete()) {
      out[0] = discrete[comp].draw(rng);
    } else {
      sample(fam, g.atom(comp), rng, out);
    }
  }
  return data;
}

// ---- moment polynomials and orthogonal statistics ----

namespace {

// Stirling numbers of the second kind S(i, k), 0 <= k <= i.
std::vector<double> stirling2_row(unsigned i) {
  std::vector<double> row{1.0};  // S(0,0)
  for (unsigned n = 1; n <= i; ++n) {
    std::vector<double> next(n + 1, 0.0);
    for (unsigned k = 1; k <= n; ++k) {
      next[k] = k * (k < row.size() ? row[k] : 0.0) + row[k - 1];
    }
    row = std::move(next);
  }
  return row;
}

double binomial_coeff(unsigned n, unsigned k) {
  double c = 1.0;
  for (unsigned t = 1; t <= k; ++t) c = c * (n - k + t) / t;
  return c;
}

}  // namespace

std::vector<double> moment_polynomial(const KernelFamily& fam, unsigned i) {
  if (!fam.is_univariate())
    throw Error(ErrorCode::UnsupportedFamily, "moment polynomials need a univariate family");
  std::vector<double> c(i + 1, 0.0);
  if (auto g = fam.get_if<GaussianLocation>()) {
    // E(theta + sigma Z)^i = sum_{k even} C(i,k) sigma^k (k-1)!! theta^(i-k)
    double dfact = 1.0;  // (k-1)!!
    for (unsigned k = 0; k <= i; k += 2) {
      if (k >= 2) dfact *= (k - 1);
      c[i - k] = binomial_coeff(i, k) * std::pow(g->sigma, k) * dfact;
    }
    return c;
  }
  if (auto g = fam.get_if<GammaShape>()) {
    // E X^i = alpha^(rising i) / alpha^i * theta^i
    double f = 1.0;
    for (unsigned t = 0; t < i; ++t) f *= (g->alpha + t) / g->alpha;
    c[i] = f;
    return c;
  }
  // Integer families: E X^i = sum_k S(i,k) E[(X)_k], with E[(X)_k] = f_k theta^k.
  const auto s = stirling2_row(i);
  for (unsigned k = 0; k <= i; ++k) {
    double f = 1.0;
    if (auto b = fam.get_if<Binomial>()) {
      for (unsigned t = 0; t < k; ++t) f *= (static_cast<double>(b->trials) - t) / b->trials;
    } else if (auto nb = fam.get_if<NegativeBinomial>()) {
      for (unsigned t = 0; t < k; ++t) f *= (nb->r + t) / nb->r;
    }
    c[k] = s[k] * f;
  }
  return c;
}

std::vector<double> orthogonal_stat(const KernelFamily& fam, unsigned j, double theta0) {
  if (j < 1) throw Error(ErrorCode::InvalidArgument, "orthogonal statistic index j must be >= 1");
  if (!fam.is_univariate())
    throw Error(ErrorCode::UnsupportedFamily, "orthogonal statistics need a univariate family");
  if (!fam.in_mean_closure(theta0))
    throw Error(ErrorCode::Theta0OutOfDomain,
                "theta0 = " + format_number(theta0) + " outside the mean domain of " + fam.name());

  std::vector<std::vector<double>> moments(j + 1);
  for (unsigned i = 0; i <= j; ++i) moments[i] = moment_polynomial(fam, i);

  // Target (theta - theta0)^j in powers of theta.
  std::vector<double> target(j + 1);
  for (unsigned k = 0; k <= j; ++k) target[k] = binomial_coeff(j, k) * std::pow(-theta0, j - k);

  // Back-substitution on the lower-triangular system sum_i a_i moments[i][k] = target[k].
  std::vector<double> a(j + 1, 0.0);
  for (unsigned k = j + 1; k-- > 0;) {
    double rhs = target[k];
    for (unsigned i = k + 1; i <= j; ++i) rhs -= a[i] * moments[i][k];
    const double lead = moments[k][k];
    if (lead == 0.0)
      throw Error(ErrorCode::UnsupportedOrder,
                  "E X^" + std::to_string(k) + " has degree < " + std::to_string(k) + " for " +
                      fam.spec());
    a[k] = rhs / lead;
  }
  return a;
}

double eval_poly(std::span<const double> coeffs, double x) {
  double r = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) r = r * x + coeffs[i];
  return r;
}

std::vector<double> t_bar(const KernelFamily& fam, const DataSet& data, unsigned order,
                          double theta0) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "order must be >= 1");
  if (data.empty()) throw Error(ErrorCode::EmptyData, "t_bar needs data");
  if (data.dim != 1) throw Error(ErrorCode::UnsupportedFamily, "t_bar needs univariate data");
  std::vector<double> out(order, 0.0);
  const double n = static_cast<double>(data.size());
  for (unsigned j = 1; j <= order; ++j) {
    const auto a = orthogonal_stat(fam, j, theta0);
    double sum = 0.0;
    for (double x : data.values) sum += eval_poly(a, x);
    out[j - 1] = sum / n;
  }
  return out;
}

}  // namespace mixfit
