#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mixfit/error.hpp"
#include "mixfit/phi.hpp"
#include "oracles.hpp"

using namespace mixfit;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

// sup over a dense grid of |F_G(x) - F_n(x)| with F_n counted directly.
double ks_grid_oracle(const KernelFamily& fam, const MixingMeasure& g, const std::vector<double>& xs, double lo,
                      double hi, int points) {
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  double sup = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * i / (points - 1.0);
    const double fn = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) /
                      static_cast<double>(sorted.size());
    double fg = 0.0;
    for (std::size_t a = 0; a < g.size(); ++a) fg += g.weight(a) * cdf(fam, x, g.atom(a)[0]);
    sup = std::max(sup, std::fabs(fg - fn));
  }
  return sup;
}

// E exp(-|W| / s), W ~ N(mu, sd^2), by Simpson's rule on each side of the kink.
double laplace_factor_oracle(double mu, double sd, double s) {
  auto f = [&](double w) {
    const double u = (w - mu) / sd;
    return std::exp(-std::fabs(w) / s) * std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
  };
  const double lo = std::min(mu - 14 * sd, 0.0), hi = std::max(mu + 14 * sd, 0.0);
  return oracle::simpson(f, lo, 0.0, 20000) + oracle::simpson(f, 0.0, hi, 20000);
}

}  // namespace

TEST_CASE("phi and kernel specs parse") {
  CHECK(PhiSpec::parse("ks").spec() == "ks");
  CHECK(PhiSpec::parse("MMD( rbf , gamma = 0.5 )").spec() == "mmd(rbf,gamma=0.5)");
  CHECK(PhiSpec::parse("mmd(laplace,scale=2)").spec() == "mmd(laplace,scale=2)");
  const auto m = PhiSpec::parse("moments(order=3,theta0=0)");
  REQUIRE(m.get_if<MomentsPhi>());
  CHECK(m.get_if<MomentsPhi>()->order == 3);
  CHECK(code_of([] { PhiSpec::parse("wasserstein"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { PhiSpec::parse("mmd(rbf,gamma=-1)"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { PhiSpec::parse("moments(order=0)"); }) == ErrorCode::ParseError);
  CHECK(RkhsKernel::rbf(2.0).sup_norm() == 1.0);
  CHECK(RkhsKernel::laplace(2.0).sup_norm() == 1.0);
}

TEST_CASE("phi/family compatibility") {
  CHECK(code_of([] { check_phi_family(PhiSpec::moments(3, 0.0), KernelFamily::gaussian(1.0, 2)); }) ==
        ErrorCode::IncompatiblePhiFamily);
  CHECK(code_of([] { check_phi_family(PhiSpec::ks(), KernelFamily::gaussian(1.0, 3)); }) ==
        ErrorCode::IncompatiblePhiFamily);
  CHECK(code_of([] { check_phi_family(PhiSpec::moments(3, -1.0), KernelFamily::poisson()); }) ==
        ErrorCode::IncompatiblePhiFamily);
  check_phi_family(PhiSpec::mmd(RkhsKernel::rbf(1.0)), KernelFamily::poisson());
}

TEST_CASE("mixture cdf examples") {
  const auto gauss = KernelFamily::gaussian(1.0);
  CHECK(mixture_cdf(gauss, make_measure_1d({0.0}, {1.0}), 0.0) == doctest::Approx(0.5));
  CHECK(mixture_cdf(gauss, make_measure_1d({-1.7, 1.7}, {0.5, 0.5}), 0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(mixture_cdf(KernelFamily::poisson(), make_measure_1d({1.0, 2.0}, {0.3, 0.7}), 0.0) ==
        doctest::Approx(0.3 * std::exp(-1.0) + 0.7 * std::exp(-2.0)).epsilon(1e-14));
  CHECK(code_of([] { mixture_cdf(KernelFamily::poisson(), make_measure_1d({-1.0}, {1.0}), 0.0); }) ==
        ErrorCode::AtomOutOfKernelDomain);
}

TEST_CASE("ks objective examples and bounds") {
  const auto gauss = KernelFamily::gaussian(1.0);
  CHECK(ks_objective(gauss, make_measure_1d({0.0}, {1.0}), DataSet::univariate({0.0})) == doctest::Approx(0.5));
  CHECK(code_of([&] { ks_objective(gauss, make_measure_1d({0.0}, {1.0}), DataSet{}); }) == ErrorCode::EmptyData);
  CHECK(code_of([] {
          ks_objective(KernelFamily::gaussian(1.0, 3), make_measure({{0.0, 0.0, 0.0}}, {1.0}),
                       DataSet{3, {0.0, 0.0, 0.0}});
        }) == ErrorCode::UnsupportedDimension);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto g = testing_util::random_measure(rng, 3, 1);
    const std::size_t n = 5 + t * 3;
    const auto data = sample_mixture(gauss, testing_util::random_measure(rng, 2, 1), n, t);
    const double v = ks_objective(gauss, g, data);
    CHECK(v >= 1.0 / (2.0 * n) - 1e-15);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("ks objective dominates a dense grid search") {
  std::mt19937_64 rng(8);
  const std::vector<KernelFamily> fams = {KernelFamily::gaussian(0.8), KernelFamily::gamma(3.0),
                                          KernelFamily::poisson(), KernelFamily::binomial(6),
                                          KernelFamily::negative_binomial(2.0)};
  for (const auto& fam : fams) {
    for (int t = 0; t < 4; ++t) {
      const auto truth = fam.get_if<GaussianLocation>() ? testing_util::random_measure(rng, 2, 1)
                                                        : testing_util::random_measure(rng, 2, 1, 0.5, 4.0);
      const auto g = fam.get_if<GaussianLocation>() ? testing_util::random_measure(rng, 2, 1)
                                                    : testing_util::random_measure(rng, 2, 1, 0.5, 4.0);
      const auto data = sample_mixture(fam, truth, 200, 100 + t);
      const double exact = ks_objective(fam, g, data);
      const double lo = fam.get_if<GaussianLocation>() ? -9.0 : 0.0;
      const double grid = ks_grid_oracle(fam, g, data.values, lo, 25.0, 100000);
      CHECK(grid <= exact + 1e-9);
      CHECK(grid >= exact - 1e-3);
    }
  }
}

TEST_CASE("bivariate ks matches a brute-force sup over corner limits") {
  const auto fam = KernelFamily::gaussian(1.0, 2);
  std::mt19937_64 rng(17);
  for (int t = 0; t < 5; ++t) {
    const auto g = testing_util::random_measure(rng, 2, 2, -1.5, 1.5);
    const auto data = sample_mixture(fam, testing_util::random_measure(rng, 2, 2, -1.5, 1.5), 25, t);
    const double exact = ks_objective(fam, g, data);
    // Candidate corners: every coordinate value approached from either side, plus far-away points.
    std::vector<double> xs{-50.0, 50.0}, ys{-50.0, 50.0};
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (double e : {-1e-10, 1e-10}) {
        xs.push_back(data.at(i)[0] + e);
        ys.push_back(data.at(i)[1] + e);
      }
    }
    double brute = 0.0;
    for (double x : xs) {
      for (double y : ys) {
        double fn = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) fn += (data.at(i)[0] <= x && data.at(i)[1] <= y);
        fn /= static_cast<double>(data.size());
        double fg = 0.0;
        for (std::size_t a = 0; a < g.size(); ++a)
          fg += g.weight(a) * oracle::phi_cdf(x - g.atom(a)[0]) * oracle::phi_cdf(y - g.atom(a)[1]);
        brute = std::max(brute, std::fabs(fg - fn));
      }
    }
    CHECK(exact == doctest::Approx(brute).epsilon(1e-8));
  }
}

TEST_CASE("gaussian mmd closed forms") {
  const auto gauss = KernelFamily::gaussian(1.0);
  const auto rbf = RkhsKernel::rbf(1.0);
  CHECK(mmd_gram(gauss, rbf, 0.3, 0.3) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-14));
  CHECK(mmd_gram(gauss, rbf, 0.0, 1.0) == doctest::Approx(std::exp(-0.2) / std::sqrt(5.0)).epsilon(1e-14));
  CHECK(mmd_gram(gauss, rbf, 0.0, 1.0) == doctest::Approx(0.366148).epsilon(1e-6));
  CHECK(mmd_gram(gauss, RkhsKernel::rbf(1e-12), -2.0, 3.0) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK(mmd_jn(gauss, rbf, 0.4, DataSet::univariate({0.4})) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(mmd_jn(gauss, rbf, 1.0, DataSet::univariate({0.0, 2.0})) ==
        doctest::Approx(std::exp(-1.0 / 3.0) / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(mmd_jn(gauss, rbf, 1.0, DataSet::univariate({0.0, 2.0})) == doctest::Approx(0.413690).epsilon(1e-6));
  CHECK(mmd_jn(gauss, RkhsKernel::rbf(1e-12), 1.0, DataSet::univariate({5.0})) == doctest::Approx(1.0).epsilon(1e-9));

  const double obj = mmd_objective(gauss, rbf, make_measure_1d({0.0}, {1.0}), DataSet::univariate({0.0}));
  CHECK(obj == doctest::Approx(1.0 / std::sqrt(5.0) - 2.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(obj == doctest::Approx(-0.707487).epsilon(1e-6));
}

TEST_CASE("gaussian mmd closed forms agree with quadrature") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> th(-3.0, 3.0), gm(0.05, 3.0), al(0.4, 3.0);
  for (int t = 0; t < 50; ++t) {
    const double a = th(rng), b = th(rng), gamma = gm(rng), alpha = al(rng);
    const auto fam = KernelFamily::gaussian(1.0 / alpha);
    const auto ker = RkhsKernel::rbf(gamma);
    CHECK(std::fabs(mmd_gram(fam, ker, a, b) - oracle::rbf_gram_quadrature(a, b, 1.0 / alpha, gamma)) < 1e-6);
    const double x = th(rng);
    const double jn_q = oracle::normal_expectation([&](double z) { return std::exp(-gamma * (z - x) * (z - x)); }, a,
                                                   1.0 / alpha);
    CHECK(std::fabs(mmd_jn(fam, ker, a, DataSet::univariate({x})) - jn_q) < 1e-6);
  }
}

TEST_CASE("bivariate gaussian gram factorizes") {
  const auto fam = KernelFamily::gaussian(0.7, 2);
  const auto ker = RkhsKernel::rbf(0.6);
  const double a[2] = {0.2, -1.0}, b[2] = {1.1, 0.5};
  const double expect =
      oracle::rbf_gram_quadrature(0.2, 1.1, 0.7, 0.6) * oracle::rbf_gram_quadrature(-1.0, 0.5, 0.7, 0.6);
  CHECK(std::fabs(mmd_gram(fam, ker, a, b) - expect) < 1e-9);
}

TEST_CASE("laplace kernel expectations") {
  const auto fam = KernelFamily::gaussian(0.9);
  const auto ker = RkhsKernel::laplace(1.3);
  for (double d : {-2.0, -0.3, 0.0, 0.8, 2.5}) {
    CHECK(std::fabs(mmd_gram(fam, ker, d, 0.0) - laplace_factor_oracle(d, std::sqrt(2.0) * 0.9, 1.3)) < 1e-8);
    CHECK(std::fabs(mmd_jn(fam, ker, d, DataSet::univariate({0.0})) - laplace_factor_oracle(d, 0.9, 1.3)) < 1e-8);
  }
  const double x[2] = {0.0, 0.0}, y[2] = {1.0, -2.0};
  CHECK(ker(x, y) == doctest::Approx(std::exp(-3.0 / 1.3)).epsilon(1e-14));
}

TEST_CASE("discrete and gamma grams agree with direct sums and integrals") {
  const auto ker = RkhsKernel::rbf(0.3);
  {
    const auto p = oracle::poisson_pmf(2.5, 80), q = oracle::poisson_pmf(4.0, 80);
    double s = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x)
      for (std::size_t y = 0; y < q.size(); ++y) s += p[x] * q[y] * std::exp(-0.3 * std::pow(double(x) - double(y), 2));
    CHECK(std::fabs(mmd_gram(KernelFamily::poisson(), ker, 2.5, 4.0) - s) < 1e-8);
    double j = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x) j += p[x] * 0.5 * (std::exp(-0.3 * x * x) + std::exp(-0.3 * (x - 3.0) * (x - 3.0)));
    CHECK(std::fabs(mmd_jn(KernelFamily::poisson(), ker, 2.5, DataSet::univariate({0.0, 3.0})) - j) < 1e-8);
  }
  {
    const auto p = oracle::binomial_pmf(7, 2.0), q = oracle::binomial_pmf(7, 5.5);
    double s = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x)
      for (std::size_t y = 0; y < q.size(); ++y) s += p[x] * q[y] * std::exp(-0.3 * std::pow(double(x) - double(y), 2));
    CHECK(std::fabs(mmd_gram(KernelFamily::binomial(7), ker, 2.0, 5.5) - s) < 1e-10);
  }
  {
    const double alpha = 3.0;
    auto pdf = [&](double x, double theta) {
      const double b = alpha / theta;
      return x <= 0 ? 0.0 : std::exp((alpha - 1) * std::log(x) - b * x + alpha * std::log(b) - std::lgamma(alpha));
    };
    const double t1 = 1.5, t2 = 2.5;
    const double s = oracle::simpson(
        [&](double x) {
          return pdf(x, t1) * oracle::simpson([&](double y) { return pdf(y, t2) * std::exp(-0.3 * (x - y) * (x - y)); },
                                              0.0, 30.0, 600);
        },
        0.0, 30.0, 600);
    CHECK(std::fabs(mmd_gram(KernelFamily::gamma(alpha), ker, t1, t2) - s) < 1e-7);
  }
}

TEST_CASE("mmd objective structure") {
  const auto gauss = KernelFamily::gaussian(1.0);
  const auto ker = RkhsKernel::rbf(0.5);
  const auto data = sample_mixture(gauss, make_measure_1d({-1.0, 1.0}, {0.5, 0.5}), 300, 3);
  const auto g = make_measure_1d({-0.5, 0.2, 1.4}, {0.2, 0.3, 0.5});
  const auto g_perm = make_measure_1d({1.4, -0.5, 0.2}, {0.5, 0.2, 0.3});
  CHECK(mmd_objective(gauss, ker, g, data) == doctest::Approx(mmd_objective(gauss, ker, g_perm, data)).epsilon(1e-14));
  const double full = mmd_objective(gauss, ker, g, data, true);
  CHECK(full >= 0.0);
  CHECK(full == doctest::Approx(mmd_objective(gauss, ker, g, data) + mmd_data_term(ker, data)).epsilon(1e-12));

  // The squared MMD between P_G and the data equals the V-statistic against a huge P_G sample, roughly.
  const auto big = sample_mixture(gauss, g, 4000, 9);
  const auto small = DataSet::univariate(std::vector<double>(data.values.begin(), data.values.begin() + 300));
  CHECK(std::fabs(mmd_squared_empirical(ker, big, small) - full) < 0.01);
}

TEST_CASE("empirical mmd") {
  const auto ker = RkhsKernel::rbf(1.0);
  const auto p = DataSet::univariate({0.1, 0.5, 2.0});
  CHECK(mmd_squared_empirical(ker, p, p) == doctest::Approx(0.0).scale(1.0));
  CHECK(mmd_squared_empirical(ker, DataSet::univariate({0.0}), DataSet::univariate({0.0})) == 0.0);
  CHECK(mmd_squared_empirical(ker, DataSet::univariate({0.0}), DataSet::univariate({1.0})) ==
        doctest::Approx(2.0 - 2.0 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(code_of([&] { mmd_squared_empirical(ker, p, DataSet{}); }) == ErrorCode::EmptyData);
}

TEST_CASE("population mmd matches the empirical limit") {
  const auto gauss = KernelFamily::gaussian(1.0);
  const auto ker = RkhsKernel::rbf(0.5);
  const auto g = make_measure_1d({-1.0, 1.0}, {0.5, 0.5});
  const auto h = make_measure_1d({0.0}, {1.0});
  const double pop = mmd_squared_population(gauss, ker, g, h);
  const auto a = sample_mixture(gauss, g, 3000, 1), b = sample_mixture(gauss, h, 3000, 2);
  CHECK(std::fabs(mmd_squared_empirical(ker, a, b) - pop) < 0.01);
  CHECK(mmd_squared_population(gauss, ker, g, g) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("moment objective") {
  const auto gauss = KernelFamily::gaussian(1.0);
  const auto g = make_measure_1d({-1.0, 1.0}, {0.5, 0.5});
  const auto m = moments_1d(g, 3, 0.0);
  CHECK(moment_objective(gauss, g, m, 0.0) == 0.0);
  const std::vector<double> pert{0.1, 0.0, 0.0};
  CHECK(moment_objective(gauss, make_measure_1d({0.0}, {1.0}), pert, 0.0) == doctest::Approx(0.1));
  const std::vector<double> sym{0.0, 1.0, 0.0};
  CHECK(moment_objective(gauss, g, sym, 0.0) == 0.0);
  CHECK(code_of([&] { moment_objective(gauss, g, std::vector<double>{}, 0.0); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("moment objective vanishes in probability") {
  const auto fam = KernelFamily::poisson();
  const auto g = make_measure_1d({1.0, 4.0}, {0.4, 0.6});
  const std::size_t n = 1000000;
  const auto data = sample_mixture(fam, g, n, 12);
  const auto tb = t_bar(fam, data, 3, 0.0);
  const double value = moment_objective(fam, g, tb, 0.0);
  double se = 0.0;
  for (unsigned j = 1; j <= 3; ++j) {
    const auto t = orthogonal_stat(fam, j, 0.0);
    double s = 0.0, s2 = 0.0;
    for (double x : data.values) {
      const double v = eval_poly(t, x);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    se = std::max(se, std::sqrt((s2 / n - mean * mean) / n));
  }
  CHECK(value < 10.0 * se);
}

TEST_CASE("phi_objective dispatches to the objective functions") {
  const auto gauss = KernelFamily::gaussian(1.0);
  const auto data = sample_mixture(gauss, make_measure_1d({-1.0, 2.0}, {0.3, 0.7}), 500, 5);
  const auto g = make_measure_1d({-0.8, 1.5}, {0.4, 0.6});

  const auto ks = PhiSpec::ks();
  const auto ks_cache = prepare_phi_cache(ks, gauss, data);
  CHECK(phi_objective(ks, gauss, g, data, &ks_cache) == ks_objective(gauss, g, data));
  CHECK(phi_objective(ks, gauss, g, data) == ks_objective(gauss, g, data));

  const auto mmd = PhiSpec::mmd(RkhsKernel::rbf(0.5));
  const auto mmd_cache = prepare_phi_cache(mmd, gauss, data, true);
  const double mo = phi_objective(mmd, gauss, g, data, &mmd_cache);
  CHECK(std::fabs(mo - mmd_objective(gauss, RkhsKernel::rbf(0.5), g, data)) < 1e-12);
  CHECK(phi_distance(mmd, mo, mmd_cache) ==
        doctest::Approx(std::sqrt(mmd_objective(gauss, RkhsKernel::rbf(0.5), g, data, true))).epsilon(1e-10));

  const auto mom = PhiSpec::moments(3, 0.5);
  const auto mom_cache = prepare_phi_cache(mom, gauss, data);
  CHECK(phi_objective(mom, gauss, g, data, &mom_cache) == moment_objective(gauss, g, t_bar(gauss, data, 3, 0.5), 0.5));

  const auto counts = sample_mixture(KernelFamily::poisson(), make_measure_1d({2.0}, {1.0}), 400, 1);
  const auto pg = make_measure_1d({1.0, 3.0}, {0.5, 0.5});
  const auto pc = prepare_phi_cache(mmd, KernelFamily::poisson(), counts, true);
  CHECK(std::fabs(phi_objective(mmd, KernelFamily::poisson(), pg, counts, &pc) -
                  mmd_objective(KernelFamily::poisson(), RkhsKernel::rbf(0.5), pg, counts)) < 1e-12);
  CHECK(std::fabs(*pc.mmd_data_term - mmd_data_term(RkhsKernel::rbf(0.5), counts)) < 1e-12);
}
