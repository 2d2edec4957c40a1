#include "mixfit/order.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixfit/error.hpp"
#include "mixfit/rng.hpp"

namespace mixfit {

double default_c1(const PhiSpec& phi) {
  if (phi.get_if<KsPhi>()) return std::sqrt(3.0) / 2.0;
  if (auto m = phi.get_if<MmdPhi>()) return 2.0 * m->kernel.sup_norm();
  return 1.0;
}

double default_threshold(const PhiSpec& phi, std::size_t n, std::optional<double> c1) {
  if (n < 2) throw Error(ErrorCode::NTooSmall, "threshold needs n >= 2");
  const double c = c1 ? *c1 : default_c1(phi);
  if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "c1 must be > 0");
  const double nn = static_cast<double>(n);
  return c * std::sqrt(std::log(nn) / nn);
}

OrderResult estimate_order(const std::vector<double>& objectives, double threshold) {
  if (objectives.empty()) throw Error(ErrorCode::EmptyFitList, "no fits to select from");
  OrderResult r;
  r.threshold = threshold;
  r.objectives = objectives;
  for (std::size_t ell = 1; ell <= objectives.size(); ++ell) {
    if (objectives[ell - 1] <= threshold) {
      r.k_hat = ell;
      break;
    }
  }
  return r;
}

OrderResult estimate_order(const std::vector<FitResult>& fits, double threshold) {
  std::vector<double> obj;
  obj.reserve(fits.size());
  for (const auto& f : fits) obj.push_back(f.objective);
  return estimate_order(obj, threshold);
}

OrderResult plug_in(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, std::size_t k_max,
                    const ParamDomain& domain, const OptimizerOptions& opts, std::optional<double> c1,
                    std::span<const MixingMeasure> extra_starts) {
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
  if (data.empty()) throw Error(ErrorCode::EmptyData, "order selection needs data");
  const double threshold = default_threshold(phi, data.size(), c1);
  const auto cache = prepare_phi_cache(phi, fam, data, /*with_mmd_data_term=*/true);
  const auto fits = fit_all_orders(fam, phi, data, cache, k_max, domain, opts, extra_starts);
  std::vector<double> distances;
  for (const auto& f : fits) distances.push_back(phi_distance(phi, f.objective, cache));
  // Clip floating noise so the distances stay nonincreasing like the objectives.
  for (std::size_t i = 1; i < distances.size(); ++i) distances[i] = std::min(distances[i], distances[i - 1]);
  OrderResult r = estimate_order(distances, threshold);
  r.plug_in = r.k_hat ? fits[*r.k_hat - 1] : fits.back();
  return r;
}

namespace {

// Population KS grid: 2048 points per axis over the observation range induced by the
// parameter box, widened by 6 component standard deviations. Integer families use all
// integers in range.
std::vector<double> ks_axis(const KernelFamily& fam, double lo, double hi) {
  const double sd = std::max(fam.component_sd(lo), fam.component_sd(hi));
  double a = lo - 6.0 * sd, b = hi + 6.0 * sd;
  std::vector<double> axis;
  if (fam.is_discrete()) {
    a = std::max(0.0, std::floor(a));
    b = std::min(std::ceil(b), fam.mean_upper());
    for (double x = a; x <= b; x += 1.0) axis.push_back(x);
    return axis;
  }
  if (fam.get_if<GammaShape>()) a = std::max(a, 0.0);
  const std::size_t points = fam.dim() == 1 ? 2048 : 64;
  for (std::size_t i = 0; i < points; ++i)
    axis.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  return axis;
}

double population_ks(const KernelFamily& fam, const MixingMeasure& g, const MixingMeasure& h,
                     const ParamDomain& domain) {
  if (fam.dim() == 1) {
    double sup = 0.0;
    for (double x : ks_axis(fam, domain.lower()[0], domain.upper()[0]))
      sup = std::max(sup, std::fabs(mixture_cdf(fam, g, x) - mixture_cdf(fam, h, x)));
    return sup;
  }
  if (fam.dim() != 2) throw Error(ErrorCode::UnsupportedDimension, "ks supports d <= 2");
  const auto xs = ks_axis(fam, domain.lower()[0], domain.upper()[0]);
  const auto ys = ks_axis(fam, domain.lower()[1], domain.upper()[1]);
  double sup = 0.0;
  for (double x : xs) {
    for (double y : ys) {
      const double pt[2] = {x, y};
      sup = std::max(sup, std::fabs(mixture_cdf(fam, g, pt) - mixture_cdf(fam, h, pt)));
    }
  }
  return sup;
}

}  // namespace

double population_phi_distance(const KernelFamily& fam, const PhiSpec& phi, const MixingMeasure& g,
                               const MixingMeasure& h, const ParamDomain& domain) {
  check_phi_family(phi, fam);
  if (phi.get_if<KsPhi>()) return population_ks(fam, g, h, domain);
  if (auto m = phi.get_if<MmdPhi>()) return std::sqrt(mmd_squared_population(fam, m->kernel, g, h));
  const auto& mp = std::get<MomentsPhi>(phi.variant());
  const auto a = moments_1d(g, mp.order, mp.theta0);
  const auto b = moments_1d(h, mp.order, mp.theta0);
  double sup = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sup = std::max(sup, std::fabs(a[j] - b[j]));
  return sup;
}

double separation_gap(const KernelFamily& fam, const PhiSpec& phi, const MixingMeasure& g,
                      const ParamDomain& domain, const OptimizerOptions& opts) {
  if (g.size() < 2) throw Error(ErrorCode::KTooSmall, "separation gap needs k >= 2 atoms");
  opts.validate();
  check_phi_family(phi, fam);
  check_domain_for_family(fam, domain);
  check_atoms_in_kernel_domain(fam, g);
  const std::size_t k = g.size() - 1;

  const MeasureObjective objective = [&](const MixingMeasure& h) {
    return population_phi_distance(fam, phi, h, g, domain);
  };

  // Starts: G with each atom folded into its nearest neighbour, then random draws.
  std::vector<MixingMeasure> starts;
  for (std::size_t drop = 0; drop < g.size(); ++drop) {
    std::size_t nearest = drop == 0 ? 1 : 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i == drop) continue;
      double d = 0.0;
      for (std::size_t c = 0; c < g.dim(); ++c) d += std::pow(g.atom(i)[c] - g.atom(drop)[c], 2);
      if (d < best) {
        best = d;
        nearest = i;
      }
    }
    std::vector<std::vector<double>> rows;
    std::vector<double> w;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i == drop) continue;
      rows.push_back(domain.clamp(g.atom(i)));
      w.push_back(g.weight(i) + (i == nearest ? g.weight(drop) : 0.0));
    }
    starts.push_back(make_measure(rows, w));
  }
  RandomStream rng(opts.seed ^ 0xB6ULL);
  for (unsigned s = 0; s < opts.restarts; ++s) {
    std::vector<std::vector<double>> rows(k, std::vector<double>(g.dim()));
    for (auto& r : rows)
      for (std::size_t c = 0; c < g.dim(); ++c) r[c] = rng.uniform(domain.lower()[c], domain.upper()[c]);
    starts.push_back(make_measure(rows, std::vector<double>(k, 1.0 / static_cast<double>(k))));
  }

  double gap = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    if (s.size() < k) {
      // Merged atoms: pad back to k via a tiny separate copy inside the box.
      std::vector<std::vector<double>> rows;
      std::vector<double> w;
      for (std::size_t i = 0; i < s.size(); ++i) {
        rows.emplace_back(s.atom(i).begin(), s.atom(i).end());
        w.push_back(s.weight(i));
      }
      while (rows.size() < k) {
        auto r = rows.front();
        for (std::size_t c = 0; c < r.size(); ++c)
          r[c] = std::clamp(r[c] + 1e-3 * (domain.upper()[c] - domain.lower()[c]) * static_cast<double>(rows.size()),
                            domain.lower()[c], domain.upper()[c]);
        w.front() *= 0.5;
        w.push_back(w.front());
        rows.push_back(r);
      }
      gap = std::min(gap, local_search(objective, make_measure(rows, w), domain, opts).objective);
    } else {
      gap = std::min(gap, local_search(objective, s, domain, opts).objective);
    }
  }
  return std::max(gap, 0.0);
}

}  // namespace mixfit
