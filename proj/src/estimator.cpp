#include "mixfit/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "mixfit/error.hpp"
#include "mixfit/rng.hpp"

namespace mixfit {

void OptimizerOptions::validate() const {
  if (restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
  if (!(objective_tolerance > 0.0) || !(simplex_tolerance > 0.0))
    throw Error(ErrorCode::InvalidArgument, "optimizer tolerances must be > 0");
}

void check_domain_for_family(const KernelFamily& fam, const ParamDomain& domain) {
  if (domain.dim() != fam.dim())
    throw Error(ErrorCode::DimensionMismatch, "domain dimension " + std::to_string(domain.dim()) +
                                                  " vs family dimension " + std::to_string(fam.dim()));
  if (!fam.in_mean_domain(domain.lower()) || !fam.in_mean_domain(domain.upper()))
    throw Error(ErrorCode::AtomOutOfKernelDomain,
                "parameter box must lie inside the open mean domain of " + fam.name());
}

namespace {

// A k-atom measure whose atoms may coincide (the optimizer's native state).
struct RawMeasure {
  std::size_t q = 1;
  std::vector<double> atoms;
  std::vector<double> weights;

  std::size_t k() const { return weights.size(); }
  MixingMeasure to_measure() const {
    std::vector<std::vector<double>> rows(k());
    for (std::size_t i = 0; i < k(); ++i)
      rows[i].assign(atoms.begin() + i * q, atoms.begin() + (i + 1) * q);
    return make_measure(rows, weights);
  }
};

RawMeasure raw_from(const MixingMeasure& g) {
  return RawMeasure{g.dim(), g.flat_atoms(), g.weights()};
}

// Pads g to exactly k atoms by repeatedly halving the heaviest atom.
RawMeasure pad_to(const MixingMeasure& g, std::size_t k) {
  RawMeasure r = raw_from(g);
  if (r.k() > k)
    throw Error(ErrorCode::InvalidArgument, "start measure has more than k atoms");
  while (r.k() < k) {
    const auto h = static_cast<std::size_t>(std::max_element(r.weights.begin(), r.weights.end()) -
                                            r.weights.begin());
    r.weights[h] *= 0.5;
    r.weights.push_back(r.weights[h]);
    for (std::size_t c = 0; c < r.q; ++c) r.atoms.push_back(r.atoms[h * r.q + c]);
  }
  return r;
}

constexpr double kLogitClamp = 1e-12;
constexpr double kWeightLogitBound = 12.0;

// Atoms: coordinatewise logit of the position inside the box. Weights: log-ratios
// to the last weight, whose logit is pinned to 0.
class Reparam {
 public:
  Reparam(const ParamDomain& domain, std::size_t k) : domain_(domain), k_(k), q_(domain.dim()) {}

  std::size_t size() const { return k_ * q_ + (k_ - 1); }

  std::vector<double> encode(const RawMeasure& r) const {
    std::vector<double> u(size());
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t c = 0; c < q_; ++c) {
        const double lo = domain_.lower()[c], hi = domain_.upper()[c];
        double s = (r.atoms[i * q_ + c] - lo) / (hi - lo);
        s = std::clamp(s, kLogitClamp, 1.0 - kLogitClamp);
        u[i * q_ + c] = std::log(s / (1.0 - s));
      }
    }
    const double last = std::log(r.weights[k_ - 1]);
    for (std::size_t i = 0; i + 1 < k_; ++i) u[k_ * q_ + i] = std::log(r.weights[i]) - last;
    return u;
  }

  RawMeasure decode(const std::vector<double>& u) const {
    RawMeasure r{q_, std::vector<double>(k_ * q_), std::vector<double>(k_)};
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t c = 0; c < q_; ++c) {
        const double lo = domain_.lower()[c], hi = domain_.upper()[c];
        const double s = 1.0 / (1.0 + std::exp(-u[i * q_ + c]));
        r.atoms[i * q_ + c] = std::clamp(lo + (hi - lo) * s, lo, hi);
      }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k_; ++i) {
      const double z = i + 1 < k_ ? std::clamp(u[k_ * q_ + i], -kWeightLogitBound, kWeightLogitBound) : 0.0;
      r.weights[i] = std::exp(z);
      total += r.weights[i];
    }
    for (double& w : r.weights) w /= total;
    return r;
  }

  // Initial simplex edge per coordinate: about 5% of the box width (atoms) or a 5%
  // change of the weight (weights), capped at 2 in the transformed units.
  std::vector<double> steps(const RawMeasure& r) const {
    std::vector<double> st(size());
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t c = 0; c < q_; ++c) {
        const double lo = domain_.lower()[c], hi = domain_.upper()[c];
        const double s = std::clamp((r.atoms[i * q_ + c] - lo) / (hi - lo), 0.01, 0.99);
        st[i * q_ + c] = std::min(2.0, 0.05 / (s * (1.0 - s)));
      }
    }
    for (std::size_t i = 0; i + 1 < k_; ++i) {
      const double w = std::clamp(r.weights[i], 0.01, 0.99);
      st[k_ * q_ + i] = std::min(2.0, 0.05 / (w * (1.0 - w)));
    }
    return st;
  }

 private:
  const ParamDomain& domain_;
  std::size_t k_, q_;
};

struct SearchOutcome {
  MixingMeasure measure;
  double objective;
  std::size_t evaluations;
  bool converged;
};

double safe_eval(const MeasureObjective& objective, const MixingMeasure& g) {
  const double v = objective(g);
  return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

SearchOutcome nelder_mead(const MeasureObjective& objective, const RawMeasure& start,
                          const ParamDomain& domain, const OptimizerOptions& opts,
                          std::vector<double>* trace) {
  const MixingMeasure init = start.to_measure();
  const double f_init = safe_eval(objective, init);
  if (!std::isfinite(f_init))
    throw Error(ErrorCode::NonFiniteObjectiveAtInit, "objective is not finite at the start");
  std::size_t evals = 1;
  if (opts.max_iterations == 0) return {init, f_init, evals, false};

  const Reparam rp(domain, start.k());
  const std::size_t n = rp.size();
  auto eval_u = [&](const std::vector<double>& u) {
    ++evals;
    return safe_eval(objective, rp.decode(u).to_measure());
  };

  std::vector<std::vector<double>> x(n + 1, rp.encode(start));
  std::vector<double> f(n + 1);
  const auto step = rp.steps(start);
  f[0] = eval_u(x[0]);
  for (std::size_t i = 0; i < n; ++i) {
    x[i + 1][i] += step[i];
    f[i + 1] = eval_u(x[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  bool converged = false;
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  for (unsigned iter = 0; iter < opts.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (trace) trace->push_back(f[best]);

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t c = 0; c < n; ++c) diameter = std::max(diameter, std::fabs(x[i][c] - x[best][c]));
    if (f[worst] - f[best] <= opts.objective_tolerance || diameter <= opts.simplex_tolerance) {
      converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < n; ++c) centroid[c] += x[order[i]][c] / static_cast<double>(n);

    for (std::size_t c = 0; c < n; ++c) xr[c] = centroid[c] + (centroid[c] - x[worst][c]);
    const double fr = eval_u(xr);
    if (fr < f[best]) {
      for (std::size_t c = 0; c < n; ++c) xe[c] = centroid[c] + 2.0 * (centroid[c] - x[worst][c]);
      const double fe = eval_u(xe);
      if (fe < fr) {
        x[worst] = xe;
        f[worst] = fe;
      } else {
        x[worst] = xr;
        f[worst] = fr;
      }
      continue;
    }
    if (fr < f[second]) {
      x[worst] = xr;
      f[worst] = fr;
      continue;
    }
    bool shrink = false;
    if (fr < f[worst]) {
      for (std::size_t c = 0; c < n; ++c) xc[c] = centroid[c] + 0.5 * (xr[c] - centroid[c]);
      const double fc = eval_u(xc);
      if (fc <= fr) {
        x[worst] = xc;
        f[worst] = fc;
      } else {
        shrink = true;
      }
    } else {
      for (std::size_t c = 0; c < n; ++c) xc[c] = centroid[c] + 0.5 * (x[worst][c] - centroid[c]);
      const double fc = eval_u(xc);
      if (fc < f[worst]) {
        x[worst] = xc;
        f[worst] = fc;
      } else {
        shrink = true;
      }
    }
    if (shrink) {
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == best) continue;
        for (std::size_t c = 0; c < n; ++c) x[i][c] = x[best][c] + 0.5 * (x[i][c] - x[best][c]);
        f[i] = eval_u(x[i]);
      }
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
  const MixingMeasure best_measure = rp.decode(x[best]).to_measure();
  // Re-evaluate so the reported objective is exactly the objective of the returned measure.
  const double f_best = safe_eval(objective, best_measure);
  ++evals;
  if (f_init <= f_best) return {init, f_init, evals, converged};
  return {best_measure, f_best, evals, converged};
}

std::vector<double> sorted_coordinate(const DataSet& data, std::size_t c) {
  std::vector<double> v(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) v[i] = data.at(i)[c];
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::vector<MixingMeasure> initializations(const KernelFamily& fam, const DataSet& data, std::size_t k,
                                           const ParamDomain& domain, std::size_t count,
                                           std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "count must be >= 1");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (data.empty()) throw Error(ErrorCode::EmptyData, "initializations need data");
  if (data.dim != domain.dim() || fam.dim() != domain.dim())
    throw Error(ErrorCode::DimensionMismatch, "data/domain/family dimensions differ");
  const std::size_t q = domain.dim();
  std::vector<MixingMeasure> out;

  // Quantile candidate; E_theta X = theta maps observations to parameters directly.
  std::vector<std::vector<double>> atoms(k, std::vector<double>(q));
  for (std::size_t c = 0; c < q; ++c) {
    const auto xs = sorted_coordinate(data, c);
    const double lo = domain.lower()[c], hi = domain.upper()[c];
    for (std::size_t i = 0; i < k; ++i) {
      const double level = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
      const double pos = level * static_cast<double>(xs.size() - 1);
      const auto a = static_cast<std::size_t>(std::floor(pos));
      const auto b = std::min(a + 1, xs.size() - 1);
      const double v = xs[a] + (pos - static_cast<double>(a)) * (xs[b] - xs[a]);
      atoms[i][c] = std::clamp(v, lo, hi);
    }
  }
  // Coincident quantiles (ties or clamping) would collapse the order; spread them out.
  for (std::size_t i = 1; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dist = 0.0;
      for (std::size_t c = 0; c < q; ++c) dist = std::max(dist, std::fabs(atoms[i][c] - atoms[j][c]));
      if (dist <= 1e-9) {
        for (std::size_t c = 0; c < q; ++c) {
          const double lo = domain.lower()[c], hi = domain.upper()[c];
          atoms[i][c] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(k);
        }
        break;
      }
    }
  }
  out.push_back(make_measure(atoms, std::vector<double>(k, 1.0 / static_cast<double>(k)), domain));

  for (std::size_t s = 1; s < count; ++s) {
    RandomStream rng(mix64(seed) ^ mix64(0x5EEDULL + s));
    std::vector<std::vector<double>> ra(k, std::vector<double>(q));
    for (auto& a : ra)
      for (std::size_t c = 0; c < q; ++c) a[c] = rng.uniform(domain.lower()[c], domain.upper()[c]);
    // Flat Dirichlet via normalized exponentials, floored away from zero.
    std::vector<double> w(k);
    double total = 0.0;
    for (double& v : w) total += (v = -std::log(rng.uniform()) + 1e-3);
    for (double& v : w) v /= total;
    total = std::accumulate(w.begin(), w.end(), 0.0);
    w.back() += 1.0 - total;
    out.push_back(make_measure(ra, w, domain));
  }
  return out;
}

FitResult local_search(const MeasureObjective& objective, const MixingMeasure& init,
                       const ParamDomain& domain, const OptimizerOptions& opts,
                       std::vector<double>* trace) {
  opts.validate();
  if (init.dim() != domain.dim()) throw Error(ErrorCode::DimensionMismatch, "init/domain dimension");
  const auto out = nelder_mead(objective, raw_from(init), domain, opts, trace);
  return FitResult{out.measure, out.objective, out.evaluations, out.converged, 0};
}

namespace {

void check_fit_inputs(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, std::size_t k,
                      const ParamDomain& domain) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (data.empty()) throw Error(ErrorCode::EmptyData, "fit needs data");
  check_phi_family(phi, fam);
  if (auto m = phi.get_if<MomentsPhi>()) {
    if (m->order < 2 * k - 1)
      throw Error(ErrorCode::IncompatiblePhiFamily,
                  "moments order " + std::to_string(m->order) + " < 2k-1 = " + std::to_string(2 * k - 1));
  }
  check_domain_for_family(fam, domain);
}

}  // namespace

FitResult fit(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, const PhiCache& cache,
              std::size_t k, const ParamDomain& domain, const OptimizerOptions& opts,
              std::span<const MixingMeasure> extra_starts) {
  opts.validate();
  check_fit_inputs(fam, phi, data, k, domain);

  std::vector<RawMeasure> starts;
  if (opts.use_default_starts) {
    for (const auto& g : initializations(fam, data, k, domain, opts.restarts, opts.seed))
      starts.push_back(pad_to(g, k));
  }
  for (const auto& g : extra_starts) {
    if (g.dim() != domain.dim()) throw Error(ErrorCode::DimensionMismatch, "start dimension");
    std::vector<std::vector<double>> rows(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) rows[i] = domain.clamp(g.atom(i));
    starts.push_back(pad_to(make_measure(rows, g.weights()), k));
  }
  if (starts.empty()) throw Error(ErrorCode::InvalidArgument, "no starting points");

  const MeasureObjective objective = [&](const MixingMeasure& g) {
    return phi_objective(phi, fam, g, data, &cache);
  };

  std::optional<FitResult> best;
  std::size_t total_evals = 0;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const auto out = nelder_mead(objective, starts[s], domain, opts, nullptr);
    total_evals += out.evaluations;
    if (!best || out.objective < best->objective)
      best = FitResult{out.measure, out.objective, 0, out.converged, s};
  }
  best->evaluations = total_evals;
  return *best;
}

FitResult fit(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data, std::size_t k,
              const ParamDomain& domain, const OptimizerOptions& opts,
              std::span<const MixingMeasure> extra_starts) {
  check_fit_inputs(fam, phi, data, k, domain);
  const auto cache = prepare_phi_cache(phi, fam, data);
  return fit(fam, phi, data, cache, k, domain, opts, extra_starts);
}

std::vector<FitResult> fit_all_orders(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data,
                                      const PhiCache& cache, std::size_t k_max,
                                      const ParamDomain& domain, const OptimizerOptions& opts,
                                      std::span<const MixingMeasure> extra_starts) {
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
  std::vector<FitResult> out;
  for (std::size_t ell = 1; ell <= k_max; ++ell) {
    std::vector<MixingMeasure> starts;
    for (const auto& g : extra_starts)
      if (g.size() <= ell) starts.push_back(g);
    if (ell > 1) {
      // Split the heaviest atom of the previous solution into two nearby atoms.
      const auto& prev = out.back().measure;
      const std::size_t h = prev.heaviest();
      std::vector<std::vector<double>> rows;
      std::vector<double> weights;
      for (std::size_t i = 0; i < prev.size(); ++i) {
        if (i == h) continue;
        rows.emplace_back(prev.atom(i).begin(), prev.atom(i).end());
        weights.push_back(prev.weight(i));
      }
      std::vector<double> up(prev.atom(h).begin(), prev.atom(h).end()), down = up;
      for (std::size_t c = 0; c < up.size(); ++c) {
        const double off = 0.01 * (domain.upper()[c] - domain.lower()[c]);
        up[c] = std::min(up[c] + off, domain.upper()[c]);
        down[c] = std::max(down[c] - off, domain.lower()[c]);
      }
      rows.push_back(down);
      rows.push_back(up);
      weights.push_back(0.5 * prev.weight(h));
      weights.push_back(0.5 * prev.weight(h));
      starts.push_back(make_measure(rows, weights));
    }
    FitResult r = fit(fam, phi, data, cache, ell, domain, opts, starts);
    if (ell > 1 && r.objective > out.back().objective + 1e-12) {
      // Fallback: keep the previous solution; it is a valid order-ell measure with fewer atoms.
      r = out.back();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<FitResult> fit_all_orders(const KernelFamily& fam, const PhiSpec& phi, const DataSet& data,
                                      std::size_t k_max, const ParamDomain& domain,
                                      const OptimizerOptions& opts,
                                      std::span<const MixingMeasure> extra_starts) {
  if (data.empty()) throw Error(ErrorCode::EmptyData, "fit needs data");
  const auto cache = prepare_phi_cache(phi, fam, data);
  return fit_all_orders(fam, phi, data, cache, k_max, domain, opts, extra_starts);
}

}  // namespace mixfit
