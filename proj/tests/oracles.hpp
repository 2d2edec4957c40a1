#pragma once
// Reference computations used to check the library. Everything here is written
// from first principles and avoids the library's own numerical routines.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

inline double ground_cost(const std::vector<double>& a, const std::vector<double>& b, double ell) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::pow(std::sqrt(s), ell);
}

// Minimum transport cost by enumerating every basis of the m x n transportation
// polytope: each vertex has its support inside a spanning tree of K_{m,n}, so
// solving every spanning tree by leaf peeling and keeping the feasible ones
// visits all vertices.
inline double vertex_enumeration_cost(const std::vector<double>& p, const std::vector<double>& q,
                                      const std::vector<std::vector<double>>& cost) {
  const std::size_t m = p.size(), n = q.size(), cells = m * n, basis = m + n - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(cells, 0);
  std::fill(pick.end() - static_cast<long>(basis), pick.end(), 1);
  do {
    std::vector<std::size_t> sel;
    for (std::size_t c = 0; c < cells; ++c)
      if (pick[c]) sel.push_back(c);
    // acyclic check by union-find over row nodes 0..m-1 and column nodes m..m+n-1
    std::vector<std::size_t> parent(m + n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    bool tree = true;
    for (std::size_t c : sel) {
      const std::size_t a = find(c / n), b = find(m + c % n);
      if (a == b) {
        tree = false;
        break;
      }
      parent[a] = b;
    }
    if (!tree) continue;
    std::vector<double> supply(p), demand(q);
    std::vector<bool> done(sel.size(), false);
    std::vector<double> flow(sel.size(), 0.0);
    for (std::size_t round = 0; round < sel.size(); ++round) {
      // find a node touching exactly one unassigned cell
      bool progressed = false;
      for (std::size_t node = 0; node < m + n && !progressed; ++node) {
        std::size_t count = 0, which = 0;
        for (std::size_t e = 0; e < sel.size(); ++e) {
          if (done[e]) continue;
          const bool touches = node < m ? sel[e] / n == node : sel[e] % n == node - m;
          if (touches) {
            ++count;
            which = e;
          }
        }
        if (count != 1) continue;
        const std::size_t i = sel[which] / n, j = sel[which] % n;
        const double f = node < m ? supply[i] : demand[j];
        flow[which] = f;
        supply[i] -= f;
        demand[j] -= f;
        done[which] = true;
        progressed = true;
      }
      if (!progressed) break;
    }
    bool feasible = std::all_of(done.begin(), done.end(), [](bool d) { return d; });
    double total = 0.0;
    for (std::size_t e = 0; e < sel.size() && feasible; ++e) {
      if (flow[e] < -1e-12) feasible = false;
      total += std::max(flow[e], 0.0) * cost[sel[e] / n][sel[e] % n];
    }
    if (feasible) best = std::min(best, total);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

// Gauss-Hermite nodes and weights for integral f(x) exp(-x^2) dx, by Newton
// iteration on the orthonormal Hermite recurrence.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
  std::vector<double> x(n), w(n);
  const double pim4 = 0.7511255444649425;  // pi^{-1/4}
  double z = 0.0;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) <= 1e-15) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  return {x, w};
}

// E f(Z) for Z ~ N(mu, sd^2).
inline double normal_expectation(const std::function<double(double)>& f, double mu, double sd, int nodes = 120) {
  static thread_local std::vector<std::pair<int, std::pair<std::vector<double>, std::vector<double>>>> memo;
  const std::pair<std::vector<double>, std::vector<double>>* gh = nullptr;
  for (const auto& m : memo)
    if (m.first == nodes) gh = &m.second;
  if (!gh) {
    memo.emplace_back(nodes, gauss_hermite(nodes));
    gh = &memo.back().second;
  }
  double s = 0.0;
  for (int i = 0; i < nodes; ++i) s += gh->second[i] * f(mu + std::sqrt(2.0) * sd * gh->first[i]);
  return s / std::sqrt(M_PI);
}

// K(theta, theta') = E exp(-gamma (Z - Z')^2) by a tensor-product Gauss-Hermite rule.
inline double rbf_gram_quadrature(double theta, double theta2, double sigma, double gamma) {
  return normal_expectation(
      [&](double z) {
        return normal_expectation([&](double z2) { return std::exp(-gamma * (z - z2) * (z - z2)); }, theta2, sigma);
      },
      theta, sigma);
}

// Composite Simpson on [a, b] with 2m panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int m) {
  const double h = (b - a) / (2 * m);
  double s = f(a) + f(b);
  for (int i = 1; i < 2 * m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Standard normal CDF through the complementary error function of the C library.
inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Empirical CDF F_n(x) = #{x_i <= x} / n, by a linear scan.
inline double empirical_cdf(const std::vector<double>& xs, double x) {
  std::size_t c = 0;
  for (double v : xs) c += v <= x;
  return static_cast<double>(c) / static_cast<double>(xs.size());
}

// Poisson / binomial / negative binomial pmfs by direct recurrences.
inline std::vector<double> poisson_pmf(double theta, std::size_t upto) {
  std::vector<double> p(upto + 1);
  p[0] = std::exp(-theta);
  for (std::size_t k = 1; k <= upto; ++k) p[k] = p[k - 1] * theta / static_cast<double>(k);
  return p;
}

inline std::vector<double> binomial_pmf(unsigned m, double theta) {
  const double pr = theta / m;
  std::vector<double> p(m + 1);
  p[0] = std::pow(1.0 - pr, m);
  for (unsigned k = 1; k <= m; ++k) p[k] = p[k - 1] * (m - k + 1) / k * pr / (1.0 - pr);
  return p;
}

inline std::vector<double> negbin_pmf(double r, double theta, std::size_t upto) {
  const double pr = r / (r + theta);
  std::vector<double> p(upto + 1);
  p[0] = std::pow(pr, r);
  for (std::size_t k = 1; k <= upto; ++k) p[k] = p[k - 1] * (r + k - 1) / static_cast<double>(k) * (1.0 - pr);
  return p;
}

}  // namespace oracle
