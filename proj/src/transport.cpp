// Exact transportation LP between two discrete measures.
//
// Primal network simplex on the complete bipartite graph rows x cols. The basis
// is a spanning tree of m + n - 1 cells (degenerate cells carry zero flow).
// Entering cells follow Bland's rule, which rules out cycling on degenerate
// pivots; the problems here are at most a few dozen cells.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>

#include "mixfit/error.hpp"
#include "mixfit/measure.hpp"

namespace mixfit {
namespace {

struct Cell {
  std::size_t row;
  std::size_t col;
};

class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                   std::vector<std::vector<double>> cost)
      : m_(supply.size()), n_(demand.size()), cost_(std::move(cost)),
        flow_(m_, std::vector<double>(n_, 0.0)), basic_(m_, std::vector<char>(n_, 0)) {
    north_west_corner(std::move(supply), std::move(demand));
  }

  void solve() {
    double scale = 0.0;
    for (const auto& row : cost_)
      for (double c : row) scale = std::max(scale, std::fabs(c));
    const double tol = 1e-13 * std::max(1.0, scale);
    const std::size_t max_pivots = 50 * (m_ + n_) * (m_ + n_) + 100;

    for (std::size_t pivot = 0; pivot < max_pivots; ++pivot) {
      compute_potentials();
      std::optional<Cell> entering;
      for (std::size_t i = 0; i < m_ && !entering; ++i) {
        for (std::size_t j = 0; j < n_; ++j) {
          if (basic_[i][j]) continue;
          if (cost_[i][j] - u_[i] - v_[j] < -tol) {
            entering = Cell{i, j};
            break;
          }
        }
      }
      if (!entering) return;
      pivot_on(*entering);
    }
  }

  const std::vector<std::vector<double>>& flow() const { return flow_; }

  double total_cost() const {
    double s = 0.0;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) s += flow_[i][j] * cost_[i][j];
    return s;
  }

 private:
  void north_west_corner(std::vector<double> supply, std::vector<double> demand) {
    std::size_t i = 0, j = 0;
    while (true) {
      const bool last_row = i + 1 == m_;
      const bool last_col = j + 1 == n_;
      double x = std::min(supply[i], demand[j]);
      if (last_row && last_col) x = std::max(supply[i], 0.0);
      if (last_row && !last_col) x = demand[j];
      if (last_col && !last_row) x = supply[i];
      x = std::max(x, 0.0);
      flow_[i][j] = x;
      basic_[i][j] = 1;
      supply[i] -= x;
      demand[j] -= x;
      if (last_row && last_col) break;
      if (last_col || (!last_row && supply[i] <= demand[j])) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  void compute_potentials() {
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<char> seen_row(m_, 0), seen_col(n_, 0);
    std::queue<std::size_t> q;  // node ids: rows 0..m-1, cols m..m+n-1
    seen_row[0] = 1;
    q.push(0);
    while (!q.empty()) {
      const std::size_t node = q.front();
      q.pop();
      if (node < m_) {
        for (std::size_t j = 0; j < n_; ++j) {
          if (basic_[node][j] && !seen_col[j]) {
            v_[j] = cost_[node][j] - u_[node];
            seen_col[j] = 1;
            q.push(m_ + j);
          }
        }
      } else {
        const std::size_t j = node - m_;
        for (std::size_t i = 0; i < m_; ++i) {
          if (basic_[i][j] && !seen_row[i]) {
            u_[i] = cost_[i][j] - v_[j];
            seen_row[i] = 1;
            q.push(i);
          }
        }
      }
    }
  }

  // Tree path from row node `r` to column node `c`, as the list of basic cells.
  std::vector<Cell> tree_path(std::size_t r, std::size_t c) const {
    const std::size_t total = m_ + n_;
    const std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> parent(total, none);
    std::queue<std::size_t> q;
    parent[r] = r;
    q.push(r);
    while (!q.empty()) {
      const std::size_t node = q.front();
      q.pop();
      if (node == m_ + c) break;
      if (node < m_) {
        for (std::size_t j = 0; j < n_; ++j) {
          if (basic_[node][j] && parent[m_ + j] == none) {
            parent[m_ + j] = node;
            q.push(m_ + j);
          }
        }
      } else {
        const std::size_t j = node - m_;
        for (std::size_t i = 0; i < m_; ++i) {
          if (basic_[i][j] && parent[i] == none) {
            parent[i] = node;
            q.push(i);
          }
        }
      }
    }
    std::vector<Cell> path;
    for (std::size_t node = m_ + c; node != r; node = parent[node]) {
      const std::size_t p = parent[node];
      if (node >= m_) {
        path.push_back({p, node - m_});
      } else {
        path.push_back({node, p - m_});
      }
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  void pivot_on(Cell in) {
    // Cycle: in (+), then the tree path row(in) -> col(in) alternating -, +, -, ...
    const auto path = tree_path(in.row, in.col);
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = path.size();
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const double x = flow_[path[k].row][path[k].col];
      if (x < theta) {
        theta = x;
        leave = k;
      }
    }
    theta = std::max(theta, 0.0);
    flow_[in.row][in.col] = theta;
    for (std::size_t k = 0; k < path.size(); ++k) {
      double& x = flow_[path[k].row][path[k].col];
      x += (k % 2 == 0) ? -theta : theta;
    }
    basic_[in.row][in.col] = 1;
    const Cell out = path[leave];
    flow_[out.row][out.col] = 0.0;
    basic_[out.row][out.col] = 0;
  }

  std::size_t m_, n_;
  std::vector<std::vector<double>> cost_;
  std::vector<std::vector<double>> flow_;
  std::vector<std::vector<char>> basic_;
  std::vector<double> u_, v_;
};

TransportSimplex solve_transport(const MixingMeasure& g, const MixingMeasure& h, double ell) {
  if (g.dim() != h.dim())
    throw Error(ErrorCode::DimensionMismatch, "measures have different parameter dimensions");
  if (!(ell >= 1.0) || !std::isfinite(ell))
    throw Error(ErrorCode::InvalidArgument, "Wasserstein order must be a finite real >= 1");
  std::vector<std::vector<double>> cost(g.size(), std::vector<double>(h.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < h.size(); ++j) {
      double d2 = 0.0;
      auto a = g.atom(i);
      auto b = h.atom(j);
      for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
      cost[i][j] = std::pow(std::sqrt(d2), ell);
    }
  }
  TransportSimplex lp(g.weights(), h.weights(), std::move(cost));
  lp.solve();
  return lp;
}

}  // namespace

double wasserstein(const MixingMeasure& g, const MixingMeasure& h, double ell) {
  const auto lp = solve_transport(g, h, ell);
  return std::pow(std::max(lp.total_cost(), 0.0), 1.0 / ell);
}

std::vector<std::vector<double>> optimal_coupling(const MixingMeasure& g, const MixingMeasure& h,
                                                  double ell) {
  return solve_transport(g, h, ell).flow();
}

}  // namespace mixfit
