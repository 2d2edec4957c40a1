#include "mixfit/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mixfit/error.hpp"
#include "mixfit/format.hpp"

namespace mixfit {

ParamDomain::ParamDomain(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.empty()) throw Error(ErrorCode::InvalidArgument, "domain must have q >= 1");
  if (lower_.size() != upper_.size())
    throw Error(ErrorCode::DimensionMismatch, "domain bounds have different lengths");
  for (std::size_t j = 0; j < lower_.size(); ++j) {
    if (!(lower_[j] < upper_[j]))
      throw Error(ErrorCode::InvalidArgument,
                  "domain requires lower < upper in coordinate " + std::to_string(j));
  }
}

ParamDomain ParamDomain::cube(std::size_t q, double lo, double hi) {
  return ParamDomain(std::vector<double>(q, lo), std::vector<double>(q, hi));
}

bool ParamDomain::contains(std::span<const double> theta) const {
  if (theta.size() != dim()) return false;
  for (std::size_t j = 0; j < dim(); ++j) {
    if (!(theta[j] >= lower_[j] && theta[j] <= upper_[j])) return false;
  }
  return true;
}

std::vector<double> ParamDomain::clamp(std::span<const double> theta) const {
  std::vector<double> out(theta.begin(), theta.end());
  for (std::size_t j = 0; j < out.size() && j < dim(); ++j)
    out[j] = std::clamp(out[j], lower_[j], upper_[j]);
  return out;
}

double ParamDomain::diameter() const {
  double s = 0.0;
  for (std::size_t j = 0; j < dim(); ++j) s += (upper_[j] - lower_[j]) * (upper_[j] - lower_[j]);
  return std::sqrt(s);
}

std::size_t MixingMeasure::heaviest() const {
  return static_cast<std::size_t>(std::max_element(weights_.begin(), weights_.end()) -
                                  weights_.begin());
}

MixingMeasure make_measure(const std::vector<std::vector<double>>& atoms,
                           const std::vector<double>& weights,
                           const std::optional<ParamDomain>& domain) {
  if (atoms.empty()) throw Error(ErrorCode::InvalidArgument, "measure needs at least one atom");
  if (atoms.size() != weights.size())
    throw Error(ErrorCode::LengthMismatch, "atoms and weights differ in length");
  const std::size_t q = atoms.front().size();
  if (q == 0) throw Error(ErrorCode::InvalidArgument, "atoms must have dimension >= 1");

  double total = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].size() != q) throw Error(ErrorCode::DimensionMismatch, "atoms differ in dimension");
    for (double v : atoms[i]) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite atom coordinate");
    }
    if (!(weights[i] >= kWeightTolerance))
      throw Error(ErrorCode::NonPositiveWeight,
                  "weight " + format_number(weights[i]) + " at atom " + std::to_string(i));
    if (domain) {
      if (domain->dim() != q) throw Error(ErrorCode::DimensionMismatch, "atom/domain dimension");
      if (!domain->contains(atoms[i]))
        throw Error(ErrorCode::AtomOutsideDomain, "atom " + std::to_string(i) + " outside domain");
    }
    total += weights[i];
  }
  if (std::fabs(total - 1.0) > kWeightTolerance)
    throw Error(ErrorCode::WeightSumNotOne, "weights sum to " + format_exact(total));

  MixingMeasure g;
  g.dim_ = q;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    bool merged = false;
    for (std::size_t k = 0; k < g.weights_.size(); ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < q; ++j)
        dist = std::max(dist, std::fabs(g.atoms_[k * q + j] - atoms[i][j]));
      if (dist <= kAtomMergeTolerance) {
        g.weights_[k] += weights[i];
        merged = true;
        break;
      }
    }
    if (!merged) {
      g.atoms_.insert(g.atoms_.end(), atoms[i].begin(), atoms[i].end());
      g.weights_.push_back(weights[i]);
    }
  }
  return g;
}

MixingMeasure make_measure_1d(const std::vector<double>& atoms, const std::vector<double>& weights,
                              const std::optional<ParamDomain>& domain) {
  std::vector<std::vector<double>> rows;
  rows.reserve(atoms.size());
  for (double a : atoms) rows.push_back({a});
  return make_measure(rows, weights, domain);
}

MixingMeasure shift_scale(const MixingMeasure& g, std::span<const double> theta, double eps) {
  if (eps == 0.0) throw Error(ErrorCode::ZeroScale, "scale factor must be nonzero");
  if (theta.size() != g.dim()) throw Error(ErrorCode::DimensionMismatch, "shift dimension");
  std::vector<std::vector<double>> atoms(g.size(), std::vector<double>(g.dim()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto a = g.atom(i);
    for (std::size_t j = 0; j < g.dim(); ++j) atoms[i][j] = eps * (a[j] - theta[j]);
  }
  return make_measure(atoms, g.weights());
}

// ---- multi-indices ----

namespace {

void compositions(std::size_t q, unsigned remaining, std::size_t pos, MultiIndex& cur,
                  std::vector<MultiIndex>& out) {
  if (pos + 1 == q) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (unsigned v = remaining + 1; v-- > 0;) {
    cur[pos] = v;
    compositions(q, remaining - v, pos + 1, cur, out);
  }
}

double monomial(std::span<const double> x, std::span<const double> center, const MultiIndex& alpha) {
  double r = 1.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) r *= std::pow(x[j] - center[j], alpha[j]);
  return r;
}

}  // namespace

std::vector<MultiIndex> enumerate_multi_indices(std::size_t q, unsigned order) {
  if (q == 0) throw Error(ErrorCode::InvalidArgument, "q must be >= 1");
  std::vector<MultiIndex> out;
  MultiIndex cur(q, 0);
  for (unsigned d = 0; d <= order; ++d) compositions(q, d, 0, cur, out);
  return out;
}

std::map<MultiIndex, double> moment_vector(const MixingMeasure& g, unsigned order,
                                           std::span<const double> theta0) {
  if (order < 1) throw Error(ErrorCode::InvalidArgument, "moment order must be >= 1");
  if (theta0.size() != g.dim()) throw Error(ErrorCode::DimensionMismatch, "theta0 dimension");
  std::map<MultiIndex, double> out;
  for (const auto& alpha : enumerate_multi_indices(g.dim(), order)) {
    unsigned degree = 0;
    for (unsigned a : alpha) degree += a;
    if (degree == 0) continue;
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m += g.weight(i) * monomial(g.atom(i), theta0, alpha);
    out.emplace(alpha, m);
  }
  return out;
}

std::vector<double> moments_1d(const MixingMeasure& g, unsigned order, double theta0) {
  if (g.dim() != 1) throw Error(ErrorCode::DimensionMismatch, "moments_1d needs q = 1");
  std::vector<double> m(order, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g.atom(i)[0] - theta0;
    double pw = 1.0;
    for (unsigned j = 0; j < order; ++j) {
      pw *= d;
      m[j] += g.weight(i) * pw;
    }
  }
  return m;
}

// ---- serialization ----

MixingMeasure read_measure(std::istream& in) {
  std::vector<std::vector<double>> atoms;
  std::vector<double> weights;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> vals;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    if (vals.size() < 2)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": need `p theta...`");
    weights.push_back(vals.front());
    atoms.emplace_back(vals.begin() + 1, vals.end());
  }
  if (atoms.empty()) throw Error(ErrorCode::ParseError, "measure has no atoms");
  return make_measure(atoms, weights);
}

MixingMeasure read_measure_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_measure(in);
}

void write_measure(std::ostream& out, const MixingMeasure& g) {
  out << "# p theta_1 ... theta_q\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << format_exact(g.weight(i));
    for (double v : g.atom(i)) out << ' ' << format_exact(v);
    out << '\n';
  }
}

void write_measure_file(const std::string& path, const MixingMeasure& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_measure(out, g);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::string to_string(const MixingMeasure& g) {
  std::string s;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) s += " + ";
    s += format_number(g.weight(i)) + "*delta(";
    auto a = g.atom(i);
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (j) s += ",";
      s += format_number(a[j]);
    }
    s += ")";
  }
  return s;
}

}  // namespace mixfit
