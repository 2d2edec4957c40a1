#include "mixfit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "mixfit/error.hpp"
#include "mixfit/format.hpp"

namespace mixfit {

void RateStudyConfig::validate() const {
  if (n_grid.empty()) throw Error(ErrorCode::InvalidArgument, "n grid is empty");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1])
      throw Error(ErrorCode::InvalidArgument, "n grid must be strictly increasing");
  }
  if (n_grid.front() < 2) throw Error(ErrorCode::InvalidArgument, "sample sizes must be >= 2");
  if (replications < 1) throw Error(ErrorCode::InvalidArgument, "replications must be >= 1");
  if (!(ell >= 1.0)) throw Error(ErrorCode::InvalidArgument, "ell must be >= 1");
  if (threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be >= 1");
  if (mode == StudyMode::PlugIn && k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
  check_domain_for_family(family, domain);
  check_atoms_in_kernel_domain(family, truth);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!domain.contains(truth.atom(i)))
      throw Error(ErrorCode::AtomOutsideDomain, "truth atom " + std::to_string(i) + " outside the domain");
  }
  check_phi_family(phi, family);
  opts.validate();
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t n, std::size_t r) {
  std::uint64_t h = mix64(master ^ 0xD1B54A32D192ED03ULL);
  h = mix64(h ^ (static_cast<std::uint64_t>(n) * 0x9E3779B97F4A7C15ULL));
  h = mix64(h ^ (static_cast<std::uint64_t>(r) * 0xC2B2AE3D27D4EB4FULL + 0x165667B19E3779F9ULL));
  return h;
}

namespace {

ReplicationRecord run_replication(const RateStudyConfig& cfg, std::size_t n, std::size_t r) {
  ReplicationRecord rec;
  rec.n = n;
  rec.r = r;
  rec.seed = replication_seed(cfg.master_seed, n, r);
  const DataSet data = sample_mixture(cfg.family, cfg.truth, n, rec.seed);

  OptimizerOptions opts = cfg.opts;
  opts.seed = mix64(rec.seed ^ 0xA5A5A5A5ULL);
  std::vector<MixingMeasure> starts;
  if (cfg.inject_truth) starts.push_back(cfg.truth);

  const bool plug = cfg.mode == StudyMode::PlugIn;
  const auto cache = prepare_phi_cache(cfg.phi, cfg.family, data, plug && cfg.phi.get_if<MmdPhi>());
  rec.truth_objective = phi_objective(cfg.phi, cfg.family, cfg.truth, data, &cache);

  MixingMeasure estimate = cfg.truth;
  if (plug) {
    const auto result = plug_in(cfg.family, cfg.phi, data, cfg.k_max, cfg.domain, opts, cfg.c1, starts);
    rec.k_hat = result.k_hat;
    rec.threshold = result.threshold;
    rec.objective = result.plug_in->objective;
    rec.empirical_process = phi_distance(cfg.phi, rec.truth_objective, cache);
    estimate = result.plug_in->measure;
  } else {
    const std::size_t k = cfg.k == 0 ? cfg.truth.size() : cfg.k;
    const auto result = fit(cfg.family, cfg.phi, data, cache, k, cfg.domain, opts, starts);
    rec.objective = result.objective;
    estimate = result.measure;
  }
  const double w = wasserstein(estimate, cfg.truth, cfg.ell);
  rec.error = cfg.power ? std::pow(w, cfg.ell) : w;
  return rec;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace

StudyResult run_study(const RateStudyConfig& cfg) {
  cfg.validate();
  const std::size_t reps = cfg.replications;
  const std::size_t total = cfg.n_grid.size() * reps;
  std::vector<ReplicationRecord> records(total);

  // Jobs are indexed by (n, r); each writes only its own slot.
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    while (!failed.load()) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      try {
        records[job] = run_replication(cfg, cfg.n_grid[job / reps], job % reps);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned threads = std::min<std::size_t>(cfg.threads, total);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  StudyResult out;
  out.replications = records;
  for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
    StudyRow row;
    row.n = cfg.n_grid[i];
    row.reps = reps;
    std::vector<double> errs;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& rec = records[i * reps + r];
      errs.push_back(rec.error);
      if (rec.k_hat && *rec.k_hat == cfg.truth.size()) ++correct;
    }
    double mean = 0.0;
    for (double e : errs) mean += e;
    mean /= static_cast<double>(reps);
    double var = 0.0;
    for (double e : errs) var += (e - mean) * (e - mean);
    row.mean = mean;
    row.se = reps > 1 ? std::sqrt(var / static_cast<double>(reps - 1) / static_cast<double>(reps)) : 0.0;
    if (cfg.mode == StudyMode::PlugIn) row.frac_correct = static_cast<double>(correct) / static_cast<double>(reps);
    if (cfg.median) row.median = median_of(errs);
    out.rows.push_back(row);
  }
  return out;
}

std::vector<StudyRow> run_rate_study(const RateStudyConfig& cfg) { return run_study(cfg).rows; }

std::vector<StudyRow> run_order_study(const RateStudyConfig& cfg) {
  if (cfg.mode != StudyMode::PlugIn)
    throw Error(ErrorCode::InvalidArgument, "order study needs plug-in mode");
  return run_study(cfg).rows;
}

SlopeFit fit_log_log_slope(const std::vector<StudyRow>& rows) {
  if (rows.size() < 2) throw Error(ErrorCode::TooFewRows, "slope fit needs >= 2 rows");
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (!(r.mean > 0.0)) throw Error(ErrorCode::NonPositiveMean, "slope fit needs positive means");
    if (r.n == 0) throw Error(ErrorCode::InvalidArgument, "sample size 0 in slope fit");
    x.push_back(std::log(static_cast<double>(r.n)));
    y.push_back(std::log(r.mean));
  }
  const double m = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorCode::TooFewRows, "slope fit needs distinct n values");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (f.intercept + f.slope * x[i]);
      ssr += e * e;
    }
    f.std_error = std::sqrt(ssr / (m - 2.0) / sxx);
  }
  return f;
}

// ---- CSV ----

namespace {

std::string csv_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

std::string to_csv(const std::vector<StudyRow>& rows) {
  const bool with_median = std::any_of(rows.begin(), rows.end(), [](const StudyRow& r) { return r.median.has_value(); });
  std::string s = "n,mean,se,reps,frac_correct";
  if (with_median) s += ",median";
  s += "\n";
  for (const auto& r : rows) {
    s += std::to_string(r.n) + "," + csv_number(r.mean) + "," + csv_number(r.se) + "," + std::to_string(r.reps) + ",";
    if (r.frac_correct) s += csv_number(*r.frac_correct);
    if (with_median) s += "," + (r.median ? csv_number(*r.median) : std::string());
    s += "\n";
  }
  return s;
}

void write_csv(const std::vector<StudyRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << to_csv(rows);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::vector<StudyRow> read_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("n,mean,se,reps,frac_correct", 0) != 0)
    throw Error(ErrorCode::ParseError, "missing CSV header");
  const bool with_median = line.find(",median") != std::string::npos;
  std::vector<StudyRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != (with_median ? 6u : 5u)) throw Error(ErrorCode::ParseError, "bad CSV row: " + line);
    try {
      StudyRow r;
      r.n = std::stoull(f[0]);
      r.mean = std::stod(f[1]);
      r.se = std::stod(f[2]);
      r.reps = std::stoull(f[3]);
      if (!f[4].empty()) r.frac_correct = std::stod(f[4]);
      if (with_median && !f[5].empty()) r.median = std::stod(f[5]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "bad CSV row: " + line);
    }
  }
  return rows;
}

// ---- SVG ----

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_plot(const std::vector<StudyRow>& rows, const std::optional<SlopeFit>& fit,
                     const std::string& title) {
  if (rows.empty()) throw Error(ErrorCode::TooFewRows, "plot needs at least one row");
  for (const auto& r : rows)
    if (!(r.mean > 0.0) || r.n == 0) throw Error(ErrorCode::NonPositiveMean, "plot needs positive means");

  const double width = 640, height = 480, left = 80, right = 30, top = 40, bottom = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : rows) {
    const double lx = std::log10(static_cast<double>(r.n));
    const double lo = r.mean - 2.0 * r.se > 0.0 ? r.mean - 2.0 * r.se : r.mean / 10.0;
    xmin = std::min(xmin, lx);
    xmax = std::max(xmax, lx);
    ymin = std::min(ymin, std::log10(lo));
    ymax = std::max(ymax, std::log10(r.mean + 2.0 * r.se));
  }
  xmin = std::floor(xmin * 2.0) / 2.0 - 0.1;
  xmax = std::ceil(xmax * 2.0) / 2.0 + 0.1;
  ymin = std::floor(ymin) - 0.1;
  ymax = std::ceil(ymax) + 0.1;
  if (ymax - ymin < 1.0) ymax = ymin + 1.0;
  auto px = [&](double lx) { return left + (lx - xmin) / (xmax - xmin) * (width - left - right); };
  auto py = [&](double ly) { return height - bottom - (ly - ymin) / (ymax - ymin) * (height - top - bottom); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  if (!title.empty())
    s << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  // Axes and decade ticks.
  s << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
    << height - bottom << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
    << "\" stroke=\"black\"/>\n";
  for (double t = std::ceil(xmin * 2.0) / 2.0; t <= xmax; t += 0.5) {
    s << "<line x1=\"" << fixed(px(t)) << "\" y1=\"" << height - bottom << "\" x2=\"" << fixed(px(t)) << "\" y2=\""
      << height - bottom + 5 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fixed(px(t)) << "\" y=\"" << height - bottom + 20
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << format_number(std::pow(10.0, t))
      << "</text>\n";
  }
  for (double t = std::ceil(ymin); t <= ymax; t += 1.0) {
    s << "<line x1=\"" << left - 5 << "\" y1=\"" << fixed(py(t)) << "\" x2=\"" << left << "\" y2=\"" << fixed(py(t))
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << fixed(py(t) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" << static_cast<int>(t) << "</text>\n";
  }
  s << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 15
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">sample size n</text>\n";
  s << "<text x=\"18\" y=\"" << (top + height - bottom) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
    << "font-size=\"13\" transform=\"rotate(-90 18 " << (top + height - bottom) / 2 << ")\">mean error</text>\n";

  for (const auto& r : rows) {
    const double lx = std::log10(static_cast<double>(r.n));
    const double lo = r.mean - 2.0 * r.se > 0.0 ? r.mean - 2.0 * r.se : r.mean / 10.0;
    const double x = px(lx);
    s << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(py(std::log10(lo))) << "\" x2=\"" << fixed(x) << "\" y2=\""
      << fixed(py(std::log10(r.mean + 2.0 * r.se))) << "\" stroke=\"steelblue\"/>\n";
    s << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(py(std::log10(r.mean)))
      << "\" r=\"4\" fill=\"steelblue\"/>\n";
  }
  if (fit) {
    // log10 y = (intercept + slope ln n) / ln 10
    auto ly = [&](double lx) { return (fit->intercept + fit->slope * lx * std::log(10.0)) / std::log(10.0); };
    const double x0 = std::log10(static_cast<double>(rows.front().n));
    const double x1 = std::log10(static_cast<double>(rows.back().n));
    s << "<line x1=\"" << fixed(px(x0)) << "\" y1=\"" << fixed(py(ly(x0))) << "\" x2=\"" << fixed(px(x1))
      << "\" y2=\"" << fixed(py(ly(x1))) << "\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>\n";
    s << "<text x=\"" << width - right - 10 << "\" y=\"" << top + 20
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"13\" fill=\"firebrick\">slope = "
      << fixed(fit->slope, 3) << " (se " << fixed(fit->std_error, 3) << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void render_svg_plot(const std::vector<StudyRow>& rows, const std::optional<SlopeFit>& fit,
                     const std::string& path, const std::string& title) {
  const std::string svg = svg_plot(rows, fit, title);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << svg;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace mixfit
