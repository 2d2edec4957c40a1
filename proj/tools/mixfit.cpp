// mixfit: command-line front end for the minimum-distance mixture estimators.
//
// Exit codes: 0 success, 2 validation, 3 IO, 4 non-convergence under --strict,
// 5 study-shape errors (slope needs at least two sample sizes).

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mixfit/data.hpp"
#include "mixfit/error.hpp"
#include "mixfit/estimator.hpp"
#include "mixfit/experiment.hpp"
#include "mixfit/family.hpp"
#include "mixfit/format.hpp"
#include "mixfit/measure.hpp"
#include "mixfit/order.hpp"
#include "mixfit/phi.hpp"

namespace {

using namespace mixfit;

enum Exit { kOk = 0, kValidation = 2, kIo = 3, kNotConverged = 4, kStudyShape = 5 };

struct CliFailure {
  int code;
  std::string message;
};

// Every command reads from this one bag; each subcommand registers only the fields it uses.
struct Settings {
  std::string config;
  std::string family = "gaussian(sigma=1,d=1)";
  std::string phi = "ks";
  std::string data;
  std::string truth;
  std::string measure;
  std::string lower = "-5";
  std::string upper = "5";
  std::string out;
  std::size_t k = 1;
  std::size_t k_max = 4;
  double c1 = 0.0;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  unsigned restarts = 8;
  unsigned max_iterations = 2000;
  double ftol = 1e-9;
  double xtol = 1e-10;
  bool strict = false;
  // studies
  std::string mode = "known-k";
  std::size_t study_k = 0;
  std::string n_grid = "250,1000,4000,16000";
  std::size_t replications = 10;
  double ell = 1.0;
  bool power = false;
  bool inject_truth = false;
  bool median = false;
  unsigned threads = 0;
  std::string csv = "study.csv";
  std::string svg = "study.svg";
  std::string title;
  // wasserstein
  std::string measure_a;
  std::string measure_b;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CliFailure{kValidation, "cannot parse " + what + " value '" + s + "'"};
  }
}

// Flat `key = value` overlay. Flags already given on the command line win; unknown keys fail.
void apply_config(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliFailure{kIo, "cannot open config file " + path};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CliFailure{kValidation, path + ":" + std::to_string(lineno) + ": expected key = value"};
    const std::string raw_key = trim(line.substr(0, eq));
    std::string key = raw_key;
    std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    CLI::Option* opt = key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
    if (!opt) throw CliFailure{kValidation, path + ":" + std::to_string(lineno) + ": unknown key '" + raw_key + "'"};
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw CliFailure{kValidation, path + ":" + std::to_string(lineno) + ": bad value for '" + raw_key + "': " + e.what()};
    }
  }
}

std::vector<double> parse_box_side(const std::string& s, std::size_t dim, const std::string& what) {
  std::vector<double> v;
  for (const auto& tok : split(s, ',')) v.push_back(parse_double(tok, what));
  if (v.size() == 1 && dim > 1) v.assign(dim, v.front());
  if (v.size() != dim)
    throw CliFailure{kValidation, what + " has " + std::to_string(v.size()) + " values, family dimension is " +
                                      std::to_string(dim)};
  return v;
}

ParamDomain domain_for(const Settings& s, const KernelFamily& fam) {
  return ParamDomain(parse_box_side(s.lower, fam.dim(), "lower"), parse_box_side(s.upper, fam.dim(), "upper"));
}

// A measure argument is a file path, or inline text with `;` between atoms: "0.5 -1; 0.5 1".
MixingMeasure load_measure(const std::string& arg) {
  if (arg.find(';') == std::string::npos) {
    std::ifstream probe(arg);
    if (probe) return read_measure(probe);
    bool numeric = !trim(arg).empty();
    for (char c : arg)
      if (!(std::isdigit(static_cast<unsigned char>(c)) || std::string(" .+-eE\t").find(c) != std::string::npos))
        numeric = false;
    if (!numeric) throw CliFailure{kIo, "cannot open measure file " + arg};
  }
  std::string text = arg;
  std::replace(text.begin(), text.end(), ';', '\n');
  std::istringstream in(text);
  return read_measure(in);
}

OptimizerOptions optimizer_options(const Settings& s) {
  OptimizerOptions o;
  o.restarts = s.restarts;
  o.max_iterations = s.max_iterations;
  o.objective_tolerance = s.ftol;
  o.simplex_tolerance = s.xtol;
  o.seed = s.seed;
  o.validate();
  return o;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw CliFailure{kValidation, "missing required option --" + flag};
}

std::optional<double> c1_of(const Settings& s) {
  if (s.c1 == 0.0) return std::nullopt;
  return s.c1;
}

void add_optimizer_flags(CLI::App* cmd, Settings& s) {
  cmd->add_option("--restarts", s.restarts, "Default starts: the quantile start plus restarts - 1 random ones");
  cmd->add_option("--max-iterations", s.max_iterations, "Nelder-Mead iterations per start");
  cmd->add_option("--ftol", s.ftol, "Objective spread tolerance");
  cmd->add_option("--xtol", s.xtol, "Simplex diameter tolerance");
}

void add_model_flags(CLI::App* cmd, Settings& s) {
  cmd->add_option("--family", s.family, "Component family, e.g. gaussian(sigma=1,d=1), poisson, gamma(alpha=2)");
  cmd->add_option("--phi", s.phi, "Objective: ks, mmd(rbf,gamma=1), mmd(laplace,scale=1), moments(order=3,theta0=0)");
  cmd->add_option("--lower", s.lower, "Parameter box lower corner (comma list or one value for every axis)");
  cmd->add_option("--upper", s.upper, "Parameter box upper corner");
}

void add_seed_flag(CLI::App* cmd, Settings& s, const std::string& what) {
  cmd->add_option("--seed", s.seed, what + " (falls back to $MIXFIT_SEED when not given)");
}

void add_config_flag(CLI::App* cmd, Settings& s) {
  cmd->add_option("--config", s.config, "Flat key = value file; command-line flags take precedence");
}

// ---- commands ----

int cmd_gen(const Settings& s) {
  require(s.truth, "truth");
  require(s.out, "out");
  const auto fam = KernelFamily::parse(s.family);
  const auto truth = load_measure(s.truth);
  const auto data = sample_mixture(fam, truth, s.n, s.seed);
  if (s.out == "-") {
    write_data(std::cout, data);
  } else {
    write_data_file(s.out, data);
  }
  return kOk;
}

int cmd_fit(const Settings& s) {
  require(s.data, "data");
  const auto fam = KernelFamily::parse(s.family);
  const auto phi = PhiSpec::parse(s.phi);
  const auto domain = domain_for(s, fam);
  const auto opts = optimizer_options(s);
  const auto data = read_data_file(s.data);
  const auto result = fit(fam, phi, data, s.k, domain, opts);
  std::cout << "k=" << result.measure.size() << " objective=" << format_number(result.objective)
            << " converged=" << (result.converged ? "true" : "false") << "\n";
  if (!s.out.empty()) write_measure_file(s.out, result.measure);
  if (s.strict && !result.converged) {
    std::cerr << "mixfit: optimizer did not converge\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_score(const Settings& s) {
  require(s.data, "data");
  require(s.measure, "measure");
  const auto fam = KernelFamily::parse(s.family);
  const auto phi = PhiSpec::parse(s.phi);
  const auto data = read_data_file(s.data);
  const auto g = load_measure(s.measure);
  check_phi_family(phi, fam);
  const auto cache = prepare_phi_cache(phi, fam, data, true);
  const double objective = phi_objective(phi, fam, g, data, &cache);
  std::cout << "objective=" << format_number(objective)
            << " distance=" << format_number(phi_distance(phi, objective, cache)) << "\n";
  return kOk;
}

int cmd_order(const Settings& s) {
  require(s.data, "data");
  const auto fam = KernelFamily::parse(s.family);
  const auto phi = PhiSpec::parse(s.phi);
  const auto domain = domain_for(s, fam);
  const auto opts = optimizer_options(s);
  const auto data = read_data_file(s.data);
  const auto result = plug_in(fam, phi, data, s.k_max, domain, opts, c1_of(s));
  std::cout << "k_hat=" << (result.k_hat ? std::to_string(*result.k_hat) : std::string("undetermined")) << "\n";
  std::cout << "a_n=" << format_number(result.threshold) << "\n";
  for (std::size_t l = 0; l < result.objectives.size(); ++l)
    std::cout << "distance[" << l + 1 << "]=" << format_number(result.objectives[l]) << "\n";
  if (!s.out.empty()) write_measure_file(s.out, result.plug_in->measure);
  if (s.strict && !result.plug_in->converged) {
    std::cerr << "mixfit: optimizer did not converge\n";
    return kNotConverged;
  }
  return kOk;
}

RateStudyConfig study_config(const Settings& s, bool order_study) {
  require(s.truth, "truth");
  const auto fam = KernelFamily::parse(s.family);
  RateStudyConfig cfg{fam, load_measure(s.truth), PhiSpec::parse(s.phi), domain_for(s, fam)};
  if (s.mode == "known-k") {
    cfg.mode = StudyMode::KnownK;
  } else if (s.mode == "plug-in") {
    cfg.mode = StudyMode::PlugIn;
  } else {
    throw CliFailure{kValidation, "unknown mode '" + s.mode + "' (known-k or plug-in)"};
  }
  if (order_study) cfg.mode = StudyMode::PlugIn;
  cfg.k = s.study_k;
  cfg.k_max = s.k_max;
  cfg.c1 = c1_of(s);
  for (const auto& tok : split(s.n_grid, ',')) {
    const double v = parse_double(tok, "n-grid");
    if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw CliFailure{kValidation, "n-grid entries must be positive integers, got '" + tok + "'"};
    cfg.n_grid.push_back(static_cast<std::size_t>(v));
  }
  cfg.replications = s.replications;
  cfg.ell = s.ell;
  cfg.power = s.power;
  cfg.master_seed = s.seed;
  cfg.opts = optimizer_options(s);
  cfg.inject_truth = s.inject_truth;
  cfg.threads = s.threads ? s.threads : std::max(1u, std::thread::hardware_concurrency());
  cfg.median = s.median;
  return cfg;
}

void print_rows(const std::vector<StudyRow>& rows) {
  for (const auto& r : rows) {
    std::cout << "n=" << r.n << " mean=" << format_number(r.mean) << " se=" << format_number(r.se);
    if (r.frac_correct) std::cout << " frac_correct=" << format_number(*r.frac_correct);
    if (r.median) std::cout << " median=" << format_number(*r.median);
    std::cout << "\n";
  }
}

int cmd_rate_study(const Settings& s) {
  const auto cfg = study_config(s, false);
  const auto rows = run_rate_study(cfg);
  print_rows(rows);
  write_csv(rows, s.csv);
  std::optional<SlopeFit> slope;
  int code = kOk;
  try {
    slope = fit_log_log_slope(rows);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewRows && e.code() != ErrorCode::NonPositiveMean) throw;
    std::cerr << "mixfit: " << e.what() << "\n";
    code = kStudyShape;
  }
  const bool plottable = std::all_of(rows.begin(), rows.end(), [](const StudyRow& r) { return r.mean > 0.0; });
  if (plottable) render_svg_plot(rows, slope, s.svg, s.title);
  if (slope)
    std::cout << "slope=" << format_number(slope->slope) << " stderr=" << format_number(slope->std_error) << "\n";
  return code;
}

int cmd_order_study(const Settings& s) {
  const auto cfg = study_config(s, true);
  const auto rows = run_order_study(cfg);
  print_rows(rows);
  write_csv(rows, s.csv);
  const bool plottable = std::all_of(rows.begin(), rows.end(), [](const StudyRow& r) { return r.mean > 0.0; });
  if (plottable) render_svg_plot(rows, std::nullopt, s.svg, s.title);
  return kOk;
}

int cmd_wasserstein(const Settings& s) {
  const auto a = load_measure(s.measure_a);
  const auto b = load_measure(s.measure_b);
  std::cout << format_number(wasserstein(a, b, s.ell)) << "\n";
  return kOk;
}

int exit_code_for(ErrorCode code) { return code == ErrorCode::IoError ? kIo : kValidation; }

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"Minimum-distance estimation of finite mixture mixing measures", "mixfit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  auto* gen = app.add_subcommand("gen", "Sample data from a mixture");
  add_config_flag(gen, s);
  gen->add_option("--family", s.family, "Component family");
  gen->add_option("--truth", s.truth, "Mixing measure file, or inline \"p theta; p theta\"");
  gen->add_option("--n", s.n, "Number of observations");
  add_seed_flag(gen, s, "Sampling seed");
  gen->add_option("--out", s.out, "Output data file (- for stdout)");

  auto* fitc = app.add_subcommand("fit", "Fit a k-atom mixing measure");
  add_config_flag(fitc, s);
  add_model_flags(fitc, s);
  fitc->add_option("--data", s.data, "Data file, one observation per line");
  fitc->add_option("--k", s.k, "Number of atoms");
  add_optimizer_flags(fitc, s);
  add_seed_flag(fitc, s, "Optimizer seed");
  fitc->add_option("--out", s.out, "Write the fitted measure here");
  fitc->add_flag("--strict", s.strict, "Exit 4 when the optimizer does not converge");

  auto* order = app.add_subcommand("order", "Select the number of components and fit the plug-in estimate");
  add_config_flag(order, s);
  add_model_flags(order, s);
  order->add_option("--data", s.data, "Data file, one observation per line");
  order->add_option("--k-max", s.k_max, "Largest order tried");
  order->add_option("--c1", s.c1, "Threshold constant in a_n = c1 sqrt(ln n / n); 0 selects the default for --phi");
  add_optimizer_flags(order, s);
  add_seed_flag(order, s, "Optimizer seed");
  order->add_option("--out", s.out, "Write the plug-in measure here");
  order->add_flag("--strict", s.strict, "Exit 4 when the selected fit did not converge");

  std::vector<CLI::App*> studies;
  for (const char* name : {"rate-study", "order-study"}) {
    const bool is_order = std::string(name) == "order-study";
    auto* st = app.add_subcommand(name, is_order ? "Monte Carlo frequency of selecting the true order"
                                                 : "Monte Carlo convergence-rate study with log-log slope");
    st->add_option("study", s.config, "Study config file (same as --config)");
    add_config_flag(st, s);
    add_model_flags(st, s);
    st->add_option("--truth", s.truth, "True mixing measure file, or inline \"p theta; p theta\"");
    if (!is_order) {
      st->add_option("--mode", s.mode, "known-k or plug-in");
      st->add_option("--k", s.study_k, "Fitted order in known-k mode; 0 uses the truth's order");
    }
    st->add_option("--k-max", s.k_max, "Largest order tried in plug-in mode");
    st->add_option("--c1", s.c1, "Threshold constant; 0 selects the default for --phi");
    st->add_option("--n-grid", s.n_grid, "Comma-separated increasing sample sizes");
    st->add_option("--replications", s.replications, "Replications per sample size");
    st->add_option("--ell", s.ell, "Wasserstein order of the error metric");
    st->add_flag("--power", s.power, "Record W_ell^ell instead of W_ell");
    st->add_flag("--inject-truth", s.inject_truth, "Add the truth as an extra optimizer start");
    st->add_flag("--median", s.median, "Add a median column");
    add_optimizer_flags(st, s);
    add_seed_flag(st, s, "Master seed");
    st->add_option("--threads", s.threads, "Worker threads; 0 uses the available parallelism");
    st->add_option("--csv", s.csv, "Output CSV path");
    st->add_option("--svg", s.svg, "Output SVG path");
    st->add_option("--title", s.title, "Plot title");
    studies.push_back(st);
  }

  auto* wass = app.add_subcommand("wasserstein", "Exact Wasserstein distance between two measure files");
  wass->add_option("a", s.measure_a, "First measure")->required();
  wass->add_option("b", s.measure_b, "Second measure")->required();
  wass->add_option("--ell", s.ell, "Order ell >= 1");

  auto* score = app.add_subcommand("score", "Objective of a given measure on a data file");
  add_config_flag(score, s);
  score->add_option("--family", s.family, "Component family");
  score->add_option("--phi", s.phi, "Objective");
  score->add_option("--data", s.data, "Data file");
  score->add_option("--measure", s.measure, "Measure file, or inline \"p theta; p theta\"");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    if (!s.config.empty()) apply_config(active, s.config);
    // The seed falls back to the environment only when neither the command line nor the config set it.
    CLI::Option* seed_opt = active->get_option_no_throw("--seed");
    if (seed_opt && seed_opt->count() == 0) {
      if (const char* env = std::getenv("MIXFIT_SEED")) {
        try {
          s.seed = std::stoull(env);
        } catch (const std::exception&) {
          throw CliFailure{kValidation, std::string("MIXFIT_SEED is not an unsigned integer: ") + env};
        }
      }
    }

    if (active == gen) return cmd_gen(s);
    if (active == fitc) return cmd_fit(s);
    if (active == order) return cmd_order(s);
    if (active == studies[0]) return cmd_rate_study(s);
    if (active == studies[1]) return cmd_order_study(s);
    if (active == wass) return cmd_wasserstein(s);
    if (active == score) return cmd_score(s);
  } catch (const CliFailure& f) {
    std::cerr << "mixfit: " << f.message << "\n";
    return f.code;
  } catch (const Error& e) {
    std::cerr << "mixfit: " << e.what() << "\n";
    return exit_code_for(e.code());
  }
  return kOk;
}
