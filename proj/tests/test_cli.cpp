#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mixfit/family.hpp"
#include "mixfit/measure.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch directory shared by every case; commands run inside it.
struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("mixfit_cli_" + std::to_string(::getpid()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

const fs::path& scratch() {
  static const Scratch s;
  return s.dir;
}

Run run(const std::string& args) {
  ::unsetenv("MIXFIT_SEED");
  const auto err = scratch() / "stderr.txt";
  const std::string cmd =
      "cd '" + scratch().string() + "' && '" + MIXFIT_CLI + "' " + args + " 2>'" + err.string() + "'";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

void write_file(const std::string& name, const std::string& text) {
  std::ofstream(scratch() / name, std::ios::binary) << text;
}

std::size_t count_lines(const std::string& s) {
  std::size_t c = 0;
  for (char ch : s) c += ch == '\n';
  return c;
}

// Value following `key=` on the first line that has it.
std::string field(const std::string& out, const std::string& key) {
  const auto pos = out.find(key + "=");
  if (pos == std::string::npos) return "";
  const auto start = pos + key.size() + 1;
  return out.substr(start, out.find_first_of(" \n", start) - start);
}

}  // namespace

TEST_CASE("gen") {
  const auto a = run("gen --truth '0.5 -1; 0.5 1' --n 5 --seed 3 --out -");
  CHECK(a.code == 0);
  CHECK(count_lines(a.out) == 5);
  CHECK(run("gen --truth '0.5 -1; 0.5 1' --n 5 --seed 3 --out -").out == a.out);
  CHECK(run("gen --truth '0.5 -1; 0.5 1' --n 5 --seed 4 --out -").out != a.out);

  const auto bad = run("gen --family bogus --truth '1 0' --n 5 --out -");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("bogus") != std::string::npos);

  CHECK(run("gen --truth '0.5 -1; 0.5 1' --n 2000 --seed 1 --out data.txt").code == 0);
  CHECK(count_lines(slurp(scratch() / "data.txt")) == 2000);
}

TEST_CASE("seed falls back to the environment") {
  const auto plain = run("gen --truth '1 0' --n 3 --out -");
  const auto env = run("gen --truth '1 0' --n 3 --out -");
  CHECK(plain.out == env.out);
  ::setenv("MIXFIT_SEED", "99", 1);
  const std::string cmd = "cd '" + scratch().string() + "' && '" + MIXFIT_CLI + "' gen --truth '1 0' --n 3 --out -";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  std::string seeded;
  char buf[256];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) seeded.append(buf, got);
  ::pclose(pipe);
  ::unsetenv("MIXFIT_SEED");
  CHECK(seeded == run("gen --truth '1 0' --n 3 --seed 99 --out -").out);
}

TEST_CASE("fit and score round trip") {
  REQUIRE(run("gen --truth '0.5 -1; 0.5 1' --n 2000 --seed 1 --out data.txt").code == 0);
  const auto f = run("fit --data data.txt --k 2 --restarts 3 --out fit.txt");
  REQUIRE(f.code == 0);
  const std::string objective = field(f.out, "objective");
  CHECK(!objective.empty());
  CHECK(f.out.find("converged=") != std::string::npos);
  const auto fitted = mixfit::read_measure_file((scratch() / "fit.txt").string());
  CHECK(fitted.size() <= 2);

  const auto s = run("score --data data.txt --measure fit.txt");
  CHECK(s.code == 0);
  CHECK(field(s.out, "objective") == objective);

  CHECK(run("fit --data missing.txt --k 2").code == 3);
  CHECK(run("fit --data data.txt --k 2 --phi 'moments(order=1,theta0=0)'").code == 2);
  CHECK(run("fit --data data.txt --k 2 --max-iterations 3 --strict").code == 4);
}

TEST_CASE("order") {
  REQUIRE(run("gen --truth '0.5 -2; 0.5 2' --n 1000 --seed 2 --out data2.txt").code == 0);
  const auto huge = run("order --data data2.txt --k-max 3 --restarts 3 --c1 1000");
  CHECK(huge.code == 0);
  CHECK(field(huge.out, "k_hat") == "1");

  const auto tiny = run("order --data data2.txt --k-max 3 --restarts 3 --c1 1e-9 --out plug.txt");
  CHECK(tiny.code == 0);
  CHECK(field(tiny.out, "k_hat") == "undetermined");
  CHECK(fs::exists(scratch() / "plug.txt"));
  double prev = 1e300;
  for (int l = 1; l <= 3; ++l) {
    const auto v = field(tiny.out, "distance[" + std::to_string(l) + "]");
    REQUIRE(!v.empty());
    CHECK(std::stod(v) <= prev);
    prev = std::stod(v);
  }
  CHECK(!field(tiny.out, "a_n").empty());
}

TEST_CASE("wasserstein") {
  CHECK(std::stod(run("wasserstein '0.5 -1; 0.5 1' '0.5 -1; 0.5 1'").out) == 0.0);
  CHECK(std::stod(run("wasserstein '1 0' '1 2'").out) == doctest::Approx(2.0).epsilon(1e-12));
  write_file("g.txt", "0.3 -1\n0.7 2\n");
  write_file("h.txt", "0.5 0\n0.25 1\n0.25 3\n");
  const auto g = mixfit::read_measure_file((scratch() / "g.txt").string());
  const auto h = mixfit::read_measure_file((scratch() / "h.txt").string());
  const auto w = run("wasserstein g.txt h.txt --ell 2");
  CHECK(w.code == 0);
  CHECK(std::stod(w.out) == doctest::Approx(mixfit::wasserstein(g, h, 2.0)).epsilon(1e-11));
  CHECK(run("wasserstein nothere.txt h.txt").code == 3);
}

TEST_CASE("rate-study") {
  const auto minimal = run("rate-study --truth '0.5 -1; 0.5 1' --n-grid 100 --replications 1 --restarts 2 "
                           "--csv one.csv --svg one.svg");
  CHECK(minimal.code == 5);
  CHECK(fs::exists(scratch() / "one.csv"));

  const std::string args = "--truth '0.5 -1; 0.5 1' --n-grid 100,400 --replications 2 --restarts 2 --seed 4 ";
  const auto a = run("rate-study " + args + "--csv a.csv --svg a.svg");
  CHECK(a.code == 0);
  CHECK(a.out.find("slope=") != std::string::npos);
  CHECK(run("rate-study " + args + "--threads 3 --csv b.csv --svg b.svg").code == 0);
  CHECK(slurp(scratch() / "a.csv") == slurp(scratch() / "b.csv"));
  CHECK(slurp(scratch() / "a.svg").rfind("<svg", 0) == 0);

  const auto order = run("order-study --truth '1 0' --n-grid 100 --replications 2 --k-max 2 --restarts 2 "
                         "--c1 1000 --csv o.csv --svg o.svg");
  CHECK(order.code == 0);
  CHECK(field(order.out, "frac_correct") == "1");
}

TEST_CASE("config files") {
  write_file("study.cfg",
             "# small study\n"
             "truth = \"0.5 -1; 0.5 1\"\n"
             "n_grid = 100,400\n"
             "replications = 2\n"
             "restarts = 2\n"
             "csv = cfg.csv\n"
             "svg = cfg.svg\n");
  CHECK(run("rate-study study.cfg").code == 0);
  CHECK(count_lines(slurp(scratch() / "cfg.csv")) == 3);
  // Flags override the file.
  CHECK(run("rate-study study.cfg --n-grid 100,200,400").code == 0);
  CHECK(count_lines(slurp(scratch() / "cfg.csv")) == 4);

  write_file("bad.cfg", "colour = blue\n");
  const auto bad = run("rate-study bad.cfg");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("colour") != std::string::npos);
  CHECK(run("rate-study absent.cfg").code == 3);
}

TEST_CASE("usage errors") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("fit --k notanumber").code == 2);
  CHECK(run("fit --data x --family 'gaussian(sigma=-1,d=1)'").code == 2);
}

TEST_CASE("help text matches the snapshots") {
  for (const std::string cmd : {"", "gen", "fit", "order", "rate-study", "order-study", "wasserstein", "score"}) {
    const auto r = run(cmd + " --help");
    CHECK(r.code == 0);
    const auto snap = fs::path(MIXFIT_SNAPSHOT_DIR) / (cmd.empty() ? "help.txt" : "help_" + cmd + ".txt");
    INFO(snap.string());
    CHECK(r.out == slurp(snap));
  }
}
