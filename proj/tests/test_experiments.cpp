#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spde/experiments.hpp"
#include "spde/io.hpp"

using namespace spde;

TEST_CASE("run_paths results are independent of the worker count") {
  const int paths = 64;
  auto collect = [&](int workers) {
    std::vector<double> out(paths, 0.0);
    run_paths(paths, 77, workers, [&](int p, RngStream& rng) {
      double s = 0.0;
      for (int i = 0; i <= p % 7; ++i) s += rng.normal();
      out[p] = s;
    });
    return out;
  };
  CHECK(collect(1) == collect(4));

  CHECK_THROWS_AS(run_paths(8, 1, 3,
                            [&](int p, RngStream&) {
                              if (p == 5) throw std::runtime_error("boom");
                            }),
                  std::runtime_error);
}

TEST_CASE("exceedance table recovers an exponential rate") {
  RngStream rng(31, 0);
  const double lambda = 2.0;
  std::vector<double> sups;
  for (int i = 0; i < 20000; ++i) sups.push_back(-std::log(1.0 - rng.uniform()) / lambda);
  const ExceedanceTable tab = ExceedanceTable::build(sups, 1.0, 30, 1.0);
  REQUIRE(tab.rate.valid);
  CHECK(tab.rate.fit.slope == doctest::Approx(lambda).epsilon(0.1));
  CHECK(tab.rate.fit.r2 > 0.98);
  for (size_t i = 0; i < tab.h.size(); ++i) {
    CHECK(tab.lo[i] <= tab.p_hat[i]);
    CHECK(tab.p_hat[i] <= tab.hi[i]);
    CHECK(tab.p_hat[i] >= 0.0);
    CHECK(tab.p_hat[i] <= 1.0);
    if (i) CHECK(tab.p_hat[i] <= tab.p_hat[i - 1]);
  }
  CHECK_FALSE(ExceedanceTable::build(std::vector<double>(5, 1.0), 1.0).rate.valid);
}

TEST_CASE("moving branch fixture: root and linearisation are exact") {
  const DriftPolynomial F = moving_branch_cubic(0.2, 0.5);
  CHECK(F.degree() == 3);
  CHECK_NOTHROW(F.validate(1.0));
  for (double t : {0.0, 0.3, 0.7, 1.0}) {
    const double p = 0.2 + 0.5 * t;
    CHECK(std::abs(F.F(t, p)) < 1e-13);
    CHECK(F.dF(t, p) == doctest::Approx(-1.0).epsilon(1e-12));
    // u = 1 away from the branch: F = -1 - 1 - 1.
    CHECK(F.F(t, p + 1.0) == doctest::Approx(-3.0).epsilon(1e-12));
  }
}

TEST_CASE("tail experiment: structure, determinism, worker independence") {
  TailConfig cfg;
  cfg.N = 2;
  cfg.T = 0.1;
  cfg.m_max = 2;
  cfg.paths = 1000;
  cfg.alphas = {-0.5};
  cfg.seed = 12;
  const TailReport r1 = tail_experiment(cfg);
  REQUIRE(r1.cells.size() == 2);
  CHECK(r1.cells[0].m == 1);
  CHECK(r1.cells[1].m == 2);
  for (const TailCell& c : r1.cells) {
    REQUIRE(c.sup_samples.size() == 1000);
    CHECK(*std::min_element(c.sup_samples.begin(), c.sup_samples.end()) > 0.0);
  }
  CHECK_FALSE(r1.note.empty());

  TailConfig cfg4 = cfg;
  cfg4.workers = 4;
  const TailReport r4 = tail_experiment(cfg4);
  CHECK(r1.cells[0].sup_samples == r4.cells[0].sup_samples);
  CHECK(r1.cells[1].sup_samples == r4.cells[1].sup_samples);

  TailConfig tiny = cfg;
  tiny.paths = 10;
  CHECK_THROWS_AS(tail_experiment(tiny), std::invalid_argument);
}

TEST_CASE("stable experiment: no divergence and growth in sigma") {
  StableConfig cfg;
  cfg.N = 2;
  cfg.T = 0.3;
  cfg.sigmas = {0.002, 0.004};
  cfg.paths = 40;
  cfg.seed = 13;
  const StableReport rep = phi1_experiment(cfg);
  REQUIRE(rep.points.size() == 2);
  for (const StablePoint& p : rep.points) {
    CHECK(p.diverged == 0);
    CHECK(p.median_sup > 0.0);
    CHECK(p.sup_samples.size() == 40);
  }
  REQUIRE(rep.doubling_ratios.size() == 1);
  CHECK(rep.doubling_ratios[0] > 1.0);
  CHECK(rep.doubling_ratios[0] < 4.0);
}

TEST_CASE("pitchfork exit experiment: censoring accounting and zero-noise control") {
  PitchforkConfig cfg;
  cfg.eps = 1e-4;
  cfg.tstar = 0.02;
  cfg.T = 0.05;
  cfg.slope = 4.0;
  cfg.sigmas = {1e-2};
  cfg.paths = 40;
  cfg.seed = 14;
  const ExitReport rep = pitchfork_exit_experiment(cfg);
  REQUIRE(rep.points.size() == 1);
  const ExitPoint& p = rep.points[0];
  CHECK(p.h_minus == doctest::Approx(3.0 * 1e-2));
  CHECK(p.exits_minus + p.censored_minus == cfg.paths);
  CHECK(p.exits_plus + p.censored_plus == cfg.paths);
  REQUIRE(p.tau_plus.size() == 40);
  const double t_obs = cfg.tstar + std::sqrt(cfg.eps);
  for (double tau : p.tau_plus)
    if (!std::isnan(tau)) {
      CHECK(tau >= t_obs - 1e-12);
      CHECK(tau <= cfg.T + 1e-12);
    }
  CHECK_FALSE(p.fit_refused);
  CHECK(p.median_delay > 0.0);
  CHECK(rep.sigma0_no_exit);
}

TEST_CASE("perp experiment: censoring and medians") {
  PerpConfig cfg;
  cfg.eps = 0.01;
  cfg.T = 0.1;
  cfg.tstar = 0.05;
  cfg.sigmas = {0.01, 0.02, 0.04};
  cfg.paths = 30;
  cfg.seed = 15;
  const PerpReport rep = phi1perp_experiment(cfg);
  REQUIRE(rep.points.size() == 3);
  for (const PerpPoint& p : rep.points) {
    CHECK(p.H0 == doctest::Approx(5.0 * p.sigma));
    CHECK(p.sup_samples.size() == 30);
    CHECK(p.censored >= 0);
    CHECK(p.censored <= 30);
    CHECK(p.median_censored >= 0.0);
  }
  // Medians grow with the noise level.
  CHECK(rep.points[2].median_censored > rep.points[0].median_censored);
}

TEST_CASE("pairing probe: samples and pathwise bound constant") {
  ProbeConfig cfg;
  cfg.N = 2;
  cfg.m = 1;
  cfg.q0_list = {0, 1};
  cfg.paths = 200;
  cfg.seed = 16;
  const ProbeReport rep = pairing_probe(cfg);
  REQUIRE(rep.cells.size() == 2);
  for (const ProbeCell& c : rep.cells) {
    REQUIRE(c.pairing_samples.size() == 200);
    CHECK(*std::max_element(c.pairing_samples.begin(), c.pairing_samples.end()) > 0.0);
  }
  CHECK(rep.pairing_bound_constant > 0.0);
  CHECK(std::isfinite(rep.pairing_bound_constant));
}

// ---------------------------------------------------------------------------
// Config parsing, serialisation, manifest integrity.

TEST_CASE("minimal tails config parses and defaults are kept") {
  const std::string text =
      "[run]\n"
      "kind = tails\n"
      "seed = 9\n"
      "[tails]\n"
      "eps = 0.1\n"
      "sigma = 0.05\n"
      "N = 4\n"
      "T = 0.5\n"
      "m_max = 2\n"
      "paths = 2000  # comment\n";
  const RunConfig cfg = parse_config_text(text);
  CHECK(cfg.kind == ExperimentKind::tails);
  CHECK(cfg.tails.N == 4);
  CHECK(cfg.tails.paths == 2000);
  CHECK(cfg.tails.seed == 9);
  CHECK(cfg.probe.seed == 9);          // run.seed fans out
  CHECK(cfg.tails.alphas.size() == 1);  // default sweep untouched
}

TEST_CASE("repository fixture configs load") {
  namespace fs = std::filesystem;
  std::string base;
  for (const char* cand : {"configs", "../configs", "../../configs"})
    if (fs::exists(std::string(cand) + "/tails.cfg")) {
      base = cand;
      break;
    }
  REQUIRE_FALSE(base.empty());
  const RunConfig tails = load_config(base + "/tails.cfg");
  CHECK(tails.kind == ExperimentKind::tails);
  CHECK(tails.tails.N == 16);
  CHECK(tails.tails.m_max == 3);
  CHECK(tails.tails.T == 1.0);
  const RunConfig pf = load_config(base + "/pitchfork_exit.cfg");
  CHECK(pf.kind == ExperimentKind::pitchfork);
  CHECK(pf.pitchfork.sigmas.size() == 3);
}

TEST_CASE("config validation reports every violation by key") {
  auto violations = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      std::string all;
      for (const std::string& v : e.violations()) all += v + "\n";
      return all;
    }
    return std::string("(no error)");
  };

  // Missing required key names the field.
  const std::string missing = violations(
      "[run]\nkind = tails\n[tails]\neps = 0.1\nN = 4\nT = 0.5\nm_max = 2\npaths = 2000\n");
  CHECK(missing.find("tails.sigma") != std::string::npos);

  // Even drift degree is rejected with the oddness requirement spelled out.
  const std::string even = violations(
      "[run]\nkind = stable\n[stable]\neps = 0.1\nT = 1\nN = 4\nsigmas = 0.01\n"
      "[drift]\nn = 4\n");
  CHECK(even.find("odd") != std::string::npos);

  // Unknown keys are named with their section.
  const std::string unknown = violations(
      "[run]\nkind = selftest\n[tails]\nfrobnicate = 1\n");
  CHECK(unknown.find("unknown key 'tails.frobnicate'") != std::string::npos);

  // Dealiasing constraint on M.
  const std::string grid = violations(
      "[run]\nkind = tails\n[tails]\neps = 0.1\nsigma = 0.05\nN = 4\nT = 0.5\n"
      "m_max = 3\npaths = 2000\nM = 20\n");
  CHECK(grid.find("M >= (n+1)(2N+1)") != std::string::npos);
}

TEST_CASE("serialisation is a fixed point under reparsing") {
  RunConfig cfg;
  cfg.kind = ExperimentKind::probe;
  cfg.probe.sigma = 0.037;
  cfg.probe.q0_list = {0, 2, 3};
  cfg.tails.seed = 123;
  const std::string s1 = serialize_config(cfg);
  const RunConfig cfg2 = parse_config_text(s1);
  const std::string s2 = serialize_config(cfg2);
  CHECK(s1 == s2);
  CHECK(config_hash(cfg) == config_hash(cfg2));
}

TEST_CASE("run_experiment writes a verifiable manifest; tampering is detected") {
  namespace fs = std::filesystem;
  RunConfig cfg;
  cfg.kind = ExperimentKind::schauder;
  cfg.schauder.N = 8;
  cfg.output.directory = "test_out_schauder";
  fs::remove_all(cfg.output.directory);
  std::ostringstream log;
  const int rc = run_experiment(cfg, log);
  CHECK(rc == 0);
  CHECK(log.str().find("gates: PASS") != std::string::npos);

  const std::string manifest = cfg.output.directory + "/manifest.json";
  const RunManifest man = RunManifest::read(manifest);
  CHECK_FALSE(man.incomplete);
  CHECK(man.code_version == kCodeVersion);
  REQUIRE_FALSE(man.files.empty());

  std::ostringstream rep;
  CHECK(report_command(manifest, rep) == 0);
  CHECK(rep.str().find("all checksums verified") != std::string::npos);

  {
    std::ofstream os(cfg.output.directory + "/report.json", std::ios::app);
    os << " ";
  }
  std::ostringstream rep2;
  CHECK(report_command(manifest, rep2) == 1);
  CHECK(rep2.str().find("integrity error") != std::string::npos);
  fs::remove_all(cfg.output.directory);
}

TEST_CASE("quick selftest passes") {
  std::ostringstream os;
  CHECK(selftest(true, os) == 0);
  CHECK(os.str().find("FAIL") == std::string::npos);
}
