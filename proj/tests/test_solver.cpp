#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "spde/solver.hpp"

using namespace spde;

namespace {

// F(t, phi) = 1 - phi^3
DriftPolynomial cubic_const() {
  return DriftPolynomial({{1.0}, {0.0}, {0.0}, {-1.0}});
}

}  // namespace

TEST_CASE("drift polynomial evaluation and validation") {
  const DriftPolynomial F = cubic_const();
  CHECK(F.degree() == 3);
  CHECK(F.F(0.3, 2.0) == doctest::Approx(-7.0).epsilon(1e-15));
  CHECK(F.dF(0.3, 2.0) == doctest::Approx(-12.0).epsilon(1e-15));
  CHECK_NOTHROW(F.validate(1.0));
  // Even degree and positive leading coefficient are rejected.
  CHECK_THROWS_AS(DriftPolynomial({{0.0}, {-1.0}, {-1.0}}).validate(1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(DriftPolynomial({{0.0}, {0.0}, {0.0}, {1.0}}).validate(1.0),
                  std::invalid_argument);
}

TEST_CASE("equilibrium branch of 1 - phi^3 and of a moving root") {
  std::vector<double> tg;
  for (int i = 0; i <= 40; ++i) tg.push_back(i / 40.0);
  const EquilibriumBranch br = find_equilibrium_branch(cubic_const(), tg, 0.7);
  CHECK(br.all_stable());
  CHECK(br.phi_at(0.5) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(br.a_at(0.5) == doctest::Approx(-3.0).epsilon(1e-9));
  CHECK(br.a_minus == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(br.a_plus == 0.0);

  // F = (1 + t) - phi^3 has the root (1 + t)^{1/3}.
  const DriftPolynomial Fm({{1.0, 1.0}, {0.0}, {0.0}, {-1.0}});
  const EquilibriumBranch bm = find_equilibrium_branch(Fm, tg, 0.9);
  CHECK(bm.phi_at(1.0) == doctest::Approx(std::cbrt(2.0)).epsilon(1e-9));
  CHECK(bm.a_at(1.0) == doctest::Approx(-3.0 * std::pow(2.0, 2.0 / 3.0)).epsilon(1e-6));
}

TEST_CASE("deterministic track reproduces exponential decay of a linear drift") {
  // F(phi) = -phi, so the zero mode solves eps dphi/dt = -phi exactly.
  const DriftPolynomial F({{0.0}, {-1.0}});
  const double eps = 0.05;
  FourierField init(2, 32);
  init.coeff(0, 0) = 1.0;
  init.set_pair({1, 0}, 0.5);
  const std::vector<double> t_out{0.0, 0.1, 0.25};
  const TrackResult res = deterministic_track(F, eps, init, t_out);
  REQUIRE(res.phi.size() == 3);
  CHECK(res.phi[1].coeff(0, 0).real() == doctest::Approx(std::exp(-0.1 / eps)).epsilon(1e-4));
  CHECK(res.phi[2].coeff(0, 0).real() == doctest::Approx(std::exp(-0.25 / eps)).epsilon(1e-4));
  const double mu1 = ModeIndex{1, 0}.mu();
  CHECK(res.phi[1].coeff(1, 0).real() ==
        doctest::Approx(0.5 * std::exp(-0.1 * (mu1 + 1.0) / eps)).epsilon(1e-3));
  CHECK(res.steps_taken > 0);
}

TEST_CASE("deterministic track stays on the stable branch of the cubic") {
  std::vector<double> tg;
  for (int i = 0; i <= 20; ++i) tg.push_back(i / 20.0);
  const EquilibriumBranch br = find_equilibrium_branch(cubic_const(), tg, 0.7);
  FourierField init(2, 32);
  init.coeff(0, 0) = 1.0;  // start on the equilibrium
  const TrackResult res = deterministic_track(cubic_const(), 0.05, init, tg, &br);
  CHECK(res.sup_h1_distance < 1e-4);
}

TEST_CASE("shifted drift reproduces the exact Taylor identity") {
  const DriftPolynomial F({{0.5, -0.3}, {-1.0}, {2.0, 0.7}, {-1.0}});
  const double t = 0.4, phi_star = 0.25;
  FourierField phi_bar(2, 32);
  phi_bar.coeff(0, 0) = 0.3;
  phi_bar.set_pair({1, 0}, 0.2);
  phi_bar.set_pair({0, 1}, {0.1, -0.15});
  const ShiftedDrift sd = shifted_drift(F, t, phi_bar, phi_star);
  CHECK(sd.a == doctest::Approx(F.dF(t, phi_star)).epsilon(1e-14));
  REQUIRE(sd.A_hat.size() == 3);
  const std::vector<double> g = phi_bar.to_grid();
  std::vector<std::vector<double>> ah;
  for (const FourierField& f : sd.A_hat) ah.push_back(f.to_grid());
  for (const double u : {0.3, -0.7, 1.1}) {
    for (size_t i = 0; i < g.size(); i += 37) {
      double rhs = sd.a * u;
      double up = u;
      for (size_t j = 0; j < ah.size(); ++j, up *= u) rhs += ah[j][i] * up;
      CHECK(F.F(t, g[i] + u) - F.F(t, g[i]) == doctest::Approx(rhs).epsilon(1e-10));
    }
  }
}

TEST_CASE("phi1 step: exact linear factor and divergence guard") {
  const double eps = 0.05, dt = 0.01, t0 = 0.2;
  const LinearisationPath a = LinearisationPath::affine(-1.0, 0.5);
  FourierField phi1(2, 32);
  phi1.coeff(0, 0) = 0.4;
  phi1.set_pair({1, 1}, 0.3);
  const size_t ng = static_cast<size_t>(32) * 32;
  // All A_hat zero: the step is the exact linear propagator.
  const std::vector<std::vector<double>> zero3(3, std::vector<double>(ng, 0.0));
  const std::vector<std::vector<double>> wick3(3, std::vector<double>(ng, 0.0));
  const FourierField out = evolve_phi1_step(phi1, t0, dt, eps, a, zero3, wick3);
  const double ia = a.integral(t0 + dt, t0);
  CHECK(out.coeff(0, 0).real() ==
        doctest::Approx(0.4 * std::exp(ia / eps)).epsilon(1e-13));
  const double mu = ModeIndex{1, 1}.mu();
  CHECK(out.coeff(1, 1).real() ==
        doctest::Approx(0.3 * std::exp((-mu * dt + ia) / eps)).epsilon(1e-13));
  CHECK(std::abs(out.coeff(1, 0)) == 0.0);

  CHECK_THROWS_AS(evolve_phi1_step(phi1, t0, dt, eps, a, zero3, wick3, 1e-12),
                  std::runtime_error);
  CHECK_THROWS_AS(evolve_phi1_step(phi1, t0, dt, eps, a, zero3, {}, 1e6),
                  std::invalid_argument);
}

TEST_CASE("linearised zero-mode variance profile") {
  const double eps = 0.02, sigma = 0.3;
  std::vector<double> tg;
  for (int i = 0; i <= 200; ++i) tg.push_back(i / 200.0);
  // Constant a = -1 with the stationary start sigma^2/2 stays put.
  const std::vector<double> vc = linear_variance_profile(
      LinearisationPath::constant(-1.0), eps, sigma, 0.5 * sigma * sigma, tg);
  for (double v : vc) CHECK(v == doctest::Approx(0.5 * sigma * sigma).epsilon(1e-12));
  // a(t) = t - 0.5 starting above the quasi-equilibrium sigma^2/(2|a|) = 1e-6:
  // the variance relaxes down while a < 0 and grows after the crossing.
  const std::vector<double> vp = linear_variance_profile(
      LinearisationPath::affine(-0.5, 1.0), eps, 1e-3, 1e-5, tg);
  const double vmin = *std::min_element(vp.begin(), vp.end());
  CHECK(vmin < 0.5 * vp.front());
  CHECK(vp.back() > 10.0 * vp.front());
}

TEST_CASE("heat semigroup smoothing constant for a single conjugate pair") {
  FourierField g(4, 64);
  g.set_pair({3, 0}, 0.7);  // annulus q = 2
  const double alpha = -0.5, beta = 1.0;
  std::vector<double> tg{0.01, 0.05, 0.1, 0.5, 1.0};
  const double got = schauder_check(g, alpha, beta, tg);
  const double mu = ModeIndex{3, 0}.mu();
  double want = 0.0;
  for (double t : tg)
    want = std::max(want, std::pow(2.0, 2.0 * (beta - alpha)) * std::exp(-mu * t) *
                              std::pow(t, 0.5 * (beta - alpha)));
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(schauder_check(g, -0.5, 2.0, tg), std::invalid_argument);
  CHECK_THROWS_AS(schauder_check(g, alpha, beta, std::vector<double>{0.0}),
                  std::invalid_argument);
}

TEST_CASE("pitchfork step: zero noise fixed point and seeded determinism") {
  ConvolutionConfig cfg;
  cfg.N = 2;
  cfg.eps = 0.01;
  cfg.sigma = 0.0;
  cfg.a = LinearisationPath::affine(-0.4, 1.0);
  cfg.init = InitLaw::zero;
  PitchforkState st;
  st.psi_perp = ConvolutionState(cfg, nullptr);
  st.phi1perp = FourierField(cfg.N, st.psi_perp.config().M);
  RngStream rng(61, 0);
  double t = 0.0;
  const double dt = cfg.eps / 4;
  for (int i = 0; i < 50; ++i, t += dt) {
    const PitchforkStepTables tab = PitchforkStepTables::compute(cfg, t, dt);
    pitchfork_step(st, tab, dt, rng);
  }
  CHECK(st.phi10 == 0.0);
  CHECK(st.phi1perp.l2_norm() == 0.0);
  CHECK(st.psi_perp.psi().l2_norm() == 0.0);

  cfg.sigma = 0.05;
  auto run = [&](uint64_t stream) {
    RngStream r(7, stream);
    PitchforkState s;
    s.psi_perp = ConvolutionState(cfg, nullptr);
    s.phi1perp = FourierField(cfg.N, s.psi_perp.config().M);
    double tt = 0.0;
    for (int i = 0; i < 30; ++i, tt += dt) {
      const PitchforkStepTables tab = PitchforkStepTables::compute(cfg, tt, dt);
      pitchfork_step(s, tab, dt, r);
    }
    return s;
  };
  const PitchforkState s1 = run(5), s2 = run(5), s3 = run(6);
  CHECK(s1.phi10 == s2.phi10);
  CHECK(s1.phi10 != s3.phi10);
  bool same = true;
  s1.psi_perp.psi().for_each_mode([&](ModeIndex k, std::complex<double> c) {
    if (c != s2.psi_perp.psi().coeff(k)) same = false;
  });
  CHECK(same);
  // The zero-average component never acquires a spatial mean.
  CHECK(std::abs(s1.psi_perp.psi().coeff(0, 0)) == 0.0);
  CHECK(std::abs(s1.phi1perp.coeff(0, 0)) == 0.0);
}
