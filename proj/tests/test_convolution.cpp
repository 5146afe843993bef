#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "spde/convolution.hpp"

using namespace spde;

TEST_CASE("polynomial path integrals are exact") {
  const LinearisationPath a = LinearisationPath::polynomial({1.0, 2.0, 3.0});
  CHECK(a.a(0.5) == doctest::Approx(1.0 + 1.0 + 0.75).epsilon(1e-15));
  // int_0^t (1 + 2s + 3s^2) ds = t + t^2 + t^3
  auto A = [](double t) { return t + t * t + t * t * t; };
  CHECK(a.integral(0.7, 0.2) == doctest::Approx(A(0.7) - A(0.2)).epsilon(1e-14));
  const ModeIndex k{2, -1};
  CHECK(a.alpha_k(k, 0.7, 0.2) ==
        doctest::Approx(-k.mu() * 0.5 + A(0.7) - A(0.2)).epsilon(1e-14));
  CHECK_FALSE(a.is_constant());
  CHECK(LinearisationPath::constant(-1.0).is_constant());
}

TEST_CASE("stationary init matches the renormalisation variance table") {
  ConvolutionConfig cfg;
  cfg.N = 6;
  cfg.sigma = 0.3;
  RngStream rng(41, 0);
  ConvolutionState st(cfg, &rng);
  const RenormConstant rc = renorm_constant(cfg.N, cfg.sigma);
  CHECK(st.total_variance() == doctest::Approx(rc.value).epsilon(1e-13));
  CHECK(st.variance({0, 0}) == doctest::Approx(rc.v({0, 0})).epsilon(1e-14));
  CHECK(st.variance({3, -2}) == doctest::Approx(rc.v({3, -2})).epsilon(1e-14));
  CHECK(st.variance({-3, 2}) == st.variance({3, -2}));
}

TEST_CASE("exact step leaves the stationary variance invariant for constant a") {
  ConvolutionConfig cfg;
  cfg.N = 4;
  cfg.sigma = 0.2;
  cfg.eps = 0.05;
  RngStream rng(43, 0);
  ConvolutionState st(cfg, &rng);
  const double v0 = st.total_variance();
  for (int i = 0; i < 5; ++i) st.step_exact(0.013, rng);
  CHECK(st.time() == doctest::Approx(5 * 0.013).epsilon(1e-12));
  CHECK(st.total_variance() == doctest::Approx(v0).epsilon(1e-12));
  CHECK(st.variance({1, 1}) ==
        doctest::Approx(renorm_constant(4, 0.2).v({1, 1})).epsilon(1e-12));
}

TEST_CASE("one-step factors compose over adjacent intervals") {
  auto check_composition = [](const LinearisationPath& a, double tol) {
    ConvolutionConfig cfg;
    cfg.N = 3;
    cfg.sigma = 0.4;
    cfg.eps = 0.07;
    cfg.a = a;
    const double t = 0.11, dt1 = 0.017, dt2 = 0.029;
    const StepFactors f1 = StepFactors::compute(cfg, t, dt1);
    const StepFactors f2 = StepFactors::compute(cfg, t + dt1, dt2);
    const StepFactors ff = StepFactors::compute(cfg, t, dt1 + dt2);
    for (size_t i = 0; i < ff.mean_factor.size(); ++i) {
      CHECK(ff.mean_factor[i] ==
            doctest::Approx(f1.mean_factor[i] * f2.mean_factor[i]).epsilon(tol));
      const double g2 = f2.mean_factor[i];
      const double s2comp = g2 * g2 * f1.innovation_sd[i] * f1.innovation_sd[i] +
                            f2.innovation_sd[i] * f2.innovation_sd[i];
      CHECK(ff.innovation_sd[i] * ff.innovation_sd[i] ==
            doctest::Approx(s2comp).epsilon(tol));
    }
  };
  check_composition(LinearisationPath::constant(-1.0), 1e-12);
  check_composition(LinearisationPath::affine(-1.0, 0.8), 1e-8);
}

TEST_CASE("innovation variance: closed form against quadrature") {
  // polynomial({-1, 0}) evaluates to the same a(t) = -1 but takes the
  // quadrature branch instead of the closed form.
  const LinearisationPath ac = LinearisationPath::constant(-1.0);
  const LinearisationPath aq = LinearisationPath::polynomial({-1.0, 0.0});
  for (const ModeIndex k : {ModeIndex{0, 0}, ModeIndex{1, 0}, ModeIndex{2, 2}}) {
    const double vc = ou_innovation_variance(ac, k, 0.05, 0.3, 0.2, 0.01);
    const double vq = ou_innovation_variance(aq, k, 0.05, 0.3, 0.2, 0.01);
    CHECK(vq == doctest::Approx(vc).epsilon(1e-9));
  }
}

TEST_CASE("partition for constant a has exact interior decay increments") {
  const LinearisationPath a = LinearisationPath::constant(-1.0);
  const Partition p = build_partition(1.0, 0.1, 1.0, 0, a);
  CHECK(p.k0.l1() == 1);
  const double rate = p.k0.mu() + 1.0;  // mu_1 - a = 4 pi^2 + 1
  CHECK(p.intervals() == static_cast<int>(std::floor(rate / 0.1)) + 1);  // 405
  CHECK(p.breakpoints.front() == 0.0);
  CHECK(p.breakpoints.back() == 1.0);
  for (int l = 0; l < p.intervals(); ++l)
    CHECK(p.breakpoints[l] < p.breakpoints[l + 1]);
  // Interior intervals: alpha_{k0}(u_{l+1}, u_l) = -gamma0 * eps.
  for (int l = 1; l < p.intervals(); ++l)
    CHECK(a.alpha_k(p.k0, p.breakpoints[l + 1], p.breakpoints[l]) ==
          doctest::Approx(-0.1).epsilon(1e-10));
}

TEST_CASE("partition property holds for time-dependent a") {
  const LinearisationPath a = LinearisationPath::affine(-2.0, 1.5);
  const Partition p = build_partition(0.8, 0.05, 1.5, 1, a);
  CHECK(p.k0.l1() == 2);
  CHECK(p.breakpoints.front() == 0.0);
  CHECK(p.breakpoints.back() == 0.8);
  REQUIRE(p.intervals() >= 3);
  for (int l = 1; l < p.intervals(); ++l)
    CHECK(a.alpha_k(p.k0, p.breakpoints[l + 1], p.breakpoints[l]) ==
          doctest::Approx(-1.5 * 0.05).epsilon(1e-8));
}

TEST_CASE("martingale transform scales coefficients and variances consistently") {
  ConvolutionConfig cfg;
  cfg.N = 3;
  cfg.sigma = 0.3;
  cfg.eps = 0.1;
  RngStream rng(47, 0);
  ConvolutionState st(cfg, &rng);
  const Partition p = build_partition(1.0, cfg.eps, 1.0, 0, cfg.a);
  // Step into the interior of interval l, then check the transform pointwise.
  const int l = 1;
  const double u0 = p.breakpoints[l], u1 = p.breakpoints[l + 1];
  st.step_exact(u0 + 0.4 * (u1 - u0), rng);
  const MartingaleView mv = martingale_transform(st, p, l);
  const ModeIndex k{2, -1};
  const double f = std::exp(cfg.a.alpha_k(k, u1, st.time()) / cfg.eps);
  CHECK(std::abs(mv.psi_hat.coeff(k) - f * st.psi().coeff(k)) < 1e-14);
  const size_t i = static_cast<size_t>(k.k1 + cfg.N) * (2 * cfg.N + 1) + (k.k2 + cfg.N);
  CHECK(mv.v_hat[i] == doctest::Approx(st.variance(k) * f * f).epsilon(1e-12));

  // Transformed variances are nondecreasing along the interval.
  const double before = mv.v_hat[i];
  st.step_exact(0.5 * (u1 - st.time()), rng);
  const MartingaleView mv2 = martingale_transform(st, p, l);
  CHECK(mv2.v_hat[i] >= before - 1e-15);
  CHECK_THROWS_AS(martingale_transform(st, p, p.intervals() + 3), std::out_of_range);
}

TEST_CASE("chaos expectation oracle: hand-computed low order values") {
  const int N = 2;
  const RenormConstant rc = renorm_constant(N, 0.5);
  const double v0 = rc.v({0, 0});
  const double v1 = rc.v({1, 0});  // all four annulus-1 modes share mu
  // First chaos of the zero-mode block lands only in annulus 0.
  CHECK(chaos_expectation_oracle({1}, 0, N, rc) == doctest::Approx(v0).epsilon(1e-13));
  CHECK(chaos_expectation_oracle({1}, 1, N, rc) == 0.0);
  // First chaos of the annulus-1 block: its own l2 mass c_1 = 4 v_1.
  CHECK(chaos_expectation_oracle({0, 1}, 1, N, rc) ==
        doctest::Approx(4.0 * v1).epsilon(1e-13));
  CHECK(chaos_expectation_oracle({0, 1}, 2, N, rc) == 0.0);
  // Product of the zero block and the annulus-1 block.
  CHECK(chaos_expectation_oracle({1, 1}, 1, N, rc) ==
        doctest::Approx(v0 * 4.0 * v1).epsilon(1e-13));
  // Square of the annulus-1 block projected to the zero mode: the only
  // contributions are the 4 conjugate pairs k + (-k) = 0, weight 2! v_1^2 each.
  CHECK(chaos_expectation_oracle({0, 2}, 0, N, rc) ==
        doctest::Approx(8.0 * v1 * v1).epsilon(1e-13));
  CHECK_THROWS_AS(chaos_expectation_oracle({2, 2}, 0, N, rc), std::length_error);
}

TEST_CASE("disabling zero-mode noise freezes the spatial mean at zero") {
  ConvolutionConfig cfg;
  cfg.N = 3;
  cfg.sigma = 0.3;
  cfg.zero_mode_noise = false;
  RngStream rng(53, 0);
  ConvolutionState st(cfg, &rng);
  CHECK(std::abs(st.psi().coeff(0, 0)) == 0.0);
  CHECK(st.variance({0, 0}) == 0.0);
  for (int i = 0; i < 10; ++i) st.step_exact(0.02, rng);
  CHECK(std::abs(st.psi().coeff(0, 0)) == 0.0);
  CHECK(st.variance({0, 0}) == 0.0);
  CHECK(std::abs(st.psi().coeff(1, 0)) > 0.0);
}
