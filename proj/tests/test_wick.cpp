#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "spde/rng.hpp"
#include "spde/stats.hpp"
#include "spde/wick.hpp"

using namespace spde;

namespace {

FourierField random_field(int N, int M, uint64_t seed, double scale = 0.3) {
  FourierField f(N, M);
  RngStream rng(seed, 0);
  for (int k1 = 0; k1 <= N; ++k1) {
    const int r = N - k1;
    for (int k2 = (k1 == 0 ? 0 : -r); k2 <= r; ++k2) {
      if (k1 == 0 && k2 == 0) f.set_pair({0, 0}, scale * rng.normal());
      else f.set_pair({k1, k2}, {scale * rng.normal(), scale * rng.normal()});
    }
  }
  return f;
}

double l2_diff(const FourierField& a, const FourierField& b) {
  FourierField d = a;
  d -= b;
  return d.l2_norm();
}

}  // namespace

TEST_CASE("hermite recursion fixed values") {
  CHECK(hermite(0, 1.7, 0.3) == 1.0);
  CHECK(hermite(1, 1.7, 0.3) == 1.7);
  CHECK(hermite(3, 2.0, 1.0) == doctest::Approx(2.0));    // x^3 - 3Cx
  CHECK(hermite(4, 2.0, 1.0) == doctest::Approx(-5.0));   // x^4 - 6Cx^2 + 3C^2
  // Scaling H_n(x; C) = C^{n/2} H_n(x/sqrt(C); 1)
  const double C = 2.7, x = 0.9;
  for (int n = 0; n <= 8; ++n)
    CHECK(hermite(n, x, C) ==
          doctest::Approx(std::pow(C, n / 2.0) * hermite(n, x / std::sqrt(C), 1.0))
              .epsilon(1e-12));
}

TEST_CASE("change of basis coefficients are exact integers") {
  const HermiteCoeffs h4 = hermite_coeffs(4);
  CHECK(h4.a == std::vector<long long>{1, -6, 3});
  CHECK(h4.b == std::vector<long long>{1, 6, 3});
  const HermiteCoeffs h6 = hermite_coeffs(6);
  CHECK(h6.a == std::vector<long long>{1, -15, 45, -15});
  CHECK(h6.b == std::vector<long long>{1, 15, 45, 15});
  CHECK_THROWS_AS(hermite_coeffs(21), std::length_error);

  // a: expansion of H_n in monomials; b: inverse (monomial in Hermites).
  RngStream rng(3, 0);
  for (int t = 0; t < 50; ++t) {
    const double x = 2.0 * rng.normal(), C = std::exp(rng.normal());
    for (int n = 0; n <= 10; ++n) {
      const HermiteCoeffs hc = hermite_coeffs(n);
      double via_a = 0.0, via_b = 0.0;
      for (size_t l = 0; l < hc.a.size(); ++l) {
        via_a += hc.a[l] * std::pow(C, l) * std::pow(x, n - 2 * int(l));
        via_b += hc.b[l] * std::pow(C, l) * hermite(n - 2 * int(l), x, C);
      }
      // Both sides are sums of cancelling terms, so the tolerance follows
      // the term scale rather than the (possibly tiny) result.
      const double scale = std::pow(std::abs(x) + std::sqrt(C) + 1.0, n);
      CHECK(std::abs(via_a - hermite(n, x, C)) < 1e-11 * scale);
      CHECK(std::abs(via_b - std::pow(x, n)) < 1e-11 * scale);
    }
  }
}

TEST_CASE("generating function exp(tx - C t^2/2) = sum t^n/n! H_n") {
  const double x = 0.8, C = 1.3, t = 0.45;
  double sum = 0.0, fact = 1.0;
  for (int n = 0; n <= 25; ++n) {
    if (n) fact *= n;
    sum += std::pow(t, n) / fact * hermite(n, x, C);
  }
  CHECK(sum == doctest::Approx(std::exp(t * x - 0.5 * C * t * t)).epsilon(1e-12));
}

TEST_CASE("renormalisation constant closed forms") {
  CHECK(renorm_constant(0, 1.0).value == doctest::Approx(0.5).epsilon(1e-15));
  const double mu1 = 4 * M_PI * M_PI;
  const RenormConstant rc = renorm_constant(1, 1.0);
  CHECK(rc.value == doctest::Approx(0.5 + 2.0 / (mu1 + 1.0)).epsilon(1e-14));
  CHECK(rc.per_annulus[0] == doctest::Approx(0.5));
  CHECK(rc.per_annulus[1] == doctest::Approx(2.0 / (mu1 + 1.0)));
  // sigma scaling and c_q additivity
  const RenormConstant rs = renorm_constant(16, 0.25);
  double sum = 0.0;
  for (double c : rs.per_annulus) sum += c;
  CHECK(sum == doctest::Approx(rs.value).epsilon(1e-14));
  CHECK(rs.value == doctest::Approx(0.0625 * renorm_constant(16, 1.0).value).epsilon(1e-12));
}

TEST_CASE("wick power of a constant field") {
  FourierField f(4, 64);
  f.coeff(0, 0) = 1.4;
  const FourierField w = wick_power_field(f, 2, 0.6);
  CHECK(w.coeff(0, 0).real() == doctest::Approx(1.4 * 1.4 - 0.6).epsilon(1e-12));
  double off = 0.0;
  w.for_each_mode([&](ModeIndex k, std::complex<double> c) {
    if (k.l1() > 0) off = std::max(off, std::abs(c));
  });
  CHECK(off < 1e-12);
}

TEST_CASE("wick binomial identity holds for fields split into two parts") {
  const int N = 8, M = 128;
  const FourierField f = random_field(N, M, 21);
  FourierField x(N, M);  // low part |k| <= 3, kept at the full cutoff
  f.for_each_mode([&](ModeIndex k, std::complex<double> c) {
    if (k.l1() <= 3) x.coeff(k) = c;
  });
  FourierField y = f;
  y -= x;
  const double C1 = 0.7, C2 = 0.4;
  for (int n = 2; n <= 3; ++n) {
    const FourierField lhs = wick_power_field(f, n, C1 + C2);
    const std::vector<double> gx = x.to_grid(), gy = y.to_grid();
    std::vector<double> acc(gx.size(), 0.0);
    for (int m = 0; m <= n; ++m) {
      const double bc = binomial_coefficient(n, m);
      for (size_t i = 0; i < acc.size(); ++i)
        acc[i] += bc * hermite(m, gx[i], C1) * hermite(n - m, gy[i], C2);
    }
    CHECK(l2_diff(lhs, FourierField::from_grid(acc, M, N)) < 1e-10);
  }
}

TEST_CASE("multinomial over annulus blocks equals the plain wick power") {
  const int N = 8, M = 128;
  const FourierField f = random_field(N, M, 23);
  const RenormConstant rc = renorm_constant(N, 0.4);
  for (int m = 2; m <= 3; ++m) {
    const FourierField a = wick_power_field(f, m, rc.value);
    const FourierField b = wick_multinomial_blocks(f, m, rc.per_annulus, rc.value);
    CHECK(l2_diff(a, b) < 1e-8);
  }
  std::vector<double> wrong = rc.per_annulus;
  wrong[1] += 1e-3;
  CHECK_THROWS_AS(wick_multinomial_blocks(f, 2, wrong, rc.value), std::invalid_argument);
}

TEST_CASE("hermite moment identity E[H_n(X) H_m(Y)] = n! corr^n delta_nm") {
  RngStream rng(5, 0);
  const double C1 = 1.0, C2 = 0.8, corr = 0.5;
  const long S = 200000;
  const McEstimate same = wick_moment_mc(2, 2, corr, C1, C2, S, rng);
  CHECK(std::abs(same.estimate - 2.0 * corr * corr) < 4.0 * same.stderr_mean);
  const McEstimate cross = wick_moment_mc(1, 3, corr, C1, C2, S, rng);
  CHECK(std::abs(cross.estimate) < 4.0 * cross.stderr_mean);
  CHECK_THROWS_AS(wick_moment_mc(1, 1, 2.0, C1, C2, S, rng), std::invalid_argument);
  CHECK_THROWS_AS(wick_moment_mc(1, 1, 0.1, C1, C2, 100, rng), std::invalid_argument);
}

TEST_CASE("wick power of a stationary sample has spatial mean 0 on average") {
  // E[:psi^2:] = 0 when the variance parameter matches the field variance.
  const int N = 4, M = 64;
  RngStream rng(9, 0);
  const RenormConstant rc = renorm_constant(N, 1.0);
  RunningStat st;
  for (int s = 0; s < 4000; ++s) {
    FourierField psi(N, M);
    for (int k1 = 0; k1 <= N; ++k1) {
      const int r = N - k1;
      for (int k2 = (k1 == 0 ? 0 : -r); k2 <= r; ++k2) {
        const ModeIndex k{k1, k2};
        const double v = rc.v(k);
        if (k.l1() == 0) psi.set_pair(k, std::sqrt(v) * rng.normal());
        else psi.set_pair(k, {std::sqrt(v / 2) * rng.normal(), std::sqrt(v / 2) * rng.normal()});
      }
    }
    st.add(wick_power_field(psi, 2, rc.value).coeff(0, 0).real());
  }
  CHECK(std::abs(st.mean()) < 3.0 * st.stderr_mean());
}
