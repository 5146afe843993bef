#ifndef SPDE_WICK_HPP
#define SPDE_WICK_HPP

#include <iosfwd>
#include <limits>
#include <vector>

#include "spde/field.hpp"
#include "spde/rng.hpp"

namespace spde {

/// Hermite polynomial with variance parameter, H_0 = 1, H_1 = x,
/// H_{m+1} = x H_m - m C H_{m-1}. Stable three-term recursion.
double hermite(int m, double x, double C);

/// Exact integer coefficients of the monomial <-> Hermite change of basis:
/// H_n(x;C) = sum_l a[l] C^l x^{n-2l},  x^n = sum_l b[l] C^l H_{n-2l}(x;C).
struct HermiteCoeffs {
  std::vector<long long> a;
  std::vector<long long> b;
};
HermiteCoeffs hermite_coeffs(int n);  // exact up to n = 20, throws beyond

/// Renormalisation constant C_N = sum_{|k| <= N} v_k, v_k = sigma^2/(2(mu_k+1)),
/// with per-mode and per-annulus variance tables.
struct RenormConstant {
  int N = 0;
  double sigma = 0.0;
  double value = 0.0;
  // v_k laid out like the field coefficient square; empty above the table
  // cutoff (the scalar value and c_q are always populated).
  std::vector<double> per_mode;
  std::vector<double> per_annulus;  // c_q, q = 0..max_annulus(N)

  double v(ModeIndex k) const;
  void write_mode_csv(std::ostream& os) const;
  void write_annulus_csv(std::ostream& os) const;
};
RenormConstant renorm_constant(int N, double sigma);

/// Pointwise Wick power :phi^m: = H_m(phi; C) on the dealiased grid,
/// truncated back to the field's cutoff.
FourierField wick_power_field(const FourierField& field, int m, double C);

/// Right-hand side of H_n(x+y; C1+C2) = sum_m binom(n,m) H_m(x;C1) H_{n-m}(y;C2).
double wick_binomial(int n, double x, double y, double C1, double C2);

/// :phi^m: evaluated as the multinomial sum over annulus blocks with
/// variances c_q. Agrees with wick_power_field(field, m, sum c_q).
FourierField wick_multinomial_blocks(
    const FourierField& field, int m, const std::vector<double>& c_q,
    double expected_total = std::numeric_limits<double>::quiet_NaN());

struct McEstimate {
  double estimate = 0.0;
  double stderr_mean = 0.0;
};

/// Monte Carlo estimate of E[H_n(X;C1) H_m(Y;C2)] for jointly Gaussian
/// centred (X,Y) with E[XY] = corr.
McEstimate wick_moment_mc(int n, int m, double corr, double C1, double C2,
                          long samples, RngStream& rng);

double binomial_coefficient(int n, int k);

}  // namespace spde

#endif
