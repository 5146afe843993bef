#ifndef SPDE_FIELD_HPP
#define SPDE_FIELD_HPP

#include <complex>
#include <functional>
#include <iosfwd>
#include <vector>

#include "spde/modes.hpp"

namespace spde {

/// Real scalar field on T^2 = (R/Z)^2, stored as truncated complex Fourier
/// coefficients on the square [-N,N]^2 and masked to the l1 ball |k| <= N.
/// The reality constraint coeff(-k) = conj(coeff(k)) is an invariant of every
/// operation; grids live on an M x M dealiased lattice with M a power of two.
class FourierField {
 public:
  FourierField() = default;
  FourierField(int N, int M);

  // Smallest power-of-two grid accommodating degree-n pointwise products,
  // M >= (n+1)(2N+1).
  static int min_grid(int N, int degree);

  int cutoff() const { return N_; }
  int grid_size() const { return M_; }
  int side() const { return 2 * N_ + 1; }

  std::complex<double>& coeff(int k1, int k2);
  const std::complex<double>& coeff(int k1, int k2) const;
  std::complex<double>& coeff(ModeIndex k) { return coeff(k.k1, k.k2); }
  const std::complex<double>& coeff(ModeIndex k) const { return coeff(k.k1, k.k2); }

  std::vector<std::complex<double>>& raw() { return c_; }
  const std::vector<std::complex<double>>& raw() const { return c_; }

  // Sets coeff(k) = v and coeff(-k) = conj(v).
  void set_pair(ModeIndex k, std::complex<double> v);
  void enforce_reality();
  // Zeroes everything outside the l1 ball.
  void mask_to_ball();

  // Visits each stored mode in the l1 ball, row-major in (k1,k2).
  template <typename F>
  void for_each_mode(F&& f) const {
    for (int k1 = -N_; k1 <= N_; ++k1) {
      const int r = N_ - std::abs(k1);
      for (int k2 = -r; k2 <= r; ++k2) f(ModeIndex{k1, k2}, coeff(k1, k2));
    }
  }

  std::vector<double> to_grid() const;
  // Reuses out's capacity; avoids an allocation per call in hot loops.
  void to_grid(std::vector<double>& out) const;
  static FourierField from_grid(const std::vector<double>& grid, int M, int N);

  FourierField annulus_project(int q) const;
  FourierField galerkin_project(int Nprime) const;

  double l2_norm() const;
  // L2 norm of the annulus block, straight from the coefficients.
  double block_l2(int q) const;
  // Besov norm via grid L^p block norms (p = INFINITY gives the grid max).
  double besov_norm(double alpha, double p, double r) const;
  // Coefficient route for B^alpha_{2,inf}; equal to
  // besov_norm(alpha, 2, INFINITY) up to quadrature roundoff.
  double besov_2inf(double alpha) const;
  double holder_norm(double alpha) const;
  // ( sum_k (1 + (2 pi)^2 ||k||^2) |phi_k|^2 )^{1/2}.
  double h1_norm() const;

  double max_abs_imag_on_grid() const;

  FourierField& operator+=(const FourierField& o);
  FourierField& operator-=(const FourierField& o);
  FourierField& operator*=(double s);

  void write_binary(std::ostream& os) const;
  static FourierField read_binary(std::istream& is);
  void write_grid_csv(std::ostream& os) const;

 private:
  size_t idx(int k1, int k2) const {
    return static_cast<size_t>(k1 + N_) * side() + (k2 + N_);
  }

  int N_ = 0;
  int M_ = 1;
  std::vector<std::complex<double>> c_;
};

// Test function for the Besov pairing probe: compactly supported in the unit
// cell, C^1, unit C^1 norm.
using TestBump = std::function<double(double, double)>;
TestBump default_bump();

// <field, eta^{(p)}_rho> with eta^{(p)}_rho(x) = rho^{-2(1-1/p)} eta(x/rho),
// by grid quadrature. Throws if eta has mass within 1e-9 of the cell boundary.
double pair_with_scaled_test(const FourierField& field, const TestBump& eta,
                             double rho, double p);

}  // namespace spde

#endif
