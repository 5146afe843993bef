#ifndef SPDE_MODES_HPP
#define SPDE_MODES_HPP

#include <cmath>
#include <cstdlib>

namespace spde {

inline constexpr double two_pi = 6.283185307179586476925286766559;

// Fourier mode on the torus. Two different size notions are in play and
// must never be mixed up:
//   l1()    |k| = |k1|+|k2|, used for the Galerkin cutoff and the annuli
//   norm2() ||k||^2 = k1^2+k2^2, used for the Laplacian eigenvalue
struct ModeIndex {
  int k1 = 0;
  int k2 = 0;

  int l1() const { return std::abs(k1) + std::abs(k2); }
  int norm2() const { return k1 * k1 + k2 * k2; }
  // Laplacian eigenvalue mu_k = (2*pi)^2 ||k||^2
  double mu() const { return two_pi * two_pi * static_cast<double>(norm2()); }

  ModeIndex operator-() const { return {-k1, -k2}; }
  bool operator==(const ModeIndex& o) const { return k1 == o.k1 && k2 == o.k2; }
};

// Dyadic annulus index: A_0 = {0}, A_q = { 2^{q-1} <= |k| < 2^q } for q >= 1.
inline int annulus_of(int l1norm) {
  if (l1norm == 0) return 0;
  int q = 1;
  while ((1 << q) <= l1norm) ++q;
  return q;
}

// Largest annulus index intersecting the cutoff ball |k| <= N.
inline int max_annulus(int N) { return annulus_of(N); }

}  // namespace spde

#endif
