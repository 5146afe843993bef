#ifndef SPDE_CONVOLUTION_HPP
#define SPDE_CONVOLUTION_HPP

#include <vector>

#include "spde/field.hpp"
#include "spde/rng.hpp"
#include "spde/wick.hpp"

namespace spde {

/// Slow-time linearisation path a(t), polynomial in t so that the
/// antiderivative is exact for the built-in families.
class LinearisationPath {
 public:
  static LinearisationPath constant(double a0) { return LinearisationPath({a0}); }
  static LinearisationPath affine(double c0, double c1) { return LinearisationPath({c0, c1}); }
  static LinearisationPath polynomial(std::vector<double> coef) {
    return LinearisationPath(std::move(coef));
  }

  double a(double t) const;
  // alpha(t, t1) = int_{t1}^t a(s) ds, exact.
  double integral(double t, double t1) const;
  // alpha_k(t, t1) = -mu_k (t - t1) + alpha(t, t1)
  double alpha_k(ModeIndex k, double t, double t1) const {
    return -k.mu() * (t - t1) + integral(t, t1);
  }
  bool is_constant() const { return coef_.size() == 1; }
  double max_on_grid(double t0, double t1, int samples = 512) const;
  const std::vector<double>& coefficients() const { return coef_; }

 private:
  explicit LinearisationPath(std::vector<double> coef);
  std::vector<double> coef_;  // a(t) = sum coef_[i] t^i
};

enum class InitLaw { stationary, zero };

struct ConvolutionConfig {
  double eps = 0.1;
  double sigma = 0.1;
  int N = 8;
  int M = 0;  // 0: pick min_grid(N, 3)
  LinearisationPath a = LinearisationPath::constant(-1.0);
  InitLaw init = InitLaw::stationary;
  bool zero_mode_noise = true;  // false: noise acts only on k != 0 (psi_perp)
};

/// Per-mode OU state of the stochastic convolution with exact variance
/// bookkeeping. Modes are stored in the field; variances in field layout.
class ConvolutionState {
 public:
  ConvolutionState() = default;
  ConvolutionState(const ConvolutionConfig& cfg, RngStream* rng);

  const ConvolutionConfig& config() const { return cfg_; }
  double time() const { return t_; }
  const FourierField& psi() const { return psi_; }
  FourierField& psi() { return psi_; }

  double variance(ModeIndex k) const { return var_[index(k)]; }
  double total_variance() const;

  void step_exact(double dt, RngStream& rng);

  // Wick powers :psi^m: for m = 1..m_max with the time-correct variance.
  std::vector<FourierField> wick_powers(int m_max) const;

 private:
  friend struct StepFactors;
  size_t index(ModeIndex k) const {
    const int N = cfg_.N;
    return static_cast<size_t>(k.k1 + N) * (2 * N + 1) + (k.k2 + N);
  }
  ConvolutionConfig cfg_;
  double t_ = 0.0;
  FourierField psi_;
  std::vector<double> var_;
};

/// Precomputed exact one-step transition (mean factor and innovation standard
/// deviation per mode) for a fixed interval [t, t+dt]; path independent, so
/// ensembles compute it once and reuse it.
struct StepFactors {
  double t = 0.0;
  double dt = 0.0;
  std::vector<double> mean_factor;   // field layout
  std::vector<double> innovation_sd;

  static StepFactors compute(const ConvolutionConfig& cfg, double t, double dt);
  void apply(ConvolutionState& state, RngStream& rng) const;
};

/// Time partition u_0 <= u_1 < ... < u_L = T defined by
/// alpha_{k0}(u_{l+1}, u_l) = -gamma0 * eps on interior steps.
struct Partition {
  double gamma0 = 1.0;
  ModeIndex k0;
  std::vector<double> breakpoints;

  int intervals() const { return static_cast<int>(breakpoints.size()) - 1; }
};

Partition build_partition(double T, double eps, double gamma0, int qbar,
                          const LinearisationPath& a);

/// Exact innovation variance of mode k over [t, t+dt]:
/// (sigma^2/eps) int_t^{t+dt} e^{2 alpha_k(t+dt, s)/eps} ds.
/// Closed form for constant a, adaptive quadrature otherwise.
double ou_innovation_variance(const LinearisationPath& a, ModeIndex k, double eps,
                              double sigma, double t, double dt);

/// Martingale transform on the partition interval [u_l, u_{l+1}]:
/// psi_hat_k(t) = e^{alpha_k(u_{l+1}, t)/eps} psi_k(t), with variances
/// v_hat_k(t) = v_k(t) e^{2 alpha_k(u_{l+1}, t)/eps}.
struct MartingaleView {
  FourierField psi_hat;
  std::vector<double> v_hat;  // field layout
};
MartingaleView martingale_transform(const ConvolutionState& state,
                                    const Partition& partition, int l);

/// Exact combinatorial value of E || delta_{q0} prod_q :delta_q psi^{n_q}: ||^2
/// by brute-force enumeration of mode tuples. Budget: |hbn| <= 3, N <= 8.
double chaos_expectation_oracle(const std::vector<int>& hbn, int q0, int N,
                                const RenormConstant& variances);

}  // namespace spde

#endif
