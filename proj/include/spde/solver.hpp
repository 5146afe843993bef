#ifndef SPDE_SOLVER_HPP
#define SPDE_SOLVER_HPP

#include <vector>

#include "spde/convolution.hpp"
#include "spde/field.hpp"

namespace spde {

/// Time-dependent polynomial drift F(t, phi) = sum_{j=0}^n A_j(t) phi^j with
/// odd degree n and strictly negative leading coefficient.
class DriftPolynomial {
 public:
  // aj_coef[j] holds the polynomial-in-t coefficients of A_j(t).
  explicit DriftPolynomial(std::vector<std::vector<double>> aj_coef);

  int degree() const { return static_cast<int>(aj_.size()) - 1; }
  double A(int j, double t) const;
  double F(double t, double phi) const;
  double dF(double t, double phi) const;  // d/dphi
  // Checks n odd >= 3 and A_n(t) < 0 on a sample grid of [0, T].
  void validate(double T) const;

 private:
  std::vector<std::vector<double>> aj_;
};

struct EquilibriumBranch {
  std::vector<double> t_grid;
  std::vector<double> phi_star;  // root of F(t, .)
  std::vector<double> a_lin;     // dF(t, phi_star)
  std::vector<char> stable;      // a_lin < 0
  double a_minus = 0.0;          // margins over the stable part
  double a_plus = 0.0;

  bool all_stable() const;
  double phi_at(double t) const;  // linear interpolation
  double a_at(double t) const;
};

/// Newton continuation along t_grid from a seed root; flags loss of
/// stability instead of failing, so pitchfork branches can be followed.
EquilibriumBranch find_equilibrium_branch(const DriftPolynomial& F,
                                          const std::vector<double>& t_grid,
                                          double seed_root);

struct TrackResult {
  std::vector<double> t;
  std::vector<FourierField> phi;
  double sup_h1_distance = 0.0;  // to phi_star(t) e_0, if a branch was given
  int steps_taken = 0;
};

/// sigma = 0 dynamics eps dphi/dt = Delta phi + F(t, phi), integrated by an
/// adaptive first-order exponential scheme (exact linear mode factors,
/// explicit dealiased nonlinearity, step-doubling error control).
TrackResult deterministic_track(const DriftPolynomial& F, double eps,
                                const FourierField& init,
                                const std::vector<double>& t_out,
                                const EquilibriumBranch* branch = nullptr,
                                double tol = 1e-6);

struct ShiftedDrift {
  double a = 0.0;                    // dF(t, phi_star)
  std::vector<FourierField> A_hat;   // A_hat[j-1] is \hat A_j(t, .), j = 1..n
};

/// Shifted drift coefficients around the deterministic tracker.
ShiftedDrift shifted_drift(const DriftPolynomial& F, double t,
                           const FourierField& phi_bar, double phi_star);

/// One exponential-integrator step of the random PDE for phi_1:
/// eps dphi1/dt = Delta phi1 + a(t) phi1 + :b(t, psi + phi1):,
/// :b: = sum_{j>=1} A_hat_j sum_{l<=j} binom(j,l) phi1^{j-l} :psi^l:.
/// psi_wick_grids[l-1] is the grid of :psi^l:, l = 1..n.
FourierField evolve_phi1_step(const FourierField& phi1, double t, double dt,
                              double eps, const LinearisationPath& a,
                              const std::vector<std::vector<double>>& a_hat_grids,
                              const std::vector<std::vector<double>>& psi_wick_grids,
                              double guard = 1e6);

/// State of the coupled pitchfork SDE-SPDE system: zero mode phi1^0, spatial
/// remainder phi1^perp, and the zero-average stochastic convolution psi_perp.
struct PitchforkState {
  double phi10 = 0.0;
  FourierField phi1perp;
  ConvolutionState psi_perp;
};

struct PitchforkStepTables {
  StepFactors psi_factors;       // noise on k != 0 only
  double g0 = 1.0;               // zero-mode linear factor e^{int a / eps}
  double s0 = 0.0;               // zero-mode innovation sd
  double w0 = 0.0;               // zero-mode ETD weight for the nonlinearity
  static PitchforkStepTables compute(const ConvolutionConfig& cfg, double t, double dt);
};

/// phi = psi_perp + phi1^0 e_0 + phi1^perp for the Wick cubic pitchfork
/// equation; one step with exact OU transitions and explicit nonlinearity.
void pitchfork_step(PitchforkState& state, const PitchforkStepTables& tab,
                    double dt, RngStream& rng, double guard = 1e6);

/// Variance v(t) of the linearised zero mode d phi = (1/eps) a(t) phi dt
/// + sigma/sqrt(eps) dW, evaluated on t_grid with v(0) given.
std::vector<double> linear_variance_profile(const LinearisationPath& a, double eps,
                                            double sigma, double v0,
                                            const std::vector<double>& t_grid);

/// Empirical Schauder constant sup_t ||e^{t Delta} g||_beta t^{(beta-alpha)/2}
/// / ||g||_alpha over the grid (B^._{2,inf} norms, coefficient route).
double schauder_check(const FourierField& g, double alpha, double beta,
                      const std::vector<double>& t_grid);

}  // namespace spde

#endif
