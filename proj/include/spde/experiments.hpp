#ifndef SPDE_EXPERIMENTS_HPP
#define SPDE_EXPERIMENTS_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spde/convolution.hpp"
#include "spde/solver.hpp"
#include "spde/stats.hpp"

namespace spde {

/// Runs job(path, rng) for path = 0..paths-1 on `workers` threads. Each path
/// owns RngStream(seed, path) and must write only to its own output slot, so
/// results are identical for any worker count.
void run_paths(int paths, uint64_t seed, int workers,
               const std::function<void(int, RngStream&)>& job);

struct FitSummary {
  LineFit fit;
  bool valid = false;
  std::string flag;      // "empty-fit-range" etc. when !valid
  double x_lo = 0.0;     // fit range actually used
  double x_hi = 0.0;
};

/// Exceedance table P(sup > h) on a quantile-derived h grid, with Wilson
/// intervals, from per-path sup samples. The kappa fit regresses -log P
/// against h^2/sigma^2 over the band p_lo <= P <= p_hi, WLS with weights
/// from the Wilson widths.
struct ExceedanceTable {
  std::vector<double> h, p_hat, lo, hi;
  FitSummary rate;
  static ExceedanceTable build(const std::vector<double>& sups, double x_scale,
                               int grid_points = 30, double x_power = 2.0,
                               double p_hi = 0.5);
};

// ---------------------------------------------------------------------------
// Tail experiment: sup_t ||:psi^m:||_{B^alpha_{2,inf}} over stationary paths.

struct TailConfig {
  double eps = 0.1;
  double sigma = 0.05;
  double T = 1.0;
  int N = 16;
  int M = 0;  // 0: min_grid(N, m_max)
  LinearisationPath a = LinearisationPath::constant(-1.0);
  int m_max = 3;
  std::vector<double> alphas{-0.5};
  int paths = 10000;
  double stride = 0.0;  // output stride; 0: eps/10
  uint64_t seed = 1;
  int workers = 1;
};

struct TailCell {
  int m = 1;
  double alpha = 0.0;
  std::vector<double> sup_samples;  // per path, path order
  ExceedanceTable table;
};

struct TailReport {
  TailConfig config;
  std::string note;  // sup-over-grid discretisation bias statement
  std::vector<TailCell> cells;
};

TailReport tail_experiment(const TailConfig& cfg);

// ---------------------------------------------------------------------------
// Stable-case phi_1 concentration around a moving cubic branch.

/// Fixture drift F(t, phi) = -u - u^2 - u^3 with u = phi - p(t),
/// p(t) = p0 + p1 t: stable branch phi*(t) = p(t), linearisation a = -1.
DriftPolynomial moving_branch_cubic(double p0, double p1);

struct StableConfig {
  double eps = 0.1;
  double T = 1.0;
  int N = 4;
  int M = 0;
  std::vector<double> sigmas{0.0025, 0.005, 0.01};
  double gamma = 1.5;  // sup norm taken in C^{gamma-1}
  double p0 = 0.2, p1 = 0.5;
  int paths = 1000;
  double dt_factor = 0.05;  // dt = dt_factor * eps
  int record_stride = 2;
  uint64_t seed = 2;
  int workers = 1;
};

struct StablePoint {
  double sigma = 0.0;
  std::vector<double> sup_samples;
  double median_sup = 0.0;
  int diverged = 0;
};

struct StableReport {
  StableConfig config;
  std::vector<StablePoint> points;
  std::vector<double> doubling_ratios;  // median(2 sigma)/median(sigma)
};

StableReport phi1_experiment(const StableConfig& cfg);

// ---------------------------------------------------------------------------
// Pitchfork setting: a(t) = slope*(t - tstar) crossing zero.

enum class TubeConvention { sqrt_variance, literal_variance };

struct PitchforkConfig {
  double eps = 4e-3;
  double T = 0.45;
  double tstar = 0.1;
  double slope = 0.5;
  int N = 2;
  int M = 0;
  std::vector<double> sigmas{1e-2, 1e-3, 1e-4};
  double hminus_factor = 3.0;  // h_- = factor * sigma
  TubeConvention convention = TubeConvention::sqrt_variance;
  double dt = 0.0;  // 0: eps/2
  int paths = 2000;
  bool sigma0_control = true;
  uint64_t seed = 3;
  int workers = 1;
};

struct ExitPoint {
  double sigma = 0.0, h_minus = 0.0, h_plus = 0.0;
  // First-exit times; NaN encodes censoring at T (or at tstar+sqrt(eps) for
  // the B_- tube, whose domain ends there).
  std::vector<double> tau_minus, tau_plus;
  int exits_minus = 0, censored_minus = 0;
  int exits_plus = 0, censored_plus = 0;
  double sd_at_tstar_sqrt_eps = 0.0;
  double median_delay = 0.0;       // median(tau_plus - tstar), uncensored
  double normalized_delay = 0.0;   // median_delay / sqrt(eps * log(1/sigma))
  bool fit_refused = false;        // < 50% uncensored
};

struct ExitReport {
  PitchforkConfig config;
  std::vector<ExitPoint> points;
  bool sigma0_no_exit = false;     // sigma = 0 control fully censored
  double delay_spread = 0.0;       // (max - min)/mean of normalized delays
};

ExitReport pitchfork_exit_experiment(const PitchforkConfig& cfg);

// ---------------------------------------------------------------------------
// phi_1^perp cubic scaling in the pitchfork setting, with stopping at
// tau_0(H_0) = inf{t : |phi_1^0(t)| > H_0}.

struct PerpConfig {
  double eps = 0.01;
  double T = 0.5;
  double tstar = 0.3;
  double slope = 1.0;
  int N = 2;
  int M = 0;
  std::vector<double> sigmas{0.01, 0.02, 0.04};
  double H0_factor = 5.0;  // H_0 = factor * sigma
  double gamma = 1.5;
  double dt = 0.0;  // 0: eps/10
  int paths = 400;
  uint64_t seed = 4;
  int workers = 1;
};

struct PerpPoint {
  double sigma = 0.0, H0 = 0.0;
  std::vector<double> sup_samples;  // sup over [0, T ^ tau_0], all paths
  int censored = 0;                 // paths stopped at tau_0
  double median_censored = 0.0;     // censored paths included (counting A)
  double median_surviving = 0.0;    // censored paths excluded (counting B)
};

struct PerpReport {
  PerpConfig config;
  std::vector<PerpPoint> points;
  // log median vs log(sigma + H0); slope is the fitted cubic exponent.
  FitSummary exponent_censored;
  FitSummary exponent_surviving;
};

PerpReport phi1perp_experiment(const PerpConfig& cfg);

// ---------------------------------------------------------------------------
// Pairing probe: tails of <:psi^m:, eta_rho> for rho = 2^{-q0}, with the
// constant-L2-norm test function scaling (p = 2).

struct ProbeConfig {
  double sigma = 0.05;
  int N = 16;
  int M = 0;
  int m = 1;
  std::vector<int> q0_list{0, 1, 2, 3, 4};
  double alpha = -0.5;  // for the pathwise Besov-pairing bound check
  int paths = 2000;
  uint64_t seed = 5;
  int workers = 1;
};

struct ProbeCell {
  int q0 = 0;
  std::vector<double> pairing_samples;  // |<:psi^m:, eta>| per path
  ExceedanceTable table;                // rate fit on h^{2/m}
};

struct ProbeReport {
  ProbeConfig config;
  std::vector<ProbeCell> cells;
  double pairing_bound_constant = 0.0;  // max |pairing| / (besov product bound)
};

ProbeReport pairing_probe(const ProbeConfig& cfg);

}  // namespace spde

#endif
