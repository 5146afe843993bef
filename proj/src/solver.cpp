#include "spde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spde {

namespace {

double phi1z(double z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z;
  return std::expm1(z) / z;
}

double poly_eval(const std::vector<double>& c, double t) {
  double v = 0.0;
  for (size_t i = c.size(); i-- > 0;) v = v * t + c[i];
  return v;
}

}  // namespace

DriftPolynomial::DriftPolynomial(std::vector<std::vector<double>> aj_coef)
    : aj_(std::move(aj_coef)) {
  if (aj_.size() < 2) throw std::invalid_argument("DriftPolynomial: degree must be >= 1");
  for (auto& c : aj_)
    if (c.empty()) c.assign(1, 0.0);
}

double DriftPolynomial::A(int j, double t) const {
  if (j < 0 || j > degree()) return 0.0;
  return poly_eval(aj_[j], t);
}

double DriftPolynomial::F(double t, double phi) const {
  double v = 0.0;
  for (int j = degree(); j >= 0; --j) v = v * phi + A(j, t);
  return v;
}

double DriftPolynomial::dF(double t, double phi) const {
  double v = 0.0;
  for (int j = degree(); j >= 1; --j) v = v * phi + j * A(j, t);
  return v;
}

void DriftPolynomial::validate(double T) const {
  const int n = degree();
  if (n < 3 || n % 2 == 0)
    throw std::invalid_argument("DriftPolynomial: degree must be odd and >= 3, got " +
                                std::to_string(n));
  for (int i = 0; i <= 256; ++i) {
    const double t = T * i / 256.0;
    if (!(A(n, t) < 0.0))
      throw std::invalid_argument("DriftPolynomial: leading coefficient not negative at t = " +
                                  std::to_string(t));
  }
}

namespace {

bool newton_root(const DriftPolynomial& F, double t, double& x) {
  for (int it = 0; it < 100; ++it) {
    const double f = F.F(t, x);
    const double d = F.dF(t, x);
    if (std::abs(d) < 1e-12) return false;
    double step = f / d;
    double xn = x - step;
    double fn = F.F(t, xn);
    int halvings = 0;
    while (std::abs(fn) > std::abs(f) && halvings < 60) {
      step *= 0.5;
      xn = x - step;
      fn = F.F(t, xn);
      ++halvings;
    }
    x = xn;
    if (std::abs(step) < 1e-13 * std::max(1.0, std::abs(x)) || std::abs(fn) < 1e-12)
      return std::abs(fn) < 1e-8;
  }
  return false;
}

// Continuation with t-step halving on Newton divergence.
bool continue_root(const DriftPolynomial& F, double t_prev, double t, double& x, int depth) {
  const double x0 = x;
  if (newton_root(F, t, x)) return true;
  if (depth >= 24) return false;
  x = x0;
  const double tm = 0.5 * (t_prev + t);
  return continue_root(F, t_prev, tm, x, depth + 1) && continue_root(F, tm, t, x, depth + 1);
}

}  // namespace

bool EquilibriumBranch::all_stable() const {
  for (char s : stable)
    if (!s) return false;
  return true;
}

namespace {

double interp(const std::vector<double>& tg, const std::vector<double>& yg, double t) {
  if (t <= tg.front()) return yg.front();
  if (t >= tg.back()) return yg.back();
  const auto it = std::upper_bound(tg.begin(), tg.end(), t);
  const size_t i = static_cast<size_t>(it - tg.begin());
  const double w = (t - tg[i - 1]) / (tg[i] - tg[i - 1]);
  return (1.0 - w) * yg[i - 1] + w * yg[i];
}

}  // namespace

double EquilibriumBranch::phi_at(double t) const { return interp(t_grid, phi_star, t); }
double EquilibriumBranch::a_at(double t) const { return interp(t_grid, a_lin, t); }

EquilibriumBranch find_equilibrium_branch(const DriftPolynomial& F,
                                          const std::vector<double>& t_grid,
                                          double seed_root) {
  if (t_grid.empty()) throw std::invalid_argument("find_equilibrium_branch: empty grid");
  EquilibriumBranch br;
  br.t_grid = t_grid;
  double x = seed_root;
  if (!newton_root(F, t_grid.front(), x))
    throw std::runtime_error("find_equilibrium_branch: seed does not converge at t = " +
                             std::to_string(t_grid.front()));
  double a_min = 0.0;   // most negative linearisation on the stable part
  double a_max = -1e300;
  for (size_t i = 0; i < t_grid.size(); ++i) {
    if (i > 0 && !continue_root(F, t_grid[i - 1], t_grid[i], x, 0))
      throw std::runtime_error("find_equilibrium_branch: continuation lost the root at t = " +
                               std::to_string(t_grid[i]));
    br.phi_star.push_back(x);
    const double a = F.dF(t_grid[i], x);
    br.a_lin.push_back(a);
    br.stable.push_back(a < 0.0);
    a_max = std::max(a_max, a);
    if (a < 0.0) a_min = std::min(a_min, a);
  }
  br.a_minus = -a_min;
  br.a_plus = std::max(0.0, a_max);
  return br;
}

namespace {

// One exponential-Euler step of eps dphi/dt = Delta phi + F(t, phi).
FourierField det_step(const DriftPolynomial& F, double eps, const FourierField& phi,
                      double t, double dt) {
  std::vector<double> g = phi.to_grid();
  for (double& v : g) v = F.F(t, v);
  const FourierField rhs = FourierField::from_grid(g, phi.grid_size(), phi.cutoff());
  FourierField out = phi;
  const int N = phi.cutoff();
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const double z = -ModeIndex{k1, k2}.mu() * dt / eps;
      out.coeff(k1, k2) = std::exp(z) * phi.coeff(k1, k2) +
                          dt / eps * phi1z(z) * rhs.coeff(k1, k2);
    }
  }
  return out;
}

}  // namespace

TrackResult deterministic_track(const DriftPolynomial& F, double eps,
                                const FourierField& init,
                                const std::vector<double>& t_out,
                                const EquilibriumBranch* branch, double tol) {
  if (t_out.empty()) throw std::invalid_argument("deterministic_track: empty output grid");
  if (init.grid_size() < FourierField::min_grid(init.cutoff(), F.degree()))
    throw std::invalid_argument("deterministic_track: grid too small for the drift degree");
  TrackResult res;
  FourierField phi = init;
  double t = t_out.front();
  double dt = 0.05 * eps;
  auto record_dist = [&](double tt, const FourierField& f) {
    if (!branch) return;
    FourierField diff = f;
    diff.coeff(0, 0) -= branch->phi_at(tt);
    res.sup_h1_distance = std::max(res.sup_h1_distance, diff.h1_norm());
  };
  record_dist(t, phi);
  res.t.push_back(t);
  res.phi.push_back(phi);

  long guard = 0;
  for (size_t i = 1; i < t_out.size(); ++i) {
    const double target = t_out[i];
    while (t < target - 1e-14) {
      if (++guard > 20000000L) throw std::runtime_error("deterministic_track: step cap hit");
      double h = std::min(dt, target - t);
      const FourierField full = det_step(F, eps, phi, t, h);
      FourierField halves = det_step(F, eps, phi, t, 0.5 * h);
      halves = det_step(F, eps, halves, t + 0.5 * h, 0.5 * h);
      FourierField diff = halves;
      diff -= full;
      const double err = diff.l2_norm();
      if (err > tol && h > 1e-12) {
        dt = 0.5 * h;
        continue;
      }
      // Richardson extrapolation of the first-order pair.
      phi = halves;
      phi += diff;
      t += h;
      ++res.steps_taken;
      record_dist(t, phi);
      if (err < 0.25 * tol) dt = std::min(2.0 * h, 0.5);
    }
    t = target;
    res.t.push_back(t);
    res.phi.push_back(phi);
  }
  return res;
}

ShiftedDrift shifted_drift(const DriftPolynomial& F, double t,
                           const FourierField& phi_bar, double phi_star) {
  const int n = F.degree();
  const int N = phi_bar.cutoff();
  const int M = phi_bar.grid_size();
  ShiftedDrift sd;
  sd.a = F.dF(t, phi_star);
  const std::vector<double> g = phi_bar.to_grid();
  std::vector<double> work(g.size());
  for (int j = 1; j <= n; ++j) {
    if (j == 1) {
      for (size_t i = 0; i < g.size(); ++i) {
        double s = 0.0;
        for (int p = 2; p <= n; ++p)
          s += p * F.A(p, t) * (std::pow(g[i], p - 1) - std::pow(phi_star, p - 1));
        work[i] = s;
      }
    } else {
      for (size_t i = 0; i < g.size(); ++i) {
        double s = 0.0;
        for (int p = j; p <= n; ++p)
          s += binomial_coefficient(p, j) * F.A(p, t) * std::pow(g[i], p - j);
        work[i] = s;
      }
    }
    sd.A_hat.push_back(FourierField::from_grid(work, M, N));
  }
  return sd;
}

FourierField evolve_phi1_step(const FourierField& phi1, double t, double dt,
                              double eps, const LinearisationPath& a,
                              const std::vector<std::vector<double>>& a_hat_grids,
                              const std::vector<std::vector<double>>& psi_wick_grids,
                              double guard) {
  const int n = static_cast<int>(a_hat_grids.size());
  if (static_cast<int>(psi_wick_grids.size()) < n)
    throw std::invalid_argument("evolve_phi1_step: need :psi^l: up to the drift degree");
  const int N = phi1.cutoff();
  const int M = phi1.grid_size();
  const std::vector<double> g = phi1.to_grid();
  for (const auto& grid : a_hat_grids)
    if (grid.size() != g.size())
      throw std::invalid_argument("evolve_phi1_step: grid size mismatch");

  std::vector<double> binom(static_cast<size_t>(n + 1) * (n + 1), 0.0);
  for (int j = 1; j <= n; ++j)
    for (int l = 0; l <= j; ++l)
      binom[static_cast<size_t>(j) * (n + 1) + l] = binomial_coefficient(j, l);
  std::vector<double> up(n + 1);
  std::vector<double> b(g.size(), 0.0);
  for (size_t i = 0; i < g.size(); ++i) {
    up[0] = 1.0;
    for (int j = 1; j <= n; ++j) up[j] = up[j - 1] * g[i];
    double s = 0.0;
    for (int j = 1; j <= n; ++j) {
      double inner = up[j];  // l = 0 term
      for (int l = 1; l <= j; ++l)
        inner += binom[static_cast<size_t>(j) * (n + 1) + l] * up[j - l] *
                 psi_wick_grids[l - 1][i];
      s += a_hat_grids[j - 1][i] * inner;
    }
    b[i] = s;
  }
  const FourierField bf = FourierField::from_grid(b, M, N);

  FourierField out = phi1;
  const double ia = a.integral(t + dt, t);
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const double z = (-ModeIndex{k1, k2}.mu() * dt + ia) / eps;
      out.coeff(k1, k2) = std::exp(z) * phi1.coeff(k1, k2) +
                          dt / eps * phi1z(z) * bf.coeff(k1, k2);
    }
  }
  if (!(out.l2_norm() < guard))
    throw std::runtime_error("evolve_phi1_step: divergence guard tripped at t = " +
                             std::to_string(t));
  return out;
}

PitchforkStepTables PitchforkStepTables::compute(const ConvolutionConfig& cfg, double t,
                                                 double dt) {
  PitchforkStepTables tab;
  ConvolutionConfig perp = cfg;
  perp.zero_mode_noise = false;
  tab.psi_factors = StepFactors::compute(perp, t, dt);
  const double ia = cfg.a.integral(t + dt, t);
  tab.g0 = std::exp(ia / cfg.eps);
  tab.s0 = std::sqrt(std::max(
      0.0, ou_innovation_variance(cfg.a, ModeIndex{0, 0}, cfg.eps, cfg.sigma, t, dt)));
  tab.w0 = dt / cfg.eps * phi1z(ia / cfg.eps);
  return tab;
}

void pitchfork_step(PitchforkState& state, const PitchforkStepTables& tab, double dt,
                    RngStream& rng, double guard) {
  FourierField& psi = state.psi_perp.psi();
  const int N = psi.cutoff();
  const int M = psi.grid_size();
  const double Cperp = state.psi_perp.total_variance();

  const std::vector<double> pg = psi.to_grid();
  const std::vector<double> p1g = state.phi1perp.to_grid();
  std::vector<double> fg(pg.size());
  for (size_t i = 0; i < pg.size(); ++i) {
    const double w2 = hermite(2, pg[i], Cperp);
    const double w3 = hermite(3, pg[i], Cperp);
    const double u = state.phi10 + p1g[i];
    fg[i] = -w3 - 3.0 * u * w2 - 3.0 * u * u * pg[i] - u * u * u;
  }
  const FourierField f = FourierField::from_grid(fg, M, N);
  const double f0 = f.coeff(0, 0).real();

  // Fixed draw order: psi_perp innovations first, then the zero-mode noise.
  tab.psi_factors.apply(state.psi_perp, rng);
  state.phi10 = tab.g0 * state.phi10 + tab.w0 * f0 + tab.s0 * rng.normal();

  const double eps = state.psi_perp.config().eps;
  const int side = 2 * N + 1;
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      if (k1 == 0 && k2 == 0) {
        state.phi1perp.coeff(0, 0) = 0.0;
        continue;
      }
      const size_t i = static_cast<size_t>(k1 + N) * side + (k2 + N);
      const double g = tab.psi_factors.mean_factor[i];
      const double w = dt / eps * phi1z(std::log(g));
      state.phi1perp.coeff(k1, k2) =
          g * state.phi1perp.coeff(k1, k2) + w * f.coeff(k1, k2);
    }
  }
  if (!(std::abs(state.phi10) < guard && state.phi1perp.l2_norm() < guard))
    throw std::runtime_error("pitchfork_step: divergence guard tripped");
}

std::vector<double> linear_variance_profile(const LinearisationPath& a, double eps,
                                            double sigma, double v0,
                                            const std::vector<double>& t_grid) {
  if (t_grid.empty()) throw std::invalid_argument("linear_variance_profile: empty grid");
  std::vector<double> v;
  v.reserve(t_grid.size());
  v.push_back(v0);
  const ModeIndex k0{0, 0};
  for (size_t i = 1; i < t_grid.size(); ++i) {
    const double t = t_grid[i - 1], dt = t_grid[i] - t_grid[i - 1];
    if (!(dt > 0.0)) throw std::invalid_argument("linear_variance_profile: grid not increasing");
    const double g = std::exp(a.integral(t + dt, t) / eps);
    const double s2 = ou_innovation_variance(a, k0, eps, sigma, t, dt);
    v.push_back(g * g * v.back() + s2);
  }
  return v;
}

double schauder_check(const FourierField& g, double alpha, double beta,
                      const std::vector<double>& t_grid) {
  if (beta > alpha + 2.0 + 1e-12)
    throw std::invalid_argument("schauder_check: requires beta <= alpha + 2");
  const double base = g.besov_2inf(alpha);
  if (!(base > 0.0)) throw std::invalid_argument("schauder_check: zero input field");
  const int N = g.cutoff();
  double sup = 0.0;
  for (double t : t_grid) {
    if (!(t > 0.0)) throw std::invalid_argument("schauder_check: times must be positive");
    FourierField h = g;
    for (int k1 = -N; k1 <= N; ++k1) {
      const int r = N - std::abs(k1);
      for (int k2 = -r; k2 <= r; ++k2)
        h.coeff(k1, k2) *= std::exp(-ModeIndex{k1, k2}.mu() * t);
    }
    sup = std::max(sup, h.besov_2inf(beta) * std::pow(t, 0.5 * (beta - alpha)) / base);
  }
  return sup;
}

}  // namespace spde
