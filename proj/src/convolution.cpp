#include "spde/convolution.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace spde {

LinearisationPath::LinearisationPath(std::vector<double> coef) : coef_(std::move(coef)) {
  if (coef_.empty()) throw std::invalid_argument("LinearisationPath: empty coefficients");
}

double LinearisationPath::a(double t) const {
  double v = 0.0;
  for (size_t i = coef_.size(); i-- > 0;) v = v * t + coef_[i];
  return v;
}

double LinearisationPath::integral(double t, double t1) const {
  // Exact polynomial antiderivative A with A(0) = 0.
  auto A = [&](double s) {
    double v = 0.0;
    for (size_t i = coef_.size(); i-- > 0;) v = v * s + coef_[i] / static_cast<double>(i + 1);
    return v * s;
  };
  return A(t) - A(t1);
}

double LinearisationPath::max_on_grid(double t0, double t1, int samples) const {
  double m = a(t0);
  for (int i = 1; i <= samples; ++i)
    m = std::max(m, a(t0 + (t1 - t0) * i / samples));
  return m;
}

namespace {

// phi(z) = (e^z - 1)/z, stable near z = 0.
double phi1z(double z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z;
  return std::expm1(z) / z;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double fa, double fm, double fb, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return adaptive_simpson(f, a, b, fa, fm, fb, tol, 48);
}

}  // namespace

double ou_innovation_variance(const LinearisationPath& a, ModeIndex k, double eps,
                              double sigma, double t, double dt) {
  const double sig2 = sigma * sigma;
  if (a.is_constant()) {
    const double lambda = k.mu() - a.a(0.0);
    return sig2 / eps * dt * phi1z(-2.0 * lambda * dt / eps);
  }
  const double t2 = t + dt;
  auto f = [&](double s) { return std::exp(2.0 * a.alpha_k(k, t2, s) / eps); };
  return sig2 / eps * integrate(f, t, t2, 1e-10 * dt);
}

ConvolutionState::ConvolutionState(const ConvolutionConfig& cfg, RngStream* rng)
    : cfg_(cfg) {
  if (cfg_.M == 0) cfg_.M = FourierField::min_grid(cfg_.N, 3);
  psi_ = FourierField(cfg_.N, cfg_.M);
  const int N = cfg_.N;
  var_.assign(static_cast<size_t>(2 * N + 1) * (2 * N + 1), 0.0);
  RenormConstant rc = renorm_constant(N, cfg_.sigma);
  if (cfg_.init == InitLaw::stationary) {
    if (!rng) throw std::invalid_argument("ConvolutionState: stationary init needs an rng");
    for (int k1 = 0; k1 <= N; ++k1) {
      const int r = N - k1;
      for (int k2 = (k1 == 0 ? 0 : -r); k2 <= r; ++k2) {
        const ModeIndex k{k1, k2};
        if (!cfg_.zero_mode_noise && k.l1() == 0) continue;
        const double vk = rc.v(k);
        var_[index(k)] = vk;
        var_[index(-k)] = vk;
        if (k.l1() == 0) {
          psi_.set_pair(k, std::sqrt(vk) * rng->normal());
        } else {
          const double s = std::sqrt(0.5 * vk);
          psi_.set_pair(k, {s * rng->normal(), s * rng->normal()});
        }
      }
    }
  }
}

double ConvolutionState::total_variance() const {
  double s = 0.0;
  const int N = cfg_.N;
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) s += var_[index({k1, k2})];
  }
  return s;
}

StepFactors StepFactors::compute(const ConvolutionConfig& cfg, double t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_exact: dt must be > 0");
  StepFactors sf;
  sf.t = t;
  sf.dt = dt;
  const int N = cfg.N;
  const int side = 2 * N + 1;
  sf.mean_factor.assign(static_cast<size_t>(side) * side, 0.0);
  sf.innovation_sd.assign(static_cast<size_t>(side) * side, 0.0);
  const double eps = cfg.eps;
  const double t2 = t + dt;
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const ModeIndex k{k1, k2};
      const size_t i = static_cast<size_t>(k1 + N) * side + (k2 + N);
      sf.mean_factor[i] = std::exp(cfg.a.alpha_k(k, t2, t) / eps);
      if (!cfg.zero_mode_noise && k.l1() == 0) continue;
      const double var = ou_innovation_variance(cfg.a, k, eps, cfg.sigma, t, dt);
      sf.innovation_sd[i] = std::sqrt(std::max(0.0, var));
    }
  }
  return sf;
}

void StepFactors::apply(ConvolutionState& state, RngStream& rng) const {
  const int N = state.cfg_.N;
  FourierField& psi = state.psi_;
  for (int k1 = 0; k1 <= N; ++k1) {
    const int r = N - k1;
    for (int k2 = (k1 == 0 ? 0 : -r); k2 <= r; ++k2) {
      const ModeIndex k{k1, k2};
      const size_t i = state.index(k);
      const double g = mean_factor[i];
      const double s = innovation_sd[i];
      if (k.l1() == 0) {
        psi.set_pair(k, g * psi.coeff(k).real() + s * rng.normal());
      } else {
        // One complex draw drives the conjugate pair {k, -k}.
        const double h = s / std::sqrt(2.0);
        std::complex<double> inn{h * rng.normal(), h * rng.normal()};
        psi.set_pair(k, g * psi.coeff(k) + inn);
      }
      const double v = g * g * state.var_[i] + s * s;
      state.var_[i] = v;
      state.var_[state.index(-k)] = v;
    }
  }
  // Relative advance so a precomputed table can be reused across an ensemble
  // of steps when a is constant in t.
  state.t_ += dt;
}

void ConvolutionState::step_exact(double dt, RngStream& rng) {
  StepFactors::compute(cfg_, t_, dt).apply(*this, rng);
}

std::vector<FourierField> ConvolutionState::wick_powers(int m_max) const {
  std::vector<FourierField> out;
  out.reserve(m_max);
  const double C = total_variance();
  for (int m = 1; m <= m_max; ++m) {
    if (m == 1) out.push_back(psi_);
    else out.push_back(wick_power_field(psi_, m, C));
  }
  return out;
}

Partition build_partition(double T, double eps, double gamma0, int qbar,
                          const LinearisationPath& a) {
  if (!(T > 0.0 && eps > 0.0 && gamma0 > 0.0))
    throw std::invalid_argument("build_partition: T, eps, gamma0 must be > 0");
  Partition p;
  p.gamma0 = gamma0;
  p.k0 = ModeIndex{1 << qbar, 0};
  const double mu0 = p.k0.mu();

  std::vector<double> rev;  // breakpoints from T downwards
  rev.push_back(T);
  if (a.is_constant()) {
    const double rate = mu0 - a.a(0.0);
    if (rate <= 0.0) throw std::invalid_argument("build_partition: non-decaying reference mode");
    const double h = gamma0 * eps / rate;
    const double L = std::floor(rate * T / (gamma0 * eps));
    if (L > 1e8) throw std::length_error("build_partition: partition too fine");
    for (long l = 1; l <= static_cast<long>(L); ++l) rev.push_back(T - l * h);
    if (rev.back() <= 0.0) rev.pop_back();
  } else {
    double hi = T;
    // Walk backwards: each breakpoint u < hi solves
    // alpha_{k0}(hi, u) = -gamma0*eps; alpha_k0 decreases as u moves left.
    while (a.alpha_k(p.k0, hi, 0.0) <= -gamma0 * eps) {
      double lo2 = 0.0, hi2 = hi;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo2 + hi2);
        if (a.alpha_k(p.k0, hi, mid) <= -gamma0 * eps) lo2 = mid; else hi2 = mid;
      }
      hi = 0.5 * (lo2 + hi2);
      if (hi <= 0.0) break;
      rev.push_back(hi);
      if (rev.size() > 1e8) throw std::length_error("build_partition: partition too fine");
    }
  }
  if (rev.back() > 0.0) rev.push_back(0.0);
  p.breakpoints.assign(rev.rbegin(), rev.rend());
  return p;
}

MartingaleView martingale_transform(const ConvolutionState& state,
                                    const Partition& partition, int l) {
  if (l < 0 || l >= partition.intervals())
    throw std::out_of_range("martingale_transform: interval index out of range");
  const double ul = partition.breakpoints[l];
  const double ul1 = partition.breakpoints[l + 1];
  const double t = state.time();
  if (t < ul - 1e-12 || t > ul1 + 1e-12)
    throw std::invalid_argument("martingale_transform: time outside the partition interval");
  const ConvolutionConfig& cfg = state.config();
  const int N = cfg.N;
  MartingaleView mv{state.psi(), std::vector<double>(
                                     static_cast<size_t>(2 * N + 1) * (2 * N + 1), 0.0)};
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const ModeIndex k{k1, k2};
      const double f = std::exp(cfg.a.alpha_k(k, ul1, t) / cfg.eps);
      mv.psi_hat.coeff(k) *= f;
      const size_t i = static_cast<size_t>(k1 + N) * (2 * N + 1) + (k2 + N);
      mv.v_hat[i] = state.variance(k) * f * f;
    }
  }
  return mv;
}

double chaos_expectation_oracle(const std::vector<int>& hbn, int q0, int N,
                                const RenormConstant& variances) {
  int m = 0;
  for (int n : hbn) m += n;
  if (m > 3 || N > 8)
    throw std::length_error("chaos_expectation_oracle: budget is |hbn| <= 3, N <= 8");
  // Modes per annulus within the cutoff ball.
  std::vector<std::vector<ModeIndex>> annuli(hbn.size());
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const int q = annulus_of(std::abs(k1) + std::abs(k2));
      if (q < static_cast<int>(hbn.size())) annuli[q].push_back({k1, k2});
    }
  }
  double budget = 1.0, hbn_fact = 1.0;
  std::vector<std::pair<int, int>> slots;  // (annulus, copy index)
  for (size_t q = 0; q < hbn.size(); ++q) {
    for (int i = 0; i < hbn[q]; ++i) {
      if (annuli[q].empty()) return 0.0;
      slots.emplace_back(static_cast<int>(q), i);
      budget *= annuli[q].size();
    }
    for (int i = 2; i <= hbn[q]; ++i) hbn_fact *= i;
  }
  if (budget > 2e9) throw std::length_error("chaos_expectation_oracle: tuple budget exceeded");
  if (slots.empty()) return q0 == 0 ? 1.0 : 0.0;  // m = 0: constant field 1

  double total = 0.0;
  std::function<void(size_t, int, int, double)> rec = [&](size_t s, int sk1, int sk2,
                                                          double prod) {
    if (s == slots.size()) {
      if (annulus_of(std::abs(sk1) + std::abs(sk2)) == q0) total += prod;
      return;
    }
    for (const ModeIndex& k : annuli[slots[s].first])
      rec(s + 1, sk1 + k.k1, sk2 + k.k2, prod * variances.v(k));
  };
  rec(0, 0, 0, 1.0);
  return hbn_fact * total;
}

}  // namespace spde
