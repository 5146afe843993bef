#include "spde/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace spde {

void run_paths(int paths, uint64_t seed, int workers,
               const std::function<void(int, RngStream&)>& job) {
  workers = std::max(1, workers);
  if (workers == 1) {
    for (int p = 0; p < paths; ++p) {
      RngStream rng(seed, static_cast<uint64_t>(p));
      job(p, rng);
    }
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto worker = [&] {
    for (;;) {
      const int p = next.fetch_add(1);
      if (p >= paths) return;
      try {
        RngStream rng(seed, static_cast<uint64_t>(p));
        job(p, rng);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

ExceedanceTable ExceedanceTable::build(const std::vector<double>& sups, double x_scale,
                                       int grid_points, double x_power, double p_hi) {
  ExceedanceTable tab;
  const size_t n = sups.size();
  if (n < 20) {
    tab.rate.flag = "too-few-samples";
    return tab;
  }
  std::vector<double> sorted = sups;
  std::sort(sorted.begin(), sorted.end());
  // Threshold grid from the 30th percentile to just below the observed max;
  // beyond the max the exceedance is exactly 0.
  const double h0 = sorted[static_cast<size_t>(0.3 * n)];
  const double h1 = sorted[n - 2];
  if (!(h1 > h0)) {
    tab.rate.flag = "degenerate-sample";
    return tab;
  }
  std::vector<double> fx, fy, fw;
  const double p_lo = 10.0 / static_cast<double>(n);
  for (int j = 0; j < grid_points; ++j) {
    const double h = h0 + (h1 - h0) * j / (grid_points - 1);
    const uint64_t exceed =
        static_cast<uint64_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), h));
    const double p = static_cast<double>(exceed) / n;
    const Interval ci = wilson_interval(exceed, n);
    tab.h.push_back(h);
    tab.p_hat.push_back(p);
    tab.lo.push_back(ci.lo);
    tab.hi.push_back(ci.hi);
    if (p >= p_lo && p <= p_hi && ci.lo > 0.0) {
      const double x = std::pow(h, x_power) * x_scale;
      const double dy = 0.5 * (std::log(ci.hi) - std::log(ci.lo));
      fx.push_back(x);
      fy.push_back(-std::log(p));
      fw.push_back(1.0 / (dy * dy));
    }
  }
  if (fx.size() < 3) {
    tab.rate.flag = "empty-fit-range";
    return tab;
  }
  tab.rate.fit = weighted_least_squares(fx, fy, fw);
  tab.rate.valid = true;
  tab.rate.x_lo = *std::min_element(fx.begin(), fx.end());
  tab.rate.x_hi = *std::max_element(fx.begin(), fx.end());
  return tab;
}

// ---------------------------------------------------------------------------

TailReport tail_experiment(const TailConfig& cfg) {
  if (cfg.paths < 1000) throw std::invalid_argument("tail_experiment: need >= 1e3 paths");
  TailReport rep;
  rep.config = cfg;
  rep.note = "sup over t is the max over the simulation grid; the continuum sup "
             "is underestimated by the discretisation";

  ConvolutionConfig cc;
  cc.eps = cfg.eps;
  cc.sigma = cfg.sigma;
  cc.N = cfg.N;
  cc.M = cfg.M ? cfg.M : FourierField::min_grid(cfg.N, cfg.m_max);
  cc.a = cfg.a;
  cc.init = InitLaw::stationary;

  const double stride = cfg.stride > 0.0 ? cfg.stride : cfg.eps / 10.0;
  const int steps = static_cast<int>(std::lround(cfg.T / stride));
  std::vector<StepFactors> factors;
  if (cc.a.is_constant()) {
    factors.push_back(StepFactors::compute(cc, 0.0, stride));
  } else {
    for (int i = 0; i < steps; ++i)
      factors.push_back(StepFactors::compute(cc, i * stride, stride));
  }

  const int na = static_cast<int>(cfg.alphas.size());
  const int cells = cfg.m_max * na;
  std::vector<std::vector<double>> sups(cells, std::vector<double>(cfg.paths, 0.0));

  run_paths(cfg.paths, cfg.seed, cfg.workers, [&](int p, RngStream& rng) {
    ConvolutionState st(cc, &rng);
    std::vector<double> cur(cells, 0.0);
    std::vector<double> g, hprev, hcur;
    FourierField f;
    auto observe = [&] {
      const double C = st.total_variance();
      for (int ai = 0; ai < na; ++ai) {
        double& s = cur[ai];
        s = std::max(s, st.psi().besov_2inf(cfg.alphas[ai]));
      }
      if (cfg.m_max < 2) return;
      st.psi().to_grid(g);
      hprev = g;  // H_1
      hcur.resize(g.size());
      for (size_t i = 0; i < g.size(); ++i) hcur[i] = g[i] * g[i] - C;  // H_2
      for (int m = 2; m <= cfg.m_max; ++m) {
        f = FourierField::from_grid(hcur, cc.M, cc.N);
        for (int ai = 0; ai < na; ++ai) {
          double& s = cur[(m - 1) * na + ai];
          s = std::max(s, f.besov_2inf(cfg.alphas[ai]));
        }
        if (m < cfg.m_max) {
          // H_{m+1} = x H_m - m C H_{m-1}, overwriting H_{m-1} in place.
          for (size_t i = 0; i < g.size(); ++i)
            hprev[i] = g[i] * hcur[i] - m * C * hprev[i];
          std::swap(hprev, hcur);
        }
      }
    };
    observe();
    for (int i = 0; i < steps; ++i) {
      factors[cc.a.is_constant() ? 0 : i].apply(st, rng);
      observe();
    }
    for (int c = 0; c < cells; ++c) sups[c][p] = cur[c];
  });

  for (int m = 1; m <= cfg.m_max; ++m)
    for (int ai = 0; ai < na; ++ai) {
      TailCell cell;
      cell.m = m;
      cell.alpha = cfg.alphas[ai];
      cell.sup_samples = std::move(sups[(m - 1) * na + ai]);
      // The tail bound thresholds :psi^m: at h^m, so the regression variable
      // is sup^{2/m} / sigma^2.
      cell.table = ExceedanceTable::build(cell.sup_samples,
                                          1.0 / (cfg.sigma * cfg.sigma), 30, 2.0 / m);
      rep.cells.push_back(std::move(cell));
    }
  return rep;
}

// ---------------------------------------------------------------------------

DriftPolynomial moving_branch_cubic(double p0, double p1) {
  // F(t, phi) = -u - u^2 - u^3, u = phi - p(t), p(t) = p0 + p1 t. Expanded:
  // A3 = -1, A2 = 3p - 1, A1 = -1 + 2p - 3p^2, A0 = p - p^2 + p^3.
  auto sq = [](const std::vector<double>& c) {  // square of a linear polynomial
    return std::vector<double>{c[0] * c[0], 2.0 * c[0] * c[1], c[1] * c[1]};
  };
  const std::vector<double> p{p0, p1};
  const std::vector<double> p2 = sq(p);
  const std::vector<double> p3{p2[0] * p0, p2[0] * p1 + p2[1] * p0,
                               p2[1] * p1 + p2[2] * p0, p2[2] * p1};
  std::vector<double> A0{p[0] - p2[0] + p3[0], p[1] - p2[1] + p3[1], -p2[2] + p3[2], p3[3]};
  std::vector<double> A1{-1.0 + 2.0 * p[0] - 3.0 * p2[0], 2.0 * p[1] - 3.0 * p2[1], -3.0 * p2[2]};
  std::vector<double> A2{3.0 * p[0] - 1.0, 3.0 * p[1]};
  return DriftPolynomial({A0, A1, A2, {-1.0}});
}

StableReport phi1_experiment(const StableConfig& cfg) {
  StableReport rep;
  rep.config = cfg;
  const DriftPolynomial drift = moving_branch_cubic(cfg.p0, cfg.p1);
  drift.validate(cfg.T);

  const int M = cfg.M ? cfg.M : FourierField::min_grid(cfg.N, 3);
  const double dt = cfg.dt_factor * cfg.eps;
  const int steps = static_cast<int>(std::lround(cfg.T / dt));
  std::vector<double> t_grid(steps + 1);
  for (int i = 0; i <= steps; ++i) t_grid[i] = i * dt;

  std::vector<double> coarse(201);
  for (int i = 0; i <= 200; ++i) coarse[i] = cfg.T * i / 200.0;
  const EquilibriumBranch branch = find_equilibrium_branch(drift, coarse, cfg.p0);
  if (!branch.all_stable())
    throw std::runtime_error("phi1_experiment: fixture branch is not uniformly stable");

  FourierField init(cfg.N, M);
  init.coeff(0, 0) = branch.phi_at(0.0);
  const TrackResult track = deterministic_track(drift, cfg.eps, init, t_grid, &branch);

  // Path-independent tables per step: shifted drift grids and the psi factors.
  // The fixture has a(t) = dF(t, phi*(t)) = -1 exactly, so one factor table.
  const LinearisationPath a_path = LinearisationPath::constant(-1.0);
  std::vector<std::vector<std::vector<double>>> ahat(steps);
  for (int i = 0; i < steps; ++i) {
    const ShiftedDrift sd = shifted_drift(drift, t_grid[i], track.phi[i],
                                          branch.phi_at(t_grid[i]));
    for (const FourierField& f : sd.A_hat) ahat[i].push_back(f.to_grid());
  }

  const double hold = cfg.gamma - 1.0;
  for (double sigma : cfg.sigmas) {
    ConvolutionConfig cc;
    cc.eps = cfg.eps;
    cc.sigma = sigma;
    cc.N = cfg.N;
    cc.M = M;
    cc.a = a_path;
    cc.init = InitLaw::stationary;
    const StepFactors sf = StepFactors::compute(cc, 0.0, dt);

    StablePoint pt;
    pt.sigma = sigma;
    pt.sup_samples.assign(cfg.paths, 0.0);
    std::vector<char> bad(cfg.paths, 0);
    run_paths(cfg.paths, cfg.seed, cfg.workers, [&](int p, RngStream& rng) {
      ConvolutionState psi(cc, &rng);
      FourierField phi1(cfg.N, M);
      double sup = 0.0;
      try {
        for (int i = 0; i < steps; ++i) {
          const double C = psi.total_variance();
          std::vector<double> g = psi.psi().to_grid();
          std::vector<double> w2 = g, w3 = g;
          for (size_t j = 0; j < g.size(); ++j) {
            w2[j] = hermite(2, g[j], C);
            w3[j] = hermite(3, g[j], C);
          }
          phi1 = evolve_phi1_step(phi1, t_grid[i], dt, cfg.eps, a_path, ahat[i],
                                  {g, w2, w3});
          sf.apply(psi, rng);
          if ((i + 1) % cfg.record_stride == 0 || i + 1 == steps)
            sup = std::max(sup, phi1.holder_norm(hold));
        }
      } catch (const std::runtime_error&) {
        bad[p] = 1;
      }
      pt.sup_samples[p] = sup;
    });
    std::vector<double> good;
    for (int p = 0; p < cfg.paths; ++p) {
      if (bad[p]) ++pt.diverged;
      else good.push_back(pt.sup_samples[p]);
    }
    pt.median_sup = good.empty() ? 0.0 : median(good);
    rep.points.push_back(std::move(pt));
  }
  for (size_t i = 1; i < rep.points.size(); ++i)
    rep.doubling_ratios.push_back(rep.points[i].median_sup /
                                  rep.points[i - 1].median_sup);
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

LinearisationPath pitchfork_path(double tstar, double slope) {
  return LinearisationPath::affine(-slope * tstar, slope);
}

}  // namespace

ExitReport pitchfork_exit_experiment(const PitchforkConfig& cfg) {
  ExitReport rep;
  rep.config = cfg;
  const LinearisationPath a = pitchfork_path(cfg.tstar, cfg.slope);
  const double dt = cfg.dt > 0.0 ? cfg.dt : cfg.eps / 2.0;
  const int steps = static_cast<int>(std::lround(cfg.T / dt));
  const int M = cfg.M ? cfg.M : FourierField::min_grid(cfg.N, 3);
  const double t_obs = cfg.tstar + std::sqrt(cfg.eps);
  const int i_obs = static_cast<int>(std::lround(t_obs / dt));

  std::vector<double> t_grid(steps + 1);
  for (int i = 0; i <= steps; ++i) t_grid[i] = i * dt;

  for (double sigma : cfg.sigmas) {
    ConvolutionConfig cc;
    cc.eps = cfg.eps;
    cc.sigma = sigma;
    cc.N = cfg.N;
    cc.M = M;
    cc.a = a;
    cc.init = InitLaw::stationary;
    cc.zero_mode_noise = false;  // psi_perp; the zero mode lives in phi_1^0

    std::vector<PitchforkStepTables> tables(steps);
    for (int i = 0; i < steps; ++i)
      tables[i] = PitchforkStepTables::compute(cc, t_grid[i], dt);

    const double v0 = sigma * sigma / (2.0 * std::abs(a.a(0.0)));
    const std::vector<double> vprofile =
        linear_variance_profile(a, cfg.eps, sigma, v0, t_grid);
    std::vector<double> thr_minus(steps + 1);
    for (int i = 0; i <= steps; ++i)
      thr_minus[i] = cfg.convention == TubeConvention::sqrt_variance
                         ? cfg.hminus_factor * std::sqrt(vprofile[i])
                         : cfg.hminus_factor / sigma * vprofile[i];

    ExitPoint pt;
    pt.sigma = sigma;
    pt.h_minus = cfg.hminus_factor * sigma;
    pt.h_plus = sigma * std::sqrt(std::log(1.0 / sigma));
    pt.tau_minus.assign(cfg.paths, std::nan(""));
    pt.tau_plus.assign(cfg.paths, std::nan(""));
    std::vector<double> at_obs(cfg.paths, 0.0);

    run_paths(cfg.paths, cfg.seed, cfg.workers, [&](int p, RngStream& rng) {
      PitchforkState st;
      st.psi_perp = ConvolutionState(cc, &rng);
      st.phi1perp = FourierField(cfg.N, M);
      st.phi10 = std::sqrt(v0) * rng.normal();
      bool out_minus = std::abs(st.phi10) > thr_minus[0];
      if (out_minus) pt.tau_minus[p] = 0.0;
      for (int i = 0; i < steps; ++i) {
        pitchfork_step(st, tables[i], dt, rng);
        const double t = t_grid[i + 1];
        if (i + 1 == i_obs) at_obs[p] = st.phi10;
        if (!out_minus && t <= t_obs + 1e-12 && std::abs(st.phi10) > thr_minus[i + 1]) {
          out_minus = true;
          pt.tau_minus[p] = t;
        }
        if (t >= t_obs - 1e-12 &&
            std::abs(st.phi10) * std::sqrt(std::max(0.0, a.a(t))) > pt.h_plus) {
          pt.tau_plus[p] = t;
          break;
        }
      }
    });

    RunningStat obs_stat;
    std::vector<double> delays;
    for (int p = 0; p < cfg.paths; ++p) {
      obs_stat.add(at_obs[p]);
      if (std::isnan(pt.tau_minus[p])) ++pt.censored_minus; else ++pt.exits_minus;
      if (std::isnan(pt.tau_plus[p])) ++pt.censored_plus;
      else {
        ++pt.exits_plus;
        delays.push_back(pt.tau_plus[p] - cfg.tstar);
      }
    }
    pt.sd_at_tstar_sqrt_eps = std::sqrt(obs_stat.variance());
    pt.fit_refused = pt.exits_plus * 2 < cfg.paths;
    if (!pt.fit_refused) {
      pt.median_delay = median(delays);
      pt.normalized_delay =
          pt.median_delay / std::sqrt(cfg.eps * std::log(1.0 / sigma));
    }
    rep.points.push_back(std::move(pt));
  }

  if (cfg.sigma0_control) {
    // sigma = 0, zero initial data: deterministic, stays at 0, full delay.
    ConvolutionConfig cc;
    cc.eps = cfg.eps;
    cc.sigma = 0.0;
    cc.N = cfg.N;
    cc.M = M;
    cc.a = a;
    cc.init = InitLaw::zero;
    cc.zero_mode_noise = false;
    PitchforkState st;
    RngStream rng(cfg.seed, 1u << 30);
    st.psi_perp = ConvolutionState(cc, &rng);
    st.phi1perp = FourierField(cfg.N, M);
    st.phi10 = 0.0;
    rep.sigma0_no_exit = true;
    for (int i = 0; i < steps; ++i) {
      const PitchforkStepTables tab = PitchforkStepTables::compute(cc, t_grid[i], dt);
      pitchfork_step(st, tab, dt, rng);
      if (std::abs(st.phi10) > 0.0) rep.sigma0_no_exit = false;
    }
  }

  double lo = 1e300, hi = -1e300, sum = 0.0;
  int cnt = 0;
  for (const ExitPoint& pt : rep.points)
    if (!pt.fit_refused) {
      lo = std::min(lo, pt.normalized_delay);
      hi = std::max(hi, pt.normalized_delay);
      sum += pt.normalized_delay;
      ++cnt;
    }
  if (cnt > 0 && sum > 0.0) rep.delay_spread = (hi - lo) / (sum / cnt);
  return rep;
}

// ---------------------------------------------------------------------------

PerpReport phi1perp_experiment(const PerpConfig& cfg) {
  PerpReport rep;
  rep.config = cfg;
  const LinearisationPath a = pitchfork_path(cfg.tstar, cfg.slope);
  const double dt = cfg.dt > 0.0 ? cfg.dt : cfg.eps / 10.0;
  const int steps = static_cast<int>(std::lround(cfg.T / dt));
  const int M = cfg.M ? cfg.M : FourierField::min_grid(cfg.N, 3);
  const double hold = cfg.gamma - 1.0;

  for (double sigma : cfg.sigmas) {
    ConvolutionConfig cc;
    cc.eps = cfg.eps;
    cc.sigma = sigma;
    cc.N = cfg.N;
    cc.M = M;
    cc.a = a;
    cc.init = InitLaw::stationary;
    cc.zero_mode_noise = false;

    std::vector<PitchforkStepTables> tables(steps);
    for (int i = 0; i < steps; ++i)
      tables[i] = PitchforkStepTables::compute(cc, i * dt, dt);

    PerpPoint pt;
    pt.sigma = sigma;
    pt.H0 = cfg.H0_factor * sigma;
    pt.sup_samples.assign(cfg.paths, 0.0);
    std::vector<char> stopped(cfg.paths, 0);
    const double v0 = sigma * sigma / (2.0 * std::abs(a.a(0.0)));

    run_paths(cfg.paths, cfg.seed, cfg.workers, [&](int p, RngStream& rng) {
      PitchforkState st;
      st.psi_perp = ConvolutionState(cc, &rng);
      st.phi1perp = FourierField(cfg.N, M);
      st.phi10 = std::sqrt(v0) * rng.normal();
      double sup = 0.0;
      for (int i = 0; i < steps; ++i) {
        pitchfork_step(st, tables[i], dt, rng);
        if ((i & 1) == 1 || i + 1 == steps)
          sup = std::max(sup, st.phi1perp.holder_norm(hold));
        if (std::abs(st.phi10) > pt.H0) {  // tau_0(H_0) reached: censor
          stopped[p] = 1;
          break;
        }
      }
      pt.sup_samples[p] = sup;
    });

    std::vector<double> surviving;
    for (int p = 0; p < cfg.paths; ++p) {
      if (stopped[p]) ++pt.censored;
      else surviving.push_back(pt.sup_samples[p]);
    }
    pt.median_censored = median(pt.sup_samples);
    pt.median_surviving = surviving.empty() ? 0.0 : median(surviving);
    rep.points.push_back(std::move(pt));
  }

  auto fit_exponent = [&](bool surviving) {
    FitSummary fs;
    std::vector<double> x, y, w;
    for (const PerpPoint& pt : rep.points) {
      const double m = surviving ? pt.median_surviving : pt.median_censored;
      if (m > 0.0) {
        x.push_back(std::log(pt.sigma + pt.H0));
        y.push_back(std::log(m));
        w.push_back(1.0);
      }
    }
    if (x.size() < 3) {
      fs.flag = "empty-fit-range";
      return fs;
    }
    fs.fit = weighted_least_squares(x, y, w);
    fs.valid = true;
    fs.x_lo = *std::min_element(x.begin(), x.end());
    fs.x_hi = *std::max_element(x.begin(), x.end());
    return fs;
  };
  rep.exponent_censored = fit_exponent(false);
  rep.exponent_surviving = fit_exponent(true);
  return rep;
}

// ---------------------------------------------------------------------------

ProbeReport pairing_probe(const ProbeConfig& cfg) {
  ProbeReport rep;
  rep.config = cfg;
  const int M = cfg.M ? cfg.M : FourierField::min_grid(cfg.N, std::max(1, cfg.m));
  ConvolutionConfig cc;
  cc.sigma = cfg.sigma;
  cc.N = cfg.N;
  cc.M = M;
  cc.init = InitLaw::stationary;

  const TestBump eta = default_bump();
  const int nq = static_cast<int>(cfg.q0_list.size());
  std::vector<std::vector<double>> pairings(nq, std::vector<double>(cfg.paths, 0.0));
  std::vector<double> bound_ratio(cfg.paths, 0.0);

  run_paths(cfg.paths, cfg.seed, cfg.workers, [&](int p, RngStream& rng) {
    ConvolutionState st(cc, &rng);
    FourierField f = cfg.m == 1
                         ? st.psi()
                         : wick_power_field(st.psi(), cfg.m, st.total_variance());
    const double besov = f.besov_2inf(cfg.alpha);
    double ratio = 0.0;
    for (int qi = 0; qi < nq; ++qi) {
      const double rho = std::pow(2.0, -cfg.q0_list[qi]);
      const double v = std::abs(pair_with_scaled_test(f, eta, rho, 2.0));
      pairings[qi][p] = v;
      if (besov > 0.0)
        ratio = std::max(
            ratio, v / (std::pow(2.0, std::abs(cfg.alpha) * cfg.q0_list[qi]) * besov));
    }
    bound_ratio[p] = ratio;
  });

  for (int qi = 0; qi < nq; ++qi) {
    ProbeCell cell;
    cell.q0 = cfg.q0_list[qi];
    cell.pairing_samples = std::move(pairings[qi]);
    cell.table = ExceedanceTable::build(cell.pairing_samples,
                                        1.0 / (cfg.sigma * cfg.sigma), 30,
                                        2.0 / cfg.m);
    rep.cells.push_back(std::move(cell));
  }
  rep.pairing_bound_constant = *std::max_element(bound_ratio.begin(), bound_ratio.end());
  return rep;
}

}  // namespace spde
