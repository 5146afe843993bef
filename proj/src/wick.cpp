#include "spde/wick.hpp"

#include "spde/stats.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>

namespace spde {

double hermite(int m, double x, double C) {
  if (m < 0) throw std::invalid_argument("hermite: degree must be >= 0");
  if (m == 0) return 1.0;
  double hm1 = 1.0, h = x;
  for (int j = 1; j < m; ++j) {
    const double hn = x * h - static_cast<double>(j) * C * hm1;
    hm1 = h;
    h = hn;
  }
  return h;
}

HermiteCoeffs hermite_coeffs(int n) {
  if (n < 0) throw std::invalid_argument("hermite_coeffs: degree must be >= 0");
  if (n > 20) throw std::length_error("hermite_coeffs: exact integers supported up to n = 20");
  HermiteCoeffs hc;
  const int half = n / 2;
  hc.a.resize(half + 1);
  hc.b.resize(half + 1);
  for (int l = 0; l <= half; ++l) {
    // n!/(2^l l! (n-2l)!) = binom(n, 2l) * (2l-1)!!
    long long v = 1;
    for (int i = 0; i < 2 * l; ++i) v = v * (n - i) / (i + 1);  // binom(n, 2l)
    for (int i = 2 * l - 1; i >= 3; i -= 2) v *= i;             // (2l-1)!!
    hc.b[l] = v;
    hc.a[l] = (l % 2) ? -v : v;
  }
  return hc;
}

double RenormConstant::v(ModeIndex k) const {
  return sigma * sigma / (2.0 * (k.mu() + 1.0));
}

RenormConstant renorm_constant(int N, double sigma) {
  if (N < 0 || sigma < 0.0) throw std::invalid_argument("renorm_constant: bad parameters");
  RenormConstant rc;
  rc.N = N;
  rc.sigma = sigma;
  rc.per_annulus.assign(max_annulus(N) + 1, 0.0);
  const bool table = N <= 256;
  const int side = 2 * N + 1;
  if (table) rc.per_mode.assign(static_cast<size_t>(side) * side, 0.0);
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const ModeIndex k{k1, k2};
      const double vk = rc.v(k);
      rc.value += vk;
      rc.per_annulus[annulus_of(k.l1())] += vk;
      if (table) rc.per_mode[static_cast<size_t>(k1 + N) * side + (k2 + N)] = vk;
    }
  }
  return rc;
}

void RenormConstant::write_mode_csv(std::ostream& os) const {
  os.precision(17);
  os << "k1,k2,mu_k,v_k\n";
  const int side = 2 * N + 1;
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      const ModeIndex k{k1, k2};
      const double vk = per_mode.empty()
                            ? v(k)
                            : per_mode[static_cast<size_t>(k1 + N) * side + (k2 + N)];
      os << k1 << ',' << k2 << ',' << k.mu() << ',' << vk << '\n';
    }
  }
}

void RenormConstant::write_annulus_csv(std::ostream& os) const {
  os.precision(17);
  os << "q,c_q\n";
  for (size_t q = 0; q < per_annulus.size(); ++q)
    os << q << ',' << per_annulus[q] << '\n';
}

FourierField wick_power_field(const FourierField& field, int m, double C) {
  const int N = field.cutoff();
  if (field.grid_size() < (m + 1) * (2 * N + 1))
    throw std::runtime_error("wick_power_field: grid too small for degree-" +
                             std::to_string(m) + " products");
  std::vector<double> g = field.to_grid();
  for (double& v : g) v = hermite(m, v, C);
  return FourierField::from_grid(g, field.grid_size(), N);
}

double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double v = 1.0;
  for (int i = 0; i < k; ++i) v = v * (n - i) / (i + 1);
  return v;
}

double wick_binomial(int n, double x, double y, double C1, double C2) {
  double s = 0.0;
  for (int m = 0; m <= n; ++m)
    s += binomial_coefficient(n, m) * hermite(m, x, C1) * hermite(n - m, y, C2);
  return s;
}

namespace {

void enumerate_compositions(int m, int parts, std::vector<int>& cur,
                            const std::function<void(const std::vector<int>&)>& emit,
                            int pos = 0, int left = -1) {
  if (left < 0) left = m;
  if (pos == parts - 1) {
    cur[pos] = left;
    emit(cur);
    return;
  }
  for (int v = 0; v <= left; ++v) {
    cur[pos] = v;
    enumerate_compositions(m, parts, cur, emit, pos + 1, left - v);
  }
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

FourierField wick_multinomial_blocks(const FourierField& field, int m,
                                     const std::vector<double>& c_q,
                                     double expected_total) {
  const int N = field.cutoff();
  const int qmax = max_annulus(N);
  if (static_cast<int>(c_q.size()) < qmax + 1)
    throw std::invalid_argument("wick_multinomial_blocks: variance table too short");
  double total = 0.0;
  for (int q = 0; q <= qmax; ++q) total += c_q[q];
  if (!std::isnan(expected_total) && std::abs(total - expected_total) > 1e-12)
    throw std::invalid_argument("wick_multinomial_blocks: variance table inconsistent with C");
  if (field.grid_size() < (m + 1) * (2 * N + 1))
    throw std::runtime_error("wick_multinomial_blocks: grid too small");

  std::vector<std::vector<double>> block_grids(qmax + 1);
  for (int q = 0; q <= qmax; ++q) block_grids[q] = field.annulus_project(q).to_grid();

  const size_t ng = block_grids[0].size();
  std::vector<double> acc(ng, 0.0);
  const double mfact = factorial(m);
  std::vector<int> hbn(qmax + 1);
  enumerate_compositions(m, qmax + 1, hbn, [&](const std::vector<int>& n_q) {
    double coef = mfact;
    for (int q = 0; q <= qmax; ++q) coef /= factorial(n_q[q]);
    for (size_t i = 0; i < ng; ++i) {
      double prod = coef;
      for (int q = 0; q <= qmax; ++q)
        if (n_q[q] > 0) prod *= hermite(n_q[q], block_grids[q][i], c_q[q]);
      acc[i] += prod;
    }
  });
  return FourierField::from_grid(acc, field.grid_size(), N);
}

McEstimate wick_moment_mc(int n, int m, double corr, double C1, double C2,
                          long samples, RngStream& rng) {
  if (corr * corr > C1 * C2 + 1e-15)
    throw std::invalid_argument("wick_moment_mc: |corr| exceeds sqrt(C1*C2)");
  if (samples < 10000)
    throw std::invalid_argument("wick_moment_mc: need at least 1e4 samples");
  const double sx = std::sqrt(C1);
  const double b = sx > 0.0 ? corr / sx : 0.0;
  const double res = std::sqrt(std::max(0.0, C2 - b * b));
  RunningStat st;
  for (long i = 0; i < samples; ++i) {
    const double xi1 = rng.normal(), xi2 = rng.normal();
    const double x = sx * xi1;
    const double y = b * xi1 + res * xi2;
    st.add(hermite(n, x, C1) * hermite(m, y, C2));
  }
  return {st.mean(), st.stderr_mean()};
}

}  // namespace spde
