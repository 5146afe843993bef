#include "spde/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "spde/fft.hpp"

namespace spde {

FourierField::FourierField(int N, int M) : N_(N), M_(M) {
  if (N < 0) throw std::invalid_argument("FourierField: cutoff N must be >= 0");
  if (M < 2 * N + 1)
    throw std::invalid_argument("FourierField: grid size does not accommodate the cutoff");
  c_.assign(static_cast<size_t>(side()) * side(), {0.0, 0.0});
}

int FourierField::min_grid(int N, int degree) {
  int need = (degree + 1) * (2 * N + 1);
  int M = 1;
  while (M < need) M <<= 1;
  return M;
}

std::complex<double>& FourierField::coeff(int k1, int k2) {
  return c_[idx(k1, k2)];
}

const std::complex<double>& FourierField::coeff(int k1, int k2) const {
  return c_[idx(k1, k2)];
}

void FourierField::set_pair(ModeIndex k, std::complex<double> v) {
  coeff(k.k1, k.k2) = v;
  if (k.k1 != 0 || k.k2 != 0) coeff(-k.k1, -k.k2) = std::conj(v);
  else coeff(0, 0) = {v.real(), 0.0};
}

void FourierField::enforce_reality() {
  for (int k1 = 0; k1 <= N_; ++k1) {
    const int r = N_ - k1;
    for (int k2 = -r; k2 <= r; ++k2) {
      if (k1 == 0 && k2 < 0) continue;
      std::complex<double> v = coeff(k1, k2);
      if (k1 == 0 && k2 == 0) {
        coeff(0, 0) = {v.real(), 0.0};
      } else {
        std::complex<double> w = std::conj(coeff(-k1, -k2));
        std::complex<double> avg = 0.5 * (v + w);
        coeff(k1, k2) = avg;
        coeff(-k1, -k2) = std::conj(avg);
      }
    }
  }
  mask_to_ball();
}

void FourierField::mask_to_ball() {
  for (int k1 = -N_; k1 <= N_; ++k1)
    for (int k2 = -N_; k2 <= N_; ++k2)
      if (std::abs(k1) + std::abs(k2) > N_) c_[idx(k1, k2)] = {0.0, 0.0};
}

std::vector<double> FourierField::to_grid() const {
  std::vector<double> grid;
  to_grid(grid);
  return grid;
}

void FourierField::to_grid(std::vector<double>& out) const {
  const int M = M_;
  const int nc2 = M / 2 + 1;
  static thread_local std::vector<std::complex<double>> spec;
  spec.assign(static_cast<size_t>(M) * nc2, {0.0, 0.0});
  // Half-spectrum layout: entry (j1, j2), j2 in [0, M/2], carries mode
  // (k1, k2) with k2 = j2 >= 0 and k1 = j1 mapped mod M.
  for (int k1 = -N_; k1 <= N_; ++k1) {
    const int r = N_ - std::abs(k1);
    for (int k2 = 0; k2 <= r; ++k2) {
      const int j1 = (k1 + M) % M;
      spec[static_cast<size_t>(j1) * nc2 + k2] = coeff(k1, k2);
    }
  }
  fft::spectral_to_grid(spec, M, out);
}

FourierField FourierField::from_grid(const std::vector<double>& grid, int M, int N) {
  if (M < 2 * N + 1)
    throw std::invalid_argument("from_grid: grid size does not accommodate the cutoff");
  static thread_local std::vector<std::complex<double>> spec;
  fft::grid_to_spectral(grid, M, spec);
  const int nc2 = M / 2 + 1;
  const double inv = 1.0 / (static_cast<double>(M) * M);
  FourierField out(N, M);
  for (int k1 = -N; k1 <= N; ++k1) {
    const int r = N - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) {
      std::complex<double> v;
      if (k2 >= 0) {
        const int j1 = (k1 + M) % M;
        v = spec[static_cast<size_t>(j1) * nc2 + k2];
      } else {
        const int j1 = (-k1 + M) % M;
        v = std::conj(spec[static_cast<size_t>(j1) * nc2 + (-k2)]);
      }
      out.coeff(k1, k2) = v * inv;
    }
  }
  out.coeff(0, 0) = {out.coeff(0, 0).real(), 0.0};
  return out;
}

FourierField FourierField::annulus_project(int q) const {
  if (q < 0) throw std::invalid_argument("annulus_project: q must be >= 0");
  FourierField out(N_, M_);
  for_each_mode([&](ModeIndex k, const std::complex<double>& v) {
    if (annulus_of(k.l1()) == q) out.coeff(k) = v;
  });
  return out;
}

FourierField FourierField::galerkin_project(int Nprime) const {
  const int Nn = std::min(Nprime, N_);
  FourierField out(Nn, M_);
  for (int k1 = -Nn; k1 <= Nn; ++k1) {
    const int r = Nn - std::abs(k1);
    for (int k2 = -r; k2 <= r; ++k2) out.coeff(k1, k2) = coeff(k1, k2);
  }
  return out;
}

double FourierField::l2_norm() const {
  double s = 0.0;
  for_each_mode([&](ModeIndex, const std::complex<double>& v) { s += std::norm(v); });
  return std::sqrt(s);
}

double FourierField::block_l2(int q) const {
  double s = 0.0;
  for_each_mode([&](ModeIndex k, const std::complex<double>& v) {
    if (annulus_of(k.l1()) == q) s += std::norm(v);
  });
  return std::sqrt(s);
}

double FourierField::besov_norm(double alpha, double p, double r) const {
  const int qmax = max_annulus(N_);
  std::vector<double> weights;
  weights.reserve(qmax + 1);
  for (int q = 0; q <= qmax; ++q) {
    FourierField block = annulus_project(q);
    std::vector<double> g = block.to_grid();
    double lp;
    if (std::isinf(p)) {
      lp = 0.0;
      for (double v : g) lp = std::max(lp, std::abs(v));
    } else {
      double s = 0.0;
      for (double v : g) s += std::pow(std::abs(v), p);
      lp = std::pow(s / g.size(), 1.0 / p);
    }
    if (!std::isfinite(lp)) throw std::runtime_error("besov_norm: non-finite field values");
    weights.push_back(std::pow(2.0, q * alpha) * lp);
  }
  if (std::isinf(r)) return *std::max_element(weights.begin(), weights.end());
  double s = 0.0;
  for (double w : weights) s += std::pow(w, r);
  return std::pow(s, 1.0 / r);
}

double FourierField::besov_2inf(double alpha) const {
  const int qmax = max_annulus(N_);
  double best = 0.0;
  std::vector<double> sq(qmax + 1, 0.0);
  for_each_mode([&](ModeIndex k, const std::complex<double>& v) {
    sq[annulus_of(k.l1())] += std::norm(v);
  });
  for (int q = 0; q <= qmax; ++q)
    best = std::max(best, std::pow(2.0, q * alpha) * std::sqrt(sq[q]));
  return best;
}

double FourierField::holder_norm(double alpha) const {
  const double inf = std::numeric_limits<double>::infinity();
  return besov_norm(alpha, inf, inf);
}

double FourierField::h1_norm() const {
  double s = 0.0;
  for_each_mode([&](ModeIndex k, const std::complex<double>& v) {
    s += (1.0 + k.mu()) * std::norm(v);
  });
  return std::sqrt(s);
}

double FourierField::max_abs_imag_on_grid() const {
  // Reality diagnostic: the c2r transform is exactly real, so check the
  // coefficient symmetry defect instead.
  double worst = 0.0;
  for_each_mode([&](ModeIndex k, const std::complex<double>& v) {
    worst = std::max(worst, std::abs(v - std::conj(coeff(-k.k1, -k.k2))));
  });
  return worst;
}

FourierField& FourierField::operator+=(const FourierField& o) {
  if (o.N_ != N_) throw std::invalid_argument("field size mismatch");
  for (size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

FourierField& FourierField::operator-=(const FourierField& o) {
  if (o.N_ != N_) throw std::invalid_argument("field size mismatch");
  for (size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  return *this;
}

FourierField& FourierField::operator*=(double s) {
  for (auto& v : c_) v *= s;
  return *this;
}

namespace {
constexpr char kMagic[8] = {'S', 'P', 'D', 'E', 'F', 'L', 'D', '1'};
constexpr uint32_t kSchemaVersion = 1;
constexpr uint32_t kEndianTag = 0x01020304;
}  // namespace

void FourierField::write_binary(std::ostream& os) const {
  os.write(kMagic, 8);
  uint32_t hdr[4] = {kEndianTag, kSchemaVersion, static_cast<uint32_t>(N_),
                     static_cast<uint32_t>(M_)};
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  os.write(reinterpret_cast<const char*>(c_.data()),
           static_cast<std::streamsize>(c_.size() * sizeof(std::complex<double>)));
}

FourierField FourierField::read_binary(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("field container: bad magic");
  uint32_t hdr[4];
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!is || hdr[0] != kEndianTag || hdr[1] != kSchemaVersion)
    throw std::runtime_error("field container: unsupported schema or endianness");
  FourierField out(static_cast<int>(hdr[2]), static_cast<int>(hdr[3]));
  is.read(reinterpret_cast<char*>(out.c_.data()),
          static_cast<std::streamsize>(out.c_.size() * sizeof(std::complex<double>)));
  if (!is) throw std::runtime_error("field container: truncated payload");
  return out;
}

void FourierField::write_grid_csv(std::ostream& os) const {
  std::vector<double> g = to_grid();
  os.precision(17);
  for (int i = 0; i < M_; ++i) {
    for (int j = 0; j < M_; ++j) {
      os << g[static_cast<size_t>(i) * M_ + j];
      os << (j + 1 == M_ ? '\n' : ',');
    }
  }
}

TestBump default_bump() {
  // Bump exp(1 - 1/(1 - r^2)) centred in the cell, radius 0.45, scaled to
  // unit C^1 norm (sup|eta| + sup|grad eta| = 1, evaluated numerically once).
  static const double scale = [] {
    double max_g = 0.0;
    for (int i = 1; i < 4096; ++i) {
      double r = i / 4096.0;
      if (r >= 1.0) break;
      double u = 1.0 - r * r;
      double eta = std::exp(1.0 - 1.0 / u);
      double g = eta * 2.0 * r / (u * u) / 0.45;
      max_g = std::max(max_g, g);
    }
    return 1.0 / (1.0 + max_g);
  }();
  return [](double x, double y) {
    const double dx = (x - 0.5) / 0.45, dy = (y - 0.5) / 0.45;
    const double r2 = dx * dx + dy * dy;
    if (r2 >= 1.0) return 0.0;
    return scale * std::exp(1.0 - 1.0 / (1.0 - r2));
  };
}

double pair_with_scaled_test(const FourierField& field, const TestBump& eta,
                             double rho, double p) {
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::invalid_argument("pair_with_scaled_test: rho must be in (0,1]");
  // Support check: eta must vanish near the unit-cell boundary.
  const int K = 256;
  double peak = 0.0, boundary = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      double v = std::abs(eta((i + 0.5) / K, (j + 0.5) / K));
      peak = std::max(peak, v);
      if (i == 0 || j == 0 || i == K - 1 || j == K - 1) boundary = std::max(boundary, v);
    }
  if (peak > 0.0 && boundary > 1e-9 * peak)
    throw std::invalid_argument("pair_with_scaled_test: eta not supported in the unit cell");

  const int M = field.grid_size();
  const double amp = std::isinf(p) ? 1.0 / (rho * rho) : std::pow(rho, -2.0 * (1.0 - 1.0 / p));
  std::vector<double> g = field.to_grid();
  double s = 0.0;
  const int imax = std::min(M, static_cast<int>(std::ceil(rho * M)) + 1);
  for (int i = 0; i < imax; ++i) {
    const double x = static_cast<double>(i) / M;
    if (x >= rho) continue;
    for (int j = 0; j < imax; ++j) {
      const double y = static_cast<double>(j) / M;
      if (y >= rho) continue;
      s += g[static_cast<size_t>(i) * M + j] * eta(x / rho, y / rho);
    }
  }
  return amp * s / (static_cast<double>(M) * M);
}

}  // namespace spde
