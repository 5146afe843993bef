#include "spde/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace spde::fft {
namespace {

// Plan creation in FFTW is not thread safe; execution on distinct buffers is.
std::mutex planner_mutex;

struct Workspace {
  int M = 0;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan c2r = nullptr;
  fftw_plan r2c = nullptr;

  explicit Workspace(int m) : M(m) {
    std::lock_guard<std::mutex> lock(planner_mutex);
    real = fftw_alloc_real(static_cast<size_t>(M) * M);
    cplx = fftw_alloc_complex(static_cast<size_t>(M) * (M / 2 + 1));
    if (!real || !cplx) throw std::bad_alloc();
    c2r = fftw_plan_dft_c2r_2d(M, M, cplx, real, FFTW_ESTIMATE);
    r2c = fftw_plan_dft_r2c_2d(M, M, real, cplx, FFTW_ESTIMATE);
  }
  ~Workspace() {
    std::lock_guard<std::mutex> lock(planner_mutex);
    if (c2r) fftw_destroy_plan(c2r);
    if (r2c) fftw_destroy_plan(r2c);
    fftw_free(real);
    fftw_free(cplx);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
};

Workspace& workspace_for(int M) {
  thread_local std::map<int, std::unique_ptr<Workspace>> cache;
  auto& slot = cache[M];
  if (!slot) slot = std::make_unique<Workspace>(M);
  return *slot;
}

}  // namespace

void spectral_to_grid(const std::vector<std::complex<double>>& spec, int M,
                      std::vector<double>& grid) {
  const size_t nc = static_cast<size_t>(M) * (M / 2 + 1);
  if (spec.size() != nc) throw std::invalid_argument("fft: bad spectrum size");
  Workspace& ws = workspace_for(M);
  for (size_t i = 0; i < nc; ++i) {
    ws.cplx[i][0] = spec[i].real();
    ws.cplx[i][1] = spec[i].imag();
  }
  fftw_execute(ws.c2r);
  grid.assign(ws.real, ws.real + static_cast<size_t>(M) * M);
}

void grid_to_spectral(const std::vector<double>& grid, int M,
                      std::vector<std::complex<double>>& spec) {
  const size_t ng = static_cast<size_t>(M) * M;
  if (grid.size() != ng) throw std::invalid_argument("fft: bad grid size");
  Workspace& ws = workspace_for(M);
  for (size_t i = 0; i < ng; ++i) ws.real[i] = grid[i];
  fftw_execute(ws.r2c);
  const size_t nc = static_cast<size_t>(M) * (M / 2 + 1);
  spec.resize(nc);
  for (size_t i = 0; i < nc; ++i) spec[i] = {ws.cplx[i][0], ws.cplx[i][1]};
}

}  // namespace spde::fft
