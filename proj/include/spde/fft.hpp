#ifndef SPDE_FFT_HPP
#define SPDE_FFT_HPP

#include <complex>
#include <vector>

namespace spde::fft {

// Unnormalised backward transform: grid[n] = sum_j spec[j] e^{+2 pi i j.n/M}.
// spec is the half-spectrum in FFTW r2c layout, size M*(M/2+1).
void spectral_to_grid(const std::vector<std::complex<double>>& spec, int M,
                      std::vector<double>& grid);

// Forward transform; caller divides by M^2 to get Fourier coefficients.
void grid_to_spectral(const std::vector<double>& grid, int M,
                      std::vector<std::complex<double>>& spec);

}  // namespace spde::fft

#endif
