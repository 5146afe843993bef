#ifndef SPDE_RNG_HPP
#define SPDE_RNG_HPP

#include <cstdint>
#include <random>

namespace spde {

/// Seeded RNG stream. One stream per Monte Carlo path, addressed by
/// (seed, stream id), so results do not depend on how paths are assigned
/// to workers. Gaussian draws use the polar method rather than
/// std::normal_distribution to keep the byte stream implementation-defined
/// behaviour out of the artifacts.
class RngStream {
 public:
  RngStream(uint64_t seed, uint64_t stream) {
    std::seed_seq seq{seed, stream, uint64_t{0x9e3779b97f4a7c15ull}};
    gen_.seed(seq);
  }

  double uniform() {
    // 53-bit uniform in [0,1)
    return (gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spde

#endif
