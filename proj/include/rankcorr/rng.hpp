#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "rankcorr/errors.hpp"

namespace rankcorr {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-identical across platforms and standard-library versions.
class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  // Independent stream derived from (seed, indices...). Used to give each
  // simulation replicate / bootstrap resample its own generator so results
  // do not depend on scheduling order.
  static Rng stream(std::uint64_t seed, std::uint64_t i0, std::uint64_t i1 = 0) {
    std::uint64_t sm = seed;
    std::uint64_t mix = splitmix64(sm) ^ (0x9e3779b97f4a7c15ull * (i0 + 1));
    mix = mix * 0xd1342543de82ef95ull + (i1 + 1);
    return Rng(mix);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0,1); never returns an exact 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer on [lo, hi] inclusive.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    return lo + next_u64() % span;
  }

  // Box-Muller pair of independent standard normals.
  void normal_pair(double& z0, double& z1) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    z0 = r * std::cos(theta);
    z1 = r * std::sin(theta);
  }

  double normal() {
    double z0, z1;
    normal_pair(z0, z1);
    return z0;
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

// Correlated bivariate normal draw via the 2x2 Cholesky factor.
struct BivariateNormal {
  double mean_x = 0.0, mean_y = 0.0;
  double sd_x = 1.0, sd_y = 1.0;
  double rho = 0.0;

  void draw(Rng& rng, double& x, double& y) const {
    if (!(rho > -1.0 && rho < 1.0) && rho != 1.0 && rho != -1.0)
      throw numeric_error("bivariate normal: |rho| > 1");
    double z0, z1;
    rng.normal_pair(z0, z1);
    x = mean_x + sd_x * z0;
    y = mean_y + sd_y * (rho * z0 + std::sqrt(1.0 - rho * rho) * z1);
  }
};

}  // namespace rankcorr
