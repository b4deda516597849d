#include "fdimon/rng.hpp"

#include <cmath>
#include <numbers>

namespace fdimon {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

Rng Rng::derive(std::uint64_t master, std::uint64_t stream) {
  return Rng(splitmix64(master) ^ splitmix64(stream * 0xA24BAED4963EE407ull + 1));
}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  // 53-bit mantissa, [0, 1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
  // Box-Muller with cached spare; avoids implementation-defined
  // std::normal_distribution so streams are identical on any platform.
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  spare_ = mag * std::sin(ang);
  has_spare_ = true;
  return mag * std::cos(ang);
}

Eigen::VectorXd Rng::gaussian_vector(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = gaussian();
  return v;
}

Eigen::VectorXd Rng::uniform_vector(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd v(lo.size());
  for (int i = 0; i < lo.size(); ++i) v(i) = uniform(lo(i), hi(i));
  return v;
}

}  // namespace fdimon
