#ifndef IPMTMLE_RNG_HPP
#define IPMTMLE_RNG_HPP

#include <cstdint>
#include <vector>

#include "ipmtmle/common.hpp"

namespace ipmtmle {

// Deterministic generator (splitmix64 core). All sampling routines are
// inversion-based so a fixed seed yields the same stream on every platform;
// no rejection steps, no library distributions.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Independent stream for replication `index` of a seeded experiment.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(hash_mix(seed, index));
  }

  std::uint64_t next_u64();
  double uniform();      // [0, 1)
  double uniform_pos();  // (0, 1)
  bool bernoulli(double p);
  int poisson(double mu);                       // inversion, mu modest
  double normal(double mean, double sd);        // Box-Muller, two uniforms per call
  double beta(double a, double b);              // inverse-CDF
  int categorical(const std::vector<double>& probs);  // 0-based index

private:
  std::uint64_t state_;
};

} // namespace ipmtmle

#endif
