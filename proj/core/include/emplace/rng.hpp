#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace emplace {

/// Derives a named sub-seed ("split", "batch", "cut", "synth", ...) from a
/// root seed so independent consumers never share a stream.
std::uint64_t sub_seed(std::uint64_t root, std::string_view name);

/// Seeded random source with output fully determined by the seed on every
/// platform. The distributions are written out explicitly because the
/// standard library's are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t index(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t integer(std::int64_t lo, std::int64_t hi);
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  int poisson(double lambda);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a, used for stable content hashes (cluster ids, seeds).
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace emplace
