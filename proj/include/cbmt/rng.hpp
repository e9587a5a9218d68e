#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace cbmt {

// Deterministic RNG. mt19937_64 is bit-exact across platforms by the
// standard; the value->distribution mappings below are pinned here so the
// generated streams never depend on libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive, rejection-free modulo bias is
  // negligible for the small ranges used here but we reject anyway.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one value per call (the spare is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over arbitrary bytes, used to derive per-sample/per-epoch seeds.
inline uint64_t fnv1a(const void* bytes, size_t len, uint64_t hash = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < len; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline uint64_t fnv1a(const std::string& s, uint64_t hash = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), hash);
}

// seed = hash(global_seed, sample_id, epoch); keeps augmentation streams
// independent per sample and per epoch while staying reproducible.
inline uint64_t derive_seed(uint64_t global_seed, const std::string& sample_id, int64_t epoch) {
  uint64_t h = fnv1a(&global_seed, sizeof(global_seed));
  h = fnv1a(sample_id.data(), sample_id.size(), h);
  h = fnv1a(&epoch, sizeof(epoch), h);
  return h;
}

}  // namespace cbmt
