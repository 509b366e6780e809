#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace msplice {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Deterministic random stream keyed by (master_seed, stream_id, lane).
//
// The key is folded through splitmix64 into a xoshiro256** state, so streams
// with distinct keys are decorrelated. All variate transforms are written out
// here rather than taken from <random>, whose distributions are
// implementation-defined; the same key gives the same bits on every platform.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id, std::uint64_t lane = 0) noexcept
      : master_seed_(master_seed), stream_id_(stream_id), lane_(lane) {
    std::uint64_t sm = master_seed;
    std::uint64_t key = detail::splitmix64(sm);
    sm = key ^ stream_id;
    key = detail::splitmix64(sm);
    sm = key ^ (lane * 0xd1b54a32d192ed03ULL);
    for (auto& word : s_) word = detail::splitmix64(sm);
  }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t lane_id() const noexcept { return lane_; }

  /// Independent sibling stream for the same replication (e.g. path vs clock).
  RngStream lane(std::uint64_t k) const noexcept { return RngStream(master_seed_, stream_id_, k); }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Exp(1).
  double exponential() noexcept { return -std::log(uniform()); }

  /// N(0, 1) by the Marsaglia polar method.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  /// Index drawn from unnormalized nonnegative weights by inversion.
  std::size_t categorical(std::span<const double> weights) noexcept {
    double total = 0.0;
    for (double w : weights) total += w;
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (target < acc) return i;
    }
    return last_positive;
  }

 private:
  std::uint64_t master_seed_, stream_id_, lane_;
  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace msplice
