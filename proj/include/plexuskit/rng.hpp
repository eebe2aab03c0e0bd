#pragma once

// Counter-based PRNG (Philox4x32-10). Every random choice in the project goes
// through this generator so that preprocessing and initialization are
// reproducible bit-for-bit across platforms. The name recorded in shard
// manifests is "philox4x32-10".

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "plexuskit/common.hpp"

namespace plexuskit {

class Philox {
public:
  // `seed` selects the key, `stream` partitions independent substreams of the
  // same seed (feature init, labels, permutations, ... each get their own).
  explicit Philox(u64 seed, u64 stream = 0)
      : key_{static_cast<u32>(seed), static_cast<u32>(seed >> 32)},
        counter_{0, 0, static_cast<u32>(stream), static_cast<u32>(stream >> 32)} {}

  u32 next_u32() {
    if (pos_ == 4) {
      block_ = philox_block(counter_, key_);
      advance_counter();
      pos_ = 0;
    }
    return block_[pos_++];
  }

  u64 next_u64() {
    u64 lo = next_u32();
    u64 hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased integer in [0, bound) by rejection.
  u64 randint(u64 bound) {
    check(bound > 0, "randint: bound must be positive");
    u64 threshold = (~bound + 1) % bound;  // 2^64 mod bound
    for (;;) {
      u64 r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<u32> permutation(u64 n) {
    std::vector<u32> p(n);
    std::iota(p.begin(), p.end(), 0u);
    for (u64 i = n; i > 1; --i) {
      u64 j = randint(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  static constexpr const char* kName = "philox4x32-10";

private:
  using Block = std::array<u32, 4>;
  using Key = std::array<u32, 2>;

  static void mulhilo(u32 a, u32 b, u32& hi, u32& lo) {
    u64 prod = static_cast<u64>(a) * b;
    hi = static_cast<u32>(prod >> 32);
    lo = static_cast<u32>(prod);
  }

  static Block philox_block(Block ctr, Key key) {
    constexpr u32 kMulA = 0xD2511F53u, kMulB = 0xCD9E8D57u;
    constexpr u32 kWeylA = 0x9E3779B9u, kWeylB = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      u32 hi0, lo0, hi1, lo1;
      mulhilo(kMulA, ctr[0], hi0, lo0);
      mulhilo(kMulB, ctr[2], hi1, lo1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    return ctr;
  }

  void advance_counter() {
    for (int i = 0; i < 4; ++i) {
      if (++counter_[i] != 0) break;
    }
  }

  Key key_;
  Block counter_;
  Block block_{};
  int pos_ = 4;
};

}  // namespace plexuskit
