#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace qtrack {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// The 64-bit key is the user seed. The 128-bit counter is split into a
// 64-bit stream id (upper words) and a 64-bit block index (lower words), so
// stream `i` of seed `s` is reproducible regardless of how many other streams
// were consumed or on which thread. Each block yields four 32-bit words.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream = 0);

  static Block generate(Block counter, Key key);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()();

  // Uniform double in the open interval (0, 1), 53 random bits.
  double uniform();

  // Skip ahead `n` blocks.
  void discard_blocks(std::uint64_t n) { block_ += n; used_ = 4; }

  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int used_ = 4;
};

}  // namespace qtrack
