#pragma once

// Counter-based Philox4x32-10 generator. A draw is a pure function of
// (seed, path, generation, individual, draw index), so paths can be simulated
// in any order on any worker and still reproduce bit for bit.

#include <array>
#include <cstdint>

namespace gwlab {

namespace detail {

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

}  // namespace detail

/// Stream of uniforms for one (seed, path, generation, individual) cell.
///
/// The generation occupies the low 24 bits of one counter word and the draw
/// block the high 8 bits, so each cell yields up to 512 uniforms.
class CounterRng {
 public:
  static constexpr std::uint32_t kImmigrant = 0xFFFFFFFFu;

  CounterRng(std::uint64_t seed, std::uint64_t path, std::uint32_t generation,
             std::uint32_t individual)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        path_(path),
        generation_(generation & 0x00FFFFFFu),
        individual_(individual) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    if (used_ == 2) refill();
    const std::uint64_t hi = buffer_[2 * used_];
    const std::uint64_t lo = buffer_[2 * used_ + 1];
    ++used_;
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
  }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr{individual_, generation_ | (block_ << 24),
                                           static_cast<std::uint32_t>(path_),
                                           static_cast<std::uint32_t>(path_ >> 32)};
    buffer_ = detail::philox4x32_10(ctr, key_);
    block_ = (block_ + 1) & 0xFFu;
    used_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t path_;
  std::uint32_t generation_;
  std::uint32_t individual_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 2;
};

}  // namespace gwlab
