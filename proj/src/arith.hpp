#pragma once

// Integer arithmetic coder in the Witten-Neal-Cleary style: 32-bit interval
// registers, E1/E2/E3 renormalization, bits emitted most-significant first.
// Adaptivity comes from the caller supplying a fresh table per symbol.

#include <cstdint>
#include <span>
#include <vector>

namespace ckz::arith {

inline constexpr uint32_t kDefaultTotalLog2 = 16;
inline constexpr uint32_t kMaxTotalLog2 = 16;

/// cum[0] = 0, strictly increasing, cum.back() = total.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  /// Validates the invariants; throws InvalidArgument otherwise.
  explicit FrequencyTable(std::vector<uint32_t> cum);

  size_t symbols() const noexcept { return cum_.size() - 1; }
  uint32_t total() const noexcept { return cum_.back(); }
  uint32_t low(size_t s) const noexcept { return cum_[s]; }
  uint32_t high(size_t s) const noexcept { return cum_[s + 1]; }
  uint32_t frequency(size_t s) const noexcept { return cum_[s + 1] - cum_[s]; }
  const std::vector<uint32_t>& cumulative() const noexcept { return cum_; }

  /// Symbol whose span [cum[s], cum[s+1]) contains `count`.
  size_t find(uint32_t count) const noexcept;

 private:
  std::vector<uint32_t> cum_;
};

/// Largest-remainder rounding of a probability vector onto integer
/// frequencies that sum to `total`, every symbol receiving at least 1.
FrequencyTable quantize_probabilities(std::span<const double> p, uint32_t total = 1u << kDefaultTotalLog2);

class Encoder {
 public:
  void encode(const FrequencyTable& table, size_t symbol);
  /// Flushes the final interval and returns the byte-aligned stream.
  std::vector<uint8_t> finish();

  uint64_t bits_written() const noexcept { return bit_count_; }

 private:
  void emit(unsigned bit);
  void emit_with_pending(unsigned bit);

  uint32_t low_ = 0;
  uint32_t high_ = 0xFFFFFFFFu;
  uint64_t pending_ = 0;
  std::vector<uint8_t> out_;
  uint8_t current_ = 0;
  int filled_ = 0;
  uint64_t bit_count_ = 0;
  bool finished_ = false;
};

class Decoder {
 public:
  explicit Decoder(std::span<const uint8_t> bytes);

  /// Throws BitstreamExhausted when the stream ends before the symbol can
  /// be resolved.
  size_t decode(const FrequencyTable& table);

 private:
  unsigned next_bit();

  std::span<const uint8_t> bytes_;
  uint64_t bit_pos_ = 0;
  uint32_t low_ = 0;
  uint32_t high_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

}  // namespace ckz::arith
