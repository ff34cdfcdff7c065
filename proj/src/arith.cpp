#include "arith.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace ckz::arith {

namespace {

constexpr uint32_t kHalf = 0x80000000u;
constexpr uint32_t kQuarter = 0x40000000u;
constexpr uint32_t kThreeQuarters = 0xC0000000u;

// Bits the decoder may read past the encoder's flush: its 32-bit window
// runs up to 30 bits ahead of the last emitted bit.
constexpr uint64_t kReadAheadBits = 32;

}  // namespace

FrequencyTable::FrequencyTable(std::vector<uint32_t> cum) : cum_(std::move(cum)) {
  if (cum_.size() < 2 || cum_.front() != 0) throw Error(ErrorCode::InvalidArgument, "table must start at 0");
  for (size_t i = 1; i < cum_.size(); ++i) {
    if (cum_[i] <= cum_[i - 1]) throw Error(ErrorCode::InvalidArgument, "zero-frequency symbol in table");
  }
  if (cum_.back() > (1u << kMaxTotalLog2)) throw Error(ErrorCode::InvalidArgument, "table total above 2^16");
}

size_t FrequencyTable::find(uint32_t count) const noexcept {
  auto it = std::upper_bound(cum_.begin() + 1, cum_.end(), count);
  return static_cast<size_t>(it - cum_.begin()) - 1;
}

FrequencyTable quantize_probabilities(std::span<const double> p, uint32_t total) {
  const size_t n = p.size();
  if (n == 0 || total < n) throw Error(ErrorCode::InvalidArgument, "total smaller than alphabet");
  const double scale = static_cast<double>(total - n);
  std::vector<uint32_t> freq(n);
  std::vector<double> frac(n);
  int64_t assigned = 0;
  for (size_t k = 0; k < n; ++k) {
    const double x = std::clamp(p[k], 0.0, 1.0) * scale;
    const double f = std::floor(x);
    freq[k] = static_cast<uint32_t>(f) + 1;
    frac[k] = x - f;
    assigned += freq[k];
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return frac[a] > frac[b]; });
  int64_t remaining = static_cast<int64_t>(total) - assigned;
  for (size_t i = 0; remaining > 0; i = (i + 1) % n, --remaining) ++freq[order[i]];
  // Probabilities summing slightly above one: take units back from the
  // smallest remainders, never dropping a symbol below 1.
  for (size_t i = n; remaining < 0;) {
    i = (i == 0 ? n : i) - 1;
    if (freq[order[i]] > 1) {
      --freq[order[i]];
      ++remaining;
    }
  }
  std::vector<uint32_t> cum(n + 1, 0);
  for (size_t k = 0; k < n; ++k) cum[k + 1] = cum[k] + freq[k];
  return FrequencyTable(std::move(cum));
}

void Encoder::emit(unsigned bit) {
  current_ = static_cast<uint8_t>((current_ << 1) | bit);
  ++bit_count_;
  if (++filled_ == 8) {
    out_.push_back(current_);
    current_ = 0;
    filled_ = 0;
  }
}

void Encoder::emit_with_pending(unsigned bit) {
  emit(bit);
  for (; pending_ > 0; --pending_) emit(bit ^ 1u);
}

void Encoder::encode(const FrequencyTable& table, size_t symbol) {
  if (finished_) throw Error(ErrorCode::Internal, "encode after finish");
  if (symbol >= table.symbols()) throw Error(ErrorCode::SymbolOutOfRange, "symbol outside table");
  const uint64_t range = static_cast<uint64_t>(high_) - low_ + 1;
  const uint64_t total = table.total();
  high_ = static_cast<uint32_t>(low_ + range * table.high(symbol) / total - 1);
  low_ = static_cast<uint32_t>(low_ + range * table.low(symbol) / total);
  for (;;) {
    if (high_ < kHalf) {
      emit_with_pending(0);
    } else if (low_ >= kHalf) {
      emit_with_pending(1);
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      ++pending_;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1u;
  }
}

std::vector<uint8_t> Encoder::finish() {
  if (!finished_) {
    ++pending_;
    emit_with_pending(low_ < kQuarter ? 0 : 1);
    while (filled_ != 0) emit(0);
    finished_ = true;
  }
  return out_;
}

Decoder::Decoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 32; ++i) code_ = (code_ << 1) | next_bit();
}

unsigned Decoder::next_bit() {
  const uint64_t pos = bit_pos_++;
  const uint64_t available = static_cast<uint64_t>(bytes_.size()) * 8;
  if (pos >= available) {
    if (pos >= available + kReadAheadBits) throw Error(ErrorCode::BitstreamExhausted, "read past end of payload");
    return 0;
  }
  return (bytes_[pos >> 3] >> (7 - (pos & 7))) & 1u;
}

size_t Decoder::decode(const FrequencyTable& table) {
  const uint64_t range = static_cast<uint64_t>(high_) - low_ + 1;
  const uint64_t total = table.total();
  const uint64_t count = ((static_cast<uint64_t>(code_) - low_ + 1) * total - 1) / range;
  if (count >= total) throw Error(ErrorCode::BitstreamExhausted, "code value outside interval");
  const size_t symbol = table.find(static_cast<uint32_t>(count));
  high_ = static_cast<uint32_t>(low_ + range * table.high(symbol) / total - 1);
  low_ = static_cast<uint32_t>(low_ + range * table.low(symbol) / total);
  for (;;) {
    if (high_ < kHalf) {
      // nothing to subtract
    } else if (low_ >= kHalf) {
      low_ -= kHalf;
      high_ -= kHalf;
      code_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
      low_ -= kQuarter;
      high_ -= kQuarter;
      code_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1u;
    code_ = (code_ << 1) | next_bit();
  }
  return symbol;
}

}  // namespace ckz::arith
