#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace ckz {

/// FNV-1a over raw bytes; used for encoder/decoder state fingerprints.
class Digest {
 public:
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001B3ull;
    }
  }
  template <typename T>
  void span(std::span<const T> s) { bytes(s.data(), s.size_bytes()); }
  template <typename T>
  void value(const T& v) { bytes(&v, sizeof v); }
  void str(std::string_view s) { bytes(s.data(), s.size()); }

  uint64_t get() const noexcept { return h_; }

 private:
  uint64_t h_ = 0xCBF29CE484222325ull;
};

}  // namespace ckz
