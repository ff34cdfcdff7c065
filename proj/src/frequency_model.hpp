#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ckz::probmodel {

/// Context-free adaptive count model.
class FrequencyModel {
 public:
  static constexpr uint64_t kRescaleLimit = uint64_t{1} << 24;

  explicit FrequencyModel(size_t alphabet) : counts_(alphabet, 1), total_(alphabet) {}
  explicit FrequencyModel(std::vector<uint32_t> counts);

  size_t alphabet() const noexcept { return counts_.size(); }
  const std::vector<uint32_t>& counts() const noexcept { return counts_; }

  /// counts / total.
  std::vector<double> predict() const;
  void predict_into(std::span<double> out) const;

  void update(std::span<const uint8_t> symbols);

 private:
  std::vector<uint32_t> counts_;
  uint64_t total_;
};

}  // namespace ckz::probmodel
