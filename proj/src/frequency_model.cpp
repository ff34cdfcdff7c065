#include "frequency_model.hpp"

#include <algorithm>
#include <numeric>

#include "error.hpp"

namespace ckz::probmodel {

FrequencyModel::FrequencyModel(std::vector<uint32_t> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) throw Error(ErrorCode::InvalidArgument, "empty alphabet");
  for (uint32_t c : counts_) {
    if (c == 0) throw Error(ErrorCode::InvalidArgument, "counts must be >= 1");
  }
  total_ = std::accumulate(counts_.begin(), counts_.end(), uint64_t{0});
}

std::vector<double> FrequencyModel::predict() const {
  std::vector<double> p(counts_.size());
  predict_into(p);
  return p;
}

void FrequencyModel::predict_into(std::span<double> out) const {
  const double total = static_cast<double>(total_);
  for (size_t k = 0; k < counts_.size(); ++k) out[k] = counts_[k] / total;
}

void FrequencyModel::update(std::span<const uint8_t> symbols) {
  for (uint8_t s : symbols) {
    if (s >= counts_.size()) throw Error(ErrorCode::SymbolOutOfRange, "symbol outside alphabet");
    ++counts_[s];
    if (++total_ > kRescaleLimit) {
      total_ = 0;
      for (auto& c : counts_) {
        c = std::max<uint32_t>(1, c / 2);
        total_ += c;
      }
    }
  }
}

}  // namespace ckz::probmodel
