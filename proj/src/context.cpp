#include "context.hpp"

#include <string>

#include "error.hpp"

namespace ckz::probmodel {

PlaneShape plane_shape(const Dims& dims) noexcept {
  if (dims.empty()) return {1, 1};
  if (dims.size() == 1) return {1, dims[0]};
  size_t rest = 1;
  for (size_t i = 1; i < dims.size(); ++i) rest *= dims[i];
  return {dims[0], rest};
}

Context extract_context(const SymbolPlaneView& plane, size_t row, size_t col) {
  const PlaneShape& s = plane.shape;
  if (row >= s.rows || col >= s.cols) {
    throw Error(ErrorCode::PositionOutOfPlane,
                "(" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                    std::to_string(s.rows) + "x" + std::to_string(s.cols));
  }
  Context ctx{};
  if (plane.symbols.empty()) return ctx;
  size_t k = 0;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc, ++k) {
      const auto r = static_cast<std::ptrdiff_t>(row) + dr;
      const auto c = static_cast<std::ptrdiff_t>(col) + dc;
      if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(s.rows) || c >= static_cast<std::ptrdiff_t>(s.cols)) continue;
      ctx[k] = plane.symbols[static_cast<size_t>(r) * s.cols + static_cast<size_t>(c)];
    }
  }
  return ctx;
}

}  // namespace ckz::probmodel
