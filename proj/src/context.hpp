#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "tensorstore.hpp"

namespace ckz::probmodel {

inline constexpr size_t kContextLength = 9;

/// Row-major 3x3 window of the reference symbol plane around the current
/// position; cells outside the plane read as symbol 0.
using Context = std::array<uint8_t, kContextLength>;

struct PlaneShape {
  size_t rows = 1;
  size_t cols = 1;
  size_t size() const noexcept { return rows * cols; }
};

/// Rank 2 as-is, rank 1 as a single row, rank >= 3 as (dims[0], rest).
PlaneShape plane_shape(const Dims& dims) noexcept;

struct SymbolPlaneView {
  std::span<const uint8_t> symbols;  // empty: the all-zero plane
  PlaneShape shape;
};

/// Throws PositionOutOfPlane when (row, col) lies outside the plane.
Context extract_context(const SymbolPlaneView& plane, size_t row, size_t col);

inline Context extract_context(const SymbolPlaneView& plane, size_t index) {
  return extract_context(plane, index / plane.shape.cols, index % plane.shape.cols);
}

}  // namespace ckz::probmodel
