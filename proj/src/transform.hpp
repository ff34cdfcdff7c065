#pragma once

// Residual computation, moment-driven pruning, 1-D k-means quantization and
// symbol packing: the lossy stage that turns a checkpoint into symbol planes.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tensorstore.hpp"

namespace ckz::transform {

inline constexpr double kSecondMomentEpsilon = 1e-12;
inline constexpr int kMaxLloydIterations = 50;
inline constexpr int kKMeansRestarts = 1;
/// Largest k * n for which the exact 1-D solution is also tried.
inline constexpr size_t kMaxExactKMeansCells = size_t{1} << 22;

struct ResidualCheckpoint {
  uint64_t step = 0;
  int64_t ref_step = -1;  // -1 marks the zero reference
  /// weight = W_t - W_ref, moments copied from the current checkpoint.
  std::map<std::string, TensorTriple> planes;
};

/// Residual of `current` against `reference` (nullptr = zero checkpoint).
/// `step_distance` must equal current.step - reference->step.
ResidualCheckpoint residual(const Checkpoint& current, const Checkpoint* reference,
                            uint64_t step_distance);

struct PruneMask {
  std::vector<uint8_t> bits;
  size_t kept_count = 0;

  static PruneMask from_bits(std::vector<uint8_t> bits);
  static PruneMask all(size_t n, bool value);
  size_t size() const noexcept { return bits.size(); }
};

/// Median of |x| over the whole tensor (mean of the two middle values for
/// even lengths).
double median_abs(std::span<const float> values);

/// Keeps residual i iff |res(i)| > alpha * median(|w_full|) / sqrt(m(i) + eps).
PruneMask prune_weights(std::span<const float> residual_w, std::span<const float> second_moment,
                        std::span<const float> w_full, double alpha);

/// Keeps moment i iff |v(i)| > beta * mean(|v|) and the weight mask keeps i.
PruneMask prune_momentum(std::span<const float> first_moment, double beta,
                         const PruneMask& weight_mask);

struct QuantizedPlane {
  int bits = 4;
  /// 0 = pruned, k >= 1 -> centers[k-1].
  std::vector<uint8_t> symbols;
  /// Exactly 2^bits - 1 entries; used centers strictly ascending, unused tail 0.0.
  std::vector<float> centers;
  size_t used_centers = 0;

  static size_t center_slots(int bits) { return (size_t{1} << bits) - 1; }
};

struct KMeansRun {
  std::vector<double> inertia;  // after every assignment step, init first
};

struct KMeansResult {
  std::vector<float> centers;     // sorted ascending, deduplicated
  std::vector<uint32_t> assignment;  // index into centers, same order as input
  double inertia = 0.0;
  std::vector<KMeansRun> runs;
};

/// 1-D k-means: k-means++ seeding then Lloyd iterations (at most
/// kMaxLloydIterations, or until the assignment stops changing), repeated
/// `restarts` times. One more Lloyd run starts from the exact optimal
/// contiguous partition (skipped above kMaxExactKMeansCells); the lowest final
/// inertia wins.
KMeansResult kmeans_1d(std::span<const double> values, size_t k, uint64_t seed,
                       int restarts = kKMeansRestarts);

QuantizedPlane kmeans_quantize(std::span<const float> values, const PruneMask& keep, int bits,
                               uint64_t seed);

/// Index of the nearest center, ties to the lower index. centers ascending.
size_t nearest_center(std::span<const float> centers, double x);

std::vector<float> dequantize(const QuantizedPlane& q, const Dims& dims);

std::vector<uint8_t> pack_symbols(std::span<const uint8_t> symbols, int bits);
std::vector<uint8_t> unpack_symbols(std::span<const uint8_t> packed, int bits, size_t count);

struct DequantizedTriple {
  Dims dims;
  std::vector<float> weight_residual;
  std::vector<float> first_moment;
  std::vector<float> second_moment;
};

/// W = W_ref + residual; moments are absolute.
Checkpoint reconstruct(const Checkpoint* reference, uint64_t step,
                       const std::map<std::string, DequantizedTriple>& planes);

}  // namespace ckz::transform
