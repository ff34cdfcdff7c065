#include "transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "error.hpp"
#include "prng.hpp"

namespace ckz::transform {

namespace {

void require_finite(std::span<const float> xs, const char* what) {
  for (float x : xs) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteInput, std::string(what) + " contains non-finite values");
  }
}

void require_same_layout(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor count differs from reference");
  }
  for (const auto& [name, t] : a.tensors) {
    auto it = b.tensors.find(name);
    if (it == b.tensors.end()) throw Error(ErrorCode::ShapeMismatch, "reference lacks tensor " + name);
    if (it->second.dims() != t.dims()) throw Error(ErrorCode::ShapeMismatch, "dims differ for " + name);
  }
}

// Nearest-center sweep over ascending values and ascending centers.
// Returns the inertia of the resulting assignment.
double assign_sorted(std::span<const double> xs, std::span<const double> centers,
                     std::vector<uint32_t>& assignment) {
  assignment.resize(xs.size());
  size_t j = 0;
  double inertia = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i];
    while (j + 1 < centers.size() && std::abs(x - centers[j + 1]) < std::abs(x - centers[j])) ++j;
    assignment[i] = static_cast<uint32_t>(j);
    const double d = x - centers[j];
    inertia += d * d;
  }
  return inertia;
}

std::vector<double> kmeanspp_init(std::span<const double> xs, size_t k, Xoshiro256& rng) {
  std::vector<double> centers;
  centers.reserve(k);
  centers.push_back(xs[rng.below(xs.size())]);
  std::vector<double> d2(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) d2[i] = (xs[i] - centers[0]) * (xs[i] - centers[0]);
  while (centers.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) break;
    const double u = rng.uniform() * total;
    double acc = 0.0;
    size_t pick = xs.size();
    for (size_t i = 0; i < xs.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (u < acc) break;
    }
    const double c = xs[pick];
    centers.push_back(c);
    for (size_t i = 0; i < xs.size(); ++i) d2[i] = std::min(d2[i], (xs[i] - c) * (xs[i] - c));
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

// Mean update; empty clusters are reseeded at the value farthest from its
// current center.
void update_centers(std::span<const double> xs, const std::vector<uint32_t>& assignment,
                    std::vector<double>& centers) {
  const size_t k = centers.size();
  std::vector<double> sum(k, 0.0);
  std::vector<size_t> count(k, 0);
  for (size_t i = 0; i < xs.size(); ++i) {
    sum[assignment[i]] += xs[i];
    ++count[assignment[i]];
  }
  bool any_empty = false;
  for (size_t j = 0; j < k; ++j) {
    if (count[j]) {
      centers[j] = sum[j] / static_cast<double>(count[j]);
    } else {
      any_empty = true;
    }
  }
  if (any_empty) {
    std::vector<double> dist(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) dist[i] = std::abs(xs[i] - centers[assignment[i]]);
    for (size_t j = 0; j < k; ++j) {
      if (count[j]) continue;
      size_t far = 0;
      for (size_t i = 1; i < xs.size(); ++i) {
        if (dist[i] > dist[far]) far = i;
      }
      centers[j] = xs[far];
      for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] == xs[far]) dist[i] = 0.0;
      }
    }
  }
  std::sort(centers.begin(), centers.end());
}

}  // namespace

ResidualCheckpoint residual(const Checkpoint& current, const Checkpoint* reference,
                            uint64_t step_distance) {
  ResidualCheckpoint out;
  out.step = current.step;
  if (reference) {
    require_same_layout(current, *reference);
    if (step_distance < 1 || current.step < reference->step ||
        current.step - reference->step != step_distance) {
      throw Error(ErrorCode::StepMismatch,
                  "reference step " + std::to_string(reference->step) + " is not " +
                      std::to_string(step_distance) + " before " + std::to_string(current.step));
    }
    out.ref_step = static_cast<int64_t>(reference->step);
  }
  for (const auto& [name, t] : current.tensors) {
    TensorTriple r = t;
    if (reference) {
      const auto& ref_w = reference->tensors.at(name).weight.data;
      for (size_t i = 0; i < r.weight.data.size(); ++i) r.weight.data[i] -= ref_w[i];
    }
    out.planes.emplace(name, std::move(r));
  }
  return out;
}

PruneMask PruneMask::from_bits(std::vector<uint8_t> bits) {
  PruneMask m;
  m.kept_count = static_cast<size_t>(std::count_if(bits.begin(), bits.end(), [](uint8_t b) { return b != 0; }));
  m.bits = std::move(bits);
  return m;
}

PruneMask PruneMask::all(size_t n, bool value) {
  return from_bits(std::vector<uint8_t>(n, value ? 1 : 0));
}

double median_abs(std::span<const float> values) {
  if (values.empty()) return 0.0;
  std::vector<double> a(values.size());
  for (size_t i = 0; i < values.size(); ++i) a[i] = std::abs(static_cast<double>(values[i]));
  const size_t mid = a.size() / 2;
  std::nth_element(a.begin(), a.begin() + static_cast<ptrdiff_t>(mid), a.end());
  const double upper = a[mid];
  if (a.size() % 2) return upper;
  const double lower = *std::max_element(a.begin(), a.begin() + static_cast<ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

PruneMask prune_weights(std::span<const float> residual_w, std::span<const float> second_moment,
                        std::span<const float> w_full, double alpha) {
  if (residual_w.size() != second_moment.size() || residual_w.size() != w_full.size()) {
    throw Error(ErrorCode::ShapeMismatch, "prune_weights: tensor lengths differ");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
  require_finite(residual_w, "weight residual");
  require_finite(second_moment, "second moment");
  require_finite(w_full, "weights");
  const double scale = alpha * median_abs(w_full);
  std::vector<uint8_t> bits(residual_w.size());
  for (size_t i = 0; i < bits.size(); ++i) {
    const double threshold = scale / std::sqrt(static_cast<double>(second_moment[i]) + kSecondMomentEpsilon);
    bits[i] = std::abs(static_cast<double>(residual_w[i])) > threshold ? 1 : 0;
  }
  return PruneMask::from_bits(std::move(bits));
}

PruneMask prune_momentum(std::span<const float> first_moment, double beta, const PruneMask& weight_mask) {
  if (first_moment.size() != weight_mask.size()) {
    throw Error(ErrorCode::ShapeMismatch, "prune_momentum: mask length differs");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(ErrorCode::InvalidArgument, "beta must be > 0");
  require_finite(first_moment, "first moment");
  double sum = 0.0;
  for (float v : first_moment) sum += std::abs(static_cast<double>(v));
  const double threshold = first_moment.empty() ? 0.0 : beta * sum / static_cast<double>(first_moment.size());
  std::vector<uint8_t> bits(first_moment.size());
  for (size_t i = 0; i < bits.size(); ++i) {
    bits[i] = (weight_mask.bits[i] && std::abs(static_cast<double>(first_moment[i])) > threshold) ? 1 : 0;
  }
  return PruneMask::from_bits(std::move(bits));
}

size_t nearest_center(std::span<const float> centers, double x) {
  // First center >= x, then compare with its lower neighbour.
  auto it = std::lower_bound(centers.begin(), centers.end(), x,
                             [](float c, double v) { return static_cast<double>(c) < v; });
  size_t hi = static_cast<size_t>(it - centers.begin());
  if (hi == centers.size()) return centers.size() - 1;
  if (hi == 0) return 0;
  const double dl = x - static_cast<double>(centers[hi - 1]);
  const double dh = static_cast<double>(centers[hi]) - x;
  return dl <= dh ? hi - 1 : hi;
}

namespace {

/// Centers of the minimum-inertia split of sorted `xs` into k contiguous
/// groups, by dynamic programming with divide-and-conquer over the monotone
/// split points. Optimal 1-D clusters are always contiguous.
std::vector<double> optimal_centers(const std::vector<double>& xs, size_t k) {
  const size_t n = xs.size();
  const double shift = xs[n / 2];
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double x = xs[i] - shift;
    s1[i + 1] = s1[i] + x;
    s2[i + 1] = s2[i] + x * x;
  }
  auto cost = [&](size_t lo, size_t hi) {  // elements [lo, hi)
    const double sum = s1[hi] - s1[lo];
    return std::max(0.0, (s2[hi] - s2[lo]) - sum * sum / static_cast<double>(hi - lo));
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(n + 1, inf), cur(n + 1, inf);
  std::vector<std::vector<uint32_t>> split(k, std::vector<uint32_t>(n + 1, 0));
  for (size_t i = 1; i <= n; ++i) prev[i] = cost(0, i);
  for (size_t j = 1; j < k; ++j) {
    std::fill(cur.begin(), cur.end(), inf);
    // cur[i] = min over m in [j, i) of prev[m] + cost(m, i)
    auto solve = [&](auto&& self, size_t lo, size_t hi, size_t opt_lo, size_t opt_hi) -> void {
      if (lo > hi) return;
      const size_t mid = lo + (hi - lo) / 2;
      size_t best_m = opt_lo;
      double best = inf;
      for (size_t m = opt_lo; m <= std::min(opt_hi, mid - 1); ++m) {
        const double v = prev[m] + cost(m, mid);
        if (v < best) {
          best = v;
          best_m = m;
        }
      }
      cur[mid] = best;
      split[j][mid] = static_cast<uint32_t>(best_m);
      if (mid > lo) self(self, lo, mid - 1, opt_lo, best_m);
      self(self, mid + 1, hi, best_m, opt_hi);
    };
    solve(solve, j + 1, n, j, n - 1);
    std::swap(prev, cur);
  }
  std::vector<double> centers(k);
  size_t hi = n;
  for (size_t j = k; j-- > 0;) {
    const size_t lo = j == 0 ? 0 : split[j][hi];
    centers[j] = shift + (s1[hi] - s1[lo]) / static_cast<double>(hi - lo);
    hi = lo;
  }
  return centers;
}

}  // namespace

KMeansResult kmeans_1d(std::span<const double> values, size_t k, uint64_t seed, int restarts) {
  KMeansResult best;
  if (values.empty() || k == 0) return best;

  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> xs(values.size());
  for (size_t i = 0; i < xs.size(); ++i) xs[i] = values[order[i]];
  size_t n_distinct = 1;
  for (size_t i = 1; i < xs.size(); ++i) n_distinct += xs[i] != xs[i - 1];
  k = std::min(k, n_distinct);

  double best_inertia = std::numeric_limits<double>::infinity();
  std::vector<float> best_centers;
  auto lloyd = [&](std::vector<double> centers) {
    std::vector<uint32_t> assignment, previous;
    KMeansRun run;
    for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
      const double inertia = assign_sorted(xs, centers, assignment);
      if (iter > 0 && assignment == previous) break;
      run.inertia.push_back(inertia);
      if (iter + 1 == kMaxLloydIterations) break;
      previous = assignment;
      update_centers(xs, assignment, centers);
    }
    best.runs.push_back(std::move(run));

    // Canonical form: single-precision centers, ascending, ties collapsed.
    std::vector<float> fc(centers.size());
    for (size_t j = 0; j < centers.size(); ++j) fc[j] = static_cast<float>(centers[j]);
    std::sort(fc.begin(), fc.end());
    fc.erase(std::unique(fc.begin(), fc.end()), fc.end());
    double inertia = 0.0;
    for (double x : xs) {
      const double d = x - static_cast<double>(fc[nearest_center(fc, x)]);
      inertia += d * d;
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centers = std::move(fc);
    }
  };

  for (int r = 0; r < std::max(1, restarts); ++r) {
    Xoshiro256 rng(mix_seed(seed, static_cast<uint64_t>(r)));
    lloyd(kmeanspp_init(xs, k, rng));
  }
  if (k > 1 && k * xs.size() <= kMaxExactKMeansCells) lloyd(optimal_centers(xs, k));

  best.centers = std::move(best_centers);
  best.inertia = best_inertia;
  best.assignment.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    best.assignment[i] = static_cast<uint32_t>(nearest_center(best.centers, values[i]));
  }
  return best;
}

QuantizedPlane kmeans_quantize(std::span<const float> values, const PruneMask& keep, int bits, uint64_t seed) {
  if (bits < 2 || bits > 8) throw Error(ErrorCode::InvalidArgument, "bits must be in [2, 8]");
  if (keep.size() != values.size()) throw Error(ErrorCode::ShapeMismatch, "mask length differs from values");
  QuantizedPlane q;
  q.bits = bits;
  q.symbols.assign(values.size(), 0);
  q.centers.assign(QuantizedPlane::center_slots(bits), 0.0f);

  std::vector<double> retained;
  std::vector<size_t> where;
  retained.reserve(keep.kept_count);
  where.reserve(keep.kept_count);
  for (size_t i = 0; i < values.size(); ++i) {
    if (keep.bits[i]) {
      retained.push_back(values[i]);
      where.push_back(i);
    }
  }
  if (retained.empty()) return q;
  require_finite(values, "quantizer input");

  KMeansResult km = kmeans_1d(retained, QuantizedPlane::center_slots(bits), seed);
  std::copy(km.centers.begin(), km.centers.end(), q.centers.begin());
  q.used_centers = km.centers.size();
  for (size_t i = 0; i < where.size(); ++i) q.symbols[where[i]] = static_cast<uint8_t>(km.assignment[i] + 1);
  return q;
}

std::vector<float> dequantize(const QuantizedPlane& q, const Dims& dims) {
  if (q.symbols.size() != element_count(dims)) throw Error(ErrorCode::ShapeMismatch, "symbol count differs from dims");
  std::vector<float> out(q.symbols.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const uint8_t s = q.symbols[i];
    if (s == 0) {
      out[i] = 0.0f;
    } else if (s <= q.centers.size()) {
      out[i] = q.centers[s - 1];
    } else {
      throw Error(ErrorCode::SymbolOutOfRange, "symbol " + std::to_string(s) + " has no center");
    }
  }
  return out;
}

std::vector<uint8_t> pack_symbols(std::span<const uint8_t> symbols, int bits) {
  if (bits != 2 && bits != 4 && bits != 8) throw Error(ErrorCode::InvalidArgument, "pack width must be 2, 4 or 8");
  const size_t per_byte = 8 / static_cast<size_t>(bits);
  std::vector<uint8_t> out((symbols.size() + per_byte - 1) / per_byte, 0);
  for (size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] >> bits) throw Error(ErrorCode::SymbolOutOfRange, "symbol wider than pack width");
    out[i / per_byte] |= static_cast<uint8_t>(symbols[i] << ((i % per_byte) * static_cast<size_t>(bits)));
  }
  return out;
}

std::vector<uint8_t> unpack_symbols(std::span<const uint8_t> packed, int bits, size_t count) {
  if (bits != 2 && bits != 4 && bits != 8) throw Error(ErrorCode::InvalidArgument, "pack width must be 2, 4 or 8");
  const size_t per_byte = 8 / static_cast<size_t>(bits);
  if (packed.size() * per_byte < count) throw Error(ErrorCode::TruncatedPayload, "packed buffer too short");
  const unsigned mask = (1u << bits) - 1u;
  std::vector<uint8_t> out(count);
  for (size_t i = 0; i < count; ++i) {
    out[i] = static_cast<uint8_t>((packed[i / per_byte] >> ((i % per_byte) * static_cast<size_t>(bits))) & mask);
  }
  return out;
}

Checkpoint reconstruct(const Checkpoint* reference, uint64_t step,
                       const std::map<std::string, DequantizedTriple>& planes) {
  Checkpoint out;
  out.step = step;
  if (reference && reference->tensors.size() != planes.size()) {
    throw Error(ErrorCode::ShapeMismatch, "reference tensor count differs");
  }
  for (const auto& [name, p] : planes) {
    std::vector<float> w = p.weight_residual;
    if (reference) {
      auto it = reference->tensors.find(name);
      if (it == reference->tensors.end() || it->second.dims() != p.dims) {
        throw Error(ErrorCode::ShapeMismatch, "reference does not match plane " + name);
      }
      const auto& ref_w = it->second.weight.data;
      for (size_t i = 0; i < w.size(); ++i) w[i] = ref_w[i] + w[i];
    }
    out.add(name, p.dims, std::move(w), p.first_moment, p.second_moment);
  }
  return out;
}

}  // namespace ckz::transform
