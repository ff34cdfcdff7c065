#pragma once

// Stacked LSTM over a fixed-length symbol context with a softmax head.
// Templated on the scalar type: the codec runs it in float, the gradient
// checks in double. All reductions run in a fixed order so that two
// instances with equal parameters produce bit-identical outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "context.hpp"
#include "prng.hpp"

namespace ckz::probmodel {

struct LstmShape {
  size_t alphabet = 16;
  size_t embed = 64;
  size_t hidden = 64;
  size_t layers = 2;
};

namespace detail {

// Eight independent partial sums combined in a fixed tree.
template <typename T>
inline T dot(const T* a, const T* b, size_t n) {
  T acc[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
inline void axpy(T a, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace detail

/// Activations kept from a forward pass over one batch.
template <typename T>
struct LstmActivations {
  size_t batch = 0;
  std::vector<Context> contexts;
  std::vector<T> input_table;  // alphabet x 4H: embedding projected through layer 0
  std::vector<T> cells;        // [batch][layer][step] x (4H gates, H cell, H hidden)
  std::vector<double> probs;   // batch x alphabet
};

template <typename T>
class LstmNetwork {
 public:
  static constexpr size_t kSteps = kContextLength;
  static constexpr double kInitRange = 0.05;
  static constexpr double kForgetBias = 1.0;

  LstmNetwork() = default;
  explicit LstmNetwork(const LstmShape& shape) : shape_(shape) { layout(); }

  /// Weights i.i.d. uniform in [-0.05, 0.05] drawn in parameter order from
  /// xoshiro256**(seed); biases 0 except the forget gate at 1.
  void init(uint64_t seed) {
    Xoshiro256 rng(seed);
    std::fill(params_.begin(), params_.end(), T(0));
    auto fill = [&](size_t off, size_t n) {
      for (size_t i = 0; i < n; ++i) params_[off + i] = static_cast<T>(rng.uniform(-kInitRange, kInitRange));
    };
    const size_t H = shape_.hidden, G = 4 * H;
    fill(emb_, shape_.alphabet * shape_.embed);
    for (size_t l = 0; l < shape_.layers; ++l) {
      fill(wx_[l], input_dim(l) * G);
      fill(wh_[l], H * G);
      for (size_t j = 0; j < H; ++j) params_[b_[l] + H + j] = static_cast<T>(kForgetBias);
    }
    fill(wo_, H * shape_.alphabet);
  }

  const LstmShape& shape() const noexcept { return shape_; }
  std::span<T> params() noexcept { return params_; }
  std::span<const T> params() const noexcept { return params_; }
  size_t parameter_count() const noexcept { return params_.size(); }

  template <typename U>
  void copy_params_from(const LstmNetwork<U>& other) {
    auto src = other.params();
    for (size_t i = 0; i < params_.size(); ++i) params_[i] = static_cast<T>(src[i]);
  }

  /// Runs the network on every context; probabilities land in act.probs.
  void forward(std::span<const Context> contexts, LstmActivations<T>& act) const {
    const size_t A = shape_.alphabet, H = shape_.hidden, G = 4 * H, L = shape_.layers;
    act.batch = contexts.size();
    act.contexts.assign(contexts.begin(), contexts.end());
    act.cells.assign(act.batch * L * kSteps * cell_stride(), T(0));
    act.probs.assign(act.batch * A, 0.0);

    // Layer-0 input projection depends only on the symbol.
    act.input_table.assign(A * G, T(0));
    for (size_t s = 0; s < A; ++s) {
      T* row = &act.input_table[s * G];
      const T* e = &params_[emb_ + s * shape_.embed];
      for (size_t j = 0; j < shape_.embed; ++j) detail::axpy(e[j], &params_[wx_[0] + j * G], row, G);
    }

    std::vector<T> logits(A);
    for (size_t b = 0; b < act.batch; ++b) {
      for (size_t l = 0; l < L; ++l) {
        for (size_t t = 0; t < kSteps; ++t) {
          T* cell = cell_ptr(act, b, l, t);
          T* z = cell;
          const T* bias = &params_[b_[l]];
          std::copy(bias, bias + G, z);
          if (l == 0) {
            const T* proj = &act.input_table[contexts[b][t] * G];
            for (size_t g = 0; g < G; ++g) z[g] += proj[g];
          } else {
            const T* x = cell_ptr(act, b, l - 1, t) + G + H;
            for (size_t j = 0; j < H; ++j) detail::axpy(x[j], &params_[wx_[l] + j * G], z, G);
          }
          if (t > 0) {
            const T* hp = cell_ptr(act, b, l, t - 1) + G + H;
            for (size_t j = 0; j < H; ++j) detail::axpy(hp[j], &params_[wh_[l] + j * G], z, G);
          }
          T* c = cell + G;
          T* h = c + H;
          const T* cp = t > 0 ? cell_ptr(act, b, l, t - 1) + G : nullptr;
          for (size_t j = 0; j < H; ++j) {
            const T i = detail::sigmoid(z[j]);
            const T f = detail::sigmoid(z[H + j]);
            const T g = std::tanh(z[2 * H + j]);
            const T o = detail::sigmoid(z[3 * H + j]);
            z[j] = i;
            z[H + j] = f;
            z[2 * H + j] = g;
            z[3 * H + j] = o;
            c[j] = i * g + (cp ? f * cp[j] : T(0));
            h[j] = o * std::tanh(c[j]);
          }
        }
      }
      const T* top = cell_ptr(act, b, L - 1, kSteps - 1) + G + H;
      std::copy(&params_[bo_], &params_[bo_] + A, logits.begin());
      for (size_t j = 0; j < H; ++j) detail::axpy(top[j], &params_[wo_ + j * A], logits.data(), A);
      softmax(logits, std::span<double>(&act.probs[b * A], A));
    }
  }

  /// Mean cross-entropy of the batch (uses probabilities from `act`).
  static double loss(const LstmActivations<T>& act, std::span<const uint8_t> symbols, size_t alphabet) {
    double sum = 0.0;
    for (size_t b = 0; b < act.batch; ++b) sum -= std::log(act.probs[b * alphabet + symbols[b]]);
    return sum / static_cast<double>(act.batch);
  }

  /// Backpropagation through time for the mean cross-entropy; gradients are
  /// written (not accumulated) into `grads`.
  void backward(const LstmActivations<T>& act, std::span<const uint8_t> symbols, std::span<T> grads) const {
    const size_t A = shape_.alphabet, H = shape_.hidden, G = 4 * H, L = shape_.layers, E = shape_.embed;
    std::fill(grads.begin(), grads.end(), T(0));
    std::vector<T> d_input(A * G, T(0));
    std::vector<T> dlogits(A), dz(G), dh(H), dc(H), dh_next(H), dc_next(H);
    std::vector<T> dh_above(kSteps * H), dx_below(kSteps * H);
    const T inv_batch = static_cast<T>(1.0 / static_cast<double>(act.batch));

    for (size_t b = 0; b < act.batch; ++b) {
      for (size_t a = 0; a < A; ++a) {
        const double target = a == symbols[b] ? 1.0 : 0.0;
        dlogits[a] = static_cast<T>(act.probs[b * A + a] - target) * inv_batch;
      }
      const T* top = cell_ptr(act, b, L - 1, kSteps - 1) + G + H;
      for (size_t j = 0; j < H; ++j) detail::axpy(top[j], dlogits.data(), &grads[wo_ + j * A], A);
      for (size_t a = 0; a < A; ++a) grads[bo_ + a] += dlogits[a];
      std::fill(dh_above.begin(), dh_above.end(), T(0));
      for (size_t j = 0; j < H; ++j) dh_above[(kSteps - 1) * H + j] = detail::dot(&params_[wo_ + j * A], dlogits.data(), A);

      for (size_t li = L; li-- > 0;) {
        std::fill(dh_next.begin(), dh_next.end(), T(0));
        std::fill(dc_next.begin(), dc_next.end(), T(0));
        std::fill(dx_below.begin(), dx_below.end(), T(0));
        for (size_t t = kSteps; t-- > 0;) {
          const T* cell = cell_ptr(act, b, li, t);
          const T* gate = cell;
          const T* c = cell + G;
          const T* cp = t > 0 ? cell_ptr(act, b, li, t - 1) + G : nullptr;
          for (size_t j = 0; j < H; ++j) {
            const T i = gate[j], f = gate[H + j], g = gate[2 * H + j], o = gate[3 * H + j];
            const T tc = std::tanh(c[j]);
            const T dhj = dh_above[t * H + j] + dh_next[j];
            const T dcj = dhj * o * (T(1) - tc * tc) + dc_next[j];
            const T c_prev = cp ? cp[j] : T(0);
            dz[j] = dcj * g * i * (T(1) - i);
            dz[H + j] = dcj * c_prev * f * (T(1) - f);
            dz[2 * H + j] = dcj * i * (T(1) - g * g);
            dz[3 * H + j] = dhj * tc * o * (T(1) - o);
            dc_next[j] = dcj * f;
          }
          for (size_t g = 0; g < G; ++g) grads[b_[li] + g] += dz[g];
          if (li == 0) {
            T* row = &d_input[act.contexts[b][t] * G];
            for (size_t g = 0; g < G; ++g) row[g] += dz[g];
          } else {
            const T* x = cell_ptr(act, b, li - 1, t) + G + H;
            for (size_t j = 0; j < H; ++j) {
              detail::axpy(x[j], dz.data(), &grads[wx_[li] + j * G], G);
              dx_below[t * H + j] = detail::dot(&params_[wx_[li] + j * G], dz.data(), G);
            }
          }
          if (t > 0) {
            const T* hp = cell_ptr(act, b, li, t - 1) + G + H;
            for (size_t j = 0; j < H; ++j) {
              detail::axpy(hp[j], dz.data(), &grads[wh_[li] + j * G], G);
              dh_next[j] = detail::dot(&params_[wh_[li] + j * G], dz.data(), G);
            }
          }
        }
        std::swap(dh_above, dx_below);
      }
    }

    // Chain d_input through the embedding and the layer-0 input weights.
    for (size_t s = 0; s < A; ++s) {
      const T* dp = &d_input[s * G];
      const T* e = &params_[emb_ + s * E];
      for (size_t j = 0; j < E; ++j) {
        detail::axpy(e[j], dp, &grads[wx_[0] + j * G], G);
        grads[emb_ + s * E + j] = detail::dot(&params_[wx_[0] + j * G], dp, G);
      }
    }
  }

 private:
  size_t input_dim(size_t l) const noexcept { return l == 0 ? shape_.embed : shape_.hidden; }
  size_t cell_stride() const noexcept { return 6 * shape_.hidden; }

  T* cell_ptr(LstmActivations<T>& act, size_t b, size_t l, size_t t) const {
    return &act.cells[((b * shape_.layers + l) * kSteps + t) * cell_stride()];
  }
  const T* cell_ptr(const LstmActivations<T>& act, size_t b, size_t l, size_t t) const {
    return &act.cells[((b * shape_.layers + l) * kSteps + t) * cell_stride()];
  }

  static void softmax(std::span<const T> logits, std::span<double> out) {
    double mx = static_cast<double>(logits[0]);
    for (T x : logits) mx = std::max(mx, static_cast<double>(x));
    double sum = 0.0;
    for (size_t a = 0; a < logits.size(); ++a) {
      out[a] = std::exp(static_cast<double>(logits[a]) - mx);
      sum += out[a];
    }
    for (double& p : out) p = std::max(p / sum, 1e-12);
  }

  void layout() {
    const size_t H = shape_.hidden, G = 4 * H;
    size_t off = 0;
    emb_ = off;
    off += shape_.alphabet * shape_.embed;
    wx_.assign(shape_.layers, 0);
    wh_.assign(shape_.layers, 0);
    b_.assign(shape_.layers, 0);
    for (size_t l = 0; l < shape_.layers; ++l) {
      wx_[l] = off;
      off += input_dim(l) * G;
      wh_[l] = off;
      off += H * G;
      b_[l] = off;
      off += G;
    }
    wo_ = off;
    off += H * shape_.alphabet;
    bo_ = off;
    off += shape_.alphabet;
    params_.assign(off, T(0));
  }

  LstmShape shape_;
  std::vector<T> params_;
  size_t emb_ = 0, wo_ = 0, bo_ = 0;
  std::vector<size_t> wx_, wh_, b_;
};

}  // namespace ckz::probmodel
