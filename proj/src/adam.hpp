#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "error.hpp"

namespace ckz {

struct AdamHyper {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step at step index t >= 1. `first` and `second`
/// are the running gradient mean and squared-gradient mean. With beta1 = 0
/// the update reduces to RMSProp with bias correction.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> first, std::span<T> second,
               uint64_t t, const AdamHyper& h) {
  if (grads.size() != params.size() || first.size() != params.size() || second.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "adam_step: slot sizes differ");
  }
  if (t < 1) throw Error(ErrorCode::InvalidArgument, "adam_step: t must be >= 1");
  for (T g : grads) {
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteInput, "adam_step: non-finite gradient");
  }
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T one_b1 = static_cast<T>(1.0 - h.beta1);
  const T one_b2 = static_cast<T>(1.0 - h.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / (1.0 - std::pow(h.beta1, static_cast<double>(t))));
  const T inv_bc2 = static_cast<T>(1.0 / (1.0 - std::pow(h.beta2, static_cast<double>(t))));
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    first[i] = b1 * first[i] + one_b1 * g;
    second[i] = b2 * second[i] + one_b2 * g * g;
    const T m_hat = first[i] * inv_bc1;
    const T v_hat = second[i] * inv_bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace ckz
