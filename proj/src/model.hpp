#pragma once

// Probability models driving the arithmetic coder: the online-trained LSTM
// over reference-plane contexts and the context-free count baseline.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "adam.hpp"
#include "context.hpp"
#include "digest.hpp"
#include "frequency_model.hpp"
#include "lstm.hpp"

namespace ckz::probmodel {

enum class ModelKind : uint8_t { Frequency = 0, Lstm = 1 };

const char* model_kind_name(ModelKind kind) noexcept;

struct LstmConfig {
  uint16_t embed = 64;
  uint16_t hidden = 64;
  uint8_t layers = 2;
  uint16_t batch = 64;
  float lr = 0.001f;
  float beta1 = 0.0f;
  float beta2 = 0.9999f;
  float eps = 1e-5f;

  static constexpr double kClipNorm = 5.0;

  /// 512/512/256, the large configuration.
  static LstmConfig large_scale();
};

class LstmModel {
 public:
  LstmModel(size_t alphabet, const LstmConfig& config, uint64_t seed);

  const LstmConfig& config() const noexcept { return config_; }
  const LstmNetwork<float>& network() const noexcept { return net_; }
  uint64_t step() const noexcept { return step_; }

  /// Pure: fills act (and act.probs) without touching the model.
  void forward(std::span<const Context> contexts, LstmActivations<float>& act) const;

  /// One Adam step on the batch cross-entropy, reusing the forward pass that
  /// produced the batch predictions. Gradients are clipped to global norm 5.
  /// Throws NonFiniteGradient and leaves the model unchanged on divergence.
  /// Returns the batch loss.
  double update(const LstmActivations<float>& act, std::span<const uint8_t> symbols);

  void digest_into(ckz::Digest& d) const;

 private:
  LstmConfig config_;
  LstmNetwork<float> net_;
  std::vector<float> first_, second_, grads_;
  uint64_t step_ = 0;
};

/// Model predictions for one batch; carries what the update needs.
struct BatchPrediction {
  size_t count = 0;
  size_t alphabet = 0;
  std::vector<double> probs;  // count x alphabet
  LstmActivations<float> activations;

  std::span<const double> row(size_t i) const { return {probs.data() + i * alphabet, alphabet}; }
};

class ProbabilityModel {
 public:
  ProbabilityModel(ModelKind kind, size_t alphabet, const LstmConfig& config, uint64_t seed);

  ModelKind kind() const noexcept { return kind_; }
  size_t alphabet() const noexcept { return alphabet_; }

  /// Single-context prediction.
  std::vector<double> predict(const Context& ctx) const;

  BatchPrediction predict_batch(std::span<const Context> contexts) const;

  /// Applies one update for a batch previously predicted with this state.
  void update(const BatchPrediction& prediction, std::span<const uint8_t> symbols);

  uint64_t digest() const;

  const FrequencyModel* frequency() const noexcept { return std::get_if<FrequencyModel>(&impl_); }
  const LstmModel* lstm() const noexcept { return std::get_if<LstmModel>(&impl_); }

 private:
  ModelKind kind_;
  size_t alphabet_;
  std::variant<FrequencyModel, LstmModel> impl_;
};

}  // namespace ckz::probmodel
