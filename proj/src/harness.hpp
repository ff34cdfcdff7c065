#pragma once

// Desk-scale experiment harness: a small MLP trained with Adam on a
// synthetic spiral to produce real checkpoint series, the
// interrupt-and-resume experiment, and synthetic correlated symbol planes.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codec.hpp"
#include "tensorstore.hpp"

namespace ckz::harness {

struct ToyTrainConfig {
  std::vector<uint32_t> layers{8, 32, 32, 2};
  size_t points = 512;
  size_t batch = 64;
  uint64_t steps = 2000;
  uint64_t checkpoint_every = 100;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  size_t features = 0;
  std::vector<float> x;        // points x features
  std::vector<uint8_t> label;  // 0 or 1
  size_t size() const noexcept { return label.size(); }
};

/// Two interleaved spiral arms with per-point jitter, mapped through a fixed
/// feature map (x, y, xy, x^2, y^2, sin(pi x), sin(pi y), r) truncated to
/// `features` columns.
Dataset make_spiral(size_t points, size_t features, uint64_t seed);

/// Mean softmax cross-entropy of an MLP (ReLU hidden layers) over the
/// sample indices, plus its gradient. Parameters are laid out per layer as
/// W (out x in, row-major) then b (out).
template <typename T>
double mlp_loss_and_grad(std::span<const uint32_t> layers, std::span<const T> params, const Dataset& data,
                         std::span<const size_t> samples, std::span<T> grad);

size_t mlp_parameter_count(std::span<const uint32_t> layers);

class ToyTrainer {
 public:
  explicit ToyTrainer(const ToyTrainConfig& config);

  /// One Adam step on the minibatch of the next step index. Throws
  /// NonFiniteLoss when training diverges.
  void step();
  void train_until(uint64_t step);

  uint64_t step_count() const noexcept { return step_; }
  /// Mean cross-entropy over the full dataset.
  double loss() const;
  double loss_of(const Checkpoint& ckpt) const;

  Checkpoint snapshot() const;
  /// Replaces weights, moments and the step counter.
  void restore(const Checkpoint& ckpt);

  const ToyTrainConfig& config() const noexcept { return config_; }
  std::span<const float> params() const noexcept { return params_; }

 private:
  std::vector<size_t> minibatch(uint64_t step) const;
  std::vector<float> flatten(const Checkpoint& ckpt, Role role) const;

  ToyTrainConfig config_;
  Dataset data_;
  std::vector<float> params_, first_, second_, grad_;
  uint64_t step_ = 0;
};

/// Snapshots (W, first moment, second moment) every `checkpoint_every` steps.
CheckpointSeries toy_train(const ToyTrainConfig& config);

struct ResumeMetrics {
  std::vector<uint64_t> steps;
  std::vector<double> baseline_loss;
  std::vector<double> resumed_loss;  // after restoring at break points
  std::vector<codec::RecordStats> sizes;
  double final_baseline = 0.0;
  double final_resumed = 0.0;
  double relative_delta = 0.0;  // |resumed - baseline| / baseline
};

/// Runs uninterrupted training, then a second run that every `break_every`
/// steps replaces its state with decompress(compress(checkpoint)).
/// `codec` = nullopt uses the identity codec (checkpoints passed through).
ResumeMetrics resume_experiment(const ToyTrainConfig& config, uint64_t break_every,
                                const std::optional<codec::CodecConfig>& codec);

struct SyntheticPlanePair {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<uint8_t> reference;
  std::vector<uint8_t> current;
};

/// Reference planes uniform over 2^bits symbols; each current cell copies the
/// reference cell with probability p, else takes one of the other symbols
/// uniformly.
std::vector<SyntheticPlanePair> synth_planes(int bits, double p, size_t count, uint64_t seed,
                                             size_t rows = 64, size_t cols = 64);

/// Ideal code length in bits (-log2 of the coder's quantized frequency) of
/// every current symbol, in coding order, when the planes are coded with the
/// codec's batch schedule using the reference plane as context.
std::vector<double> synth_code_lengths(const std::vector<SyntheticPlanePair>& pairs, int bits,
                                       probmodel::ModelKind kind, const probmodel::LstmConfig& config,
                                       uint64_t seed);

/// Seeded random series of small tensors drifting like an optimizer run,
/// with `min_checkpoints`..`max_checkpoints` checkpoints.
CheckpointSeries random_series(uint64_t seed, size_t min_checkpoints = 3, size_t max_checkpoints = 10,
                               size_t max_elements = 24);

std::string loss_csv(const ResumeMetrics& metrics);
/// Writes `<dir>/loss.csv` and `<dir>/sizes.csv`.
void report(const ResumeMetrics& metrics, const std::string& dir);

}  // namespace ckz::harness
