#include "harness.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "adam.hpp"
#include "arith.hpp"
#include "byteio.hpp"
#include "error.hpp"
#include "prng.hpp"

namespace ckz::harness {

void ToyTrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (layers.size() < 2) bad("need at least input and output layer sizes");
  for (uint32_t n : layers) {
    if (n == 0) bad("layer sizes must be positive");
  }
  if (layers.front() > 8) bad("spiral features provide at most 8 inputs");
  if (layers.back() != 2) bad("spiral task has 2 classes");
  if (points < 2 || batch == 0) bad("points and batch must be positive");
  if (checkpoint_every == 0) bad("checkpoint interval must be positive");
  if (!(lr >= 0.0)) bad("lr must be >= 0");
}

Dataset make_spiral(size_t points, size_t features, uint64_t seed) {
  if (features == 0 || features > 8) throw Error(ErrorCode::InvalidArgument, "spiral supports 1..8 features");
  Xoshiro256 rng(mix_seed(seed, 0x5B12A1));
  Dataset d;
  d.features = features;
  d.x.resize(points * features);
  d.label.resize(points);
  const size_t per_arm = (points + 1) / 2;
  for (size_t i = 0; i < points; ++i) {
    const uint8_t cls = static_cast<uint8_t>(i % 2);
    const double k = static_cast<double>(i / 2) / static_cast<double>(per_arm);
    const double t = 0.25 + 3.0 * std::numbers::pi * k;
    const double r = t / (3.25 * std::numbers::pi);
    const double angle = t + cls * std::numbers::pi;
    const double x = r * std::cos(angle) + rng.uniform(-0.20, 0.20);
    const double y = r * std::sin(angle) + rng.uniform(-0.20, 0.20);
    const double f[8] = {x, y, x * y, x * x, y * y, std::sin(std::numbers::pi * x), std::sin(std::numbers::pi * y),
                         std::sqrt(x * x + y * y)};
    for (size_t j = 0; j < features; ++j) d.x[i * features + j] = static_cast<float>(f[j]);
    d.label[i] = cls;
  }
  return d;
}

size_t mlp_parameter_count(std::span<const uint32_t> layers) {
  size_t n = 0;
  for (size_t l = 0; l + 1 < layers.size(); ++l) n += size_t{layers[l + 1]} * layers[l] + layers[l + 1];
  return n;
}

template <typename T>
double mlp_loss_and_grad(std::span<const uint32_t> layers, std::span<const T> params, const Dataset& data,
                         std::span<const size_t> samples, std::span<T> grad) {
  const size_t nl = layers.size() - 1;
  std::vector<size_t> offset(nl);
  for (size_t l = 0, off = 0; l < nl; ++l) {
    offset[l] = off;
    off += size_t{layers[l + 1]} * layers[l] + layers[l + 1];
  }
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), T(0));
  std::vector<std::vector<T>> act(nl + 1), pre(nl);
  for (size_t l = 0; l <= nl; ++l) act[l].resize(layers[l]);
  for (size_t l = 0; l < nl; ++l) pre[l].resize(layers[l + 1]);
  std::vector<T> delta, prev_delta;
  const T inv_n = T(1) / static_cast<T>(samples.size());
  double total = 0.0;

  for (size_t s : samples) {
    for (size_t j = 0; j < layers[0]; ++j) act[0][j] = static_cast<T>(data.x[s * data.features + j]);
    for (size_t l = 0; l < nl; ++l) {
      const size_t in = layers[l], out = layers[l + 1];
      const T* w = &params[offset[l]];
      const T* b = w + out * in;
      for (size_t o = 0; o < out; ++o) {
        T z = b[o];
        for (size_t i = 0; i < in; ++i) z += w[o * in + i] * act[l][i];
        pre[l][o] = z;
        act[l + 1][o] = (l + 1 < nl && z < T(0)) ? T(0) : z;
      }
    }
    const std::vector<T>& logits = act[nl];
    T mx = logits[0];
    for (T z : logits) mx = std::max(mx, z);
    T sum = 0;
    for (T z : logits) sum += std::exp(z - mx);
    const T log_sum = std::log(sum);
    const uint8_t y = data.label[s];
    total += -static_cast<double>(logits[y] - mx - log_sum);
    if (!want_grad) continue;

    delta.resize(logits.size());
    for (size_t o = 0; o < logits.size(); ++o) {
      delta[o] = (std::exp(logits[o] - mx - log_sum) - (o == y ? T(1) : T(0))) * inv_n;
    }
    for (size_t l = nl; l-- > 0;) {
      const size_t in = layers[l], out = layers[l + 1];
      const T* w = &params[offset[l]];
      T* gw = &grad[offset[l]];
      T* gb = gw + out * in;
      for (size_t o = 0; o < out; ++o) {
        for (size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * act[l][i];
        gb[o] += delta[o];
      }
      if (l == 0) break;
      prev_delta.assign(in, T(0));
      for (size_t o = 0; o < out; ++o) {
        for (size_t i = 0; i < in; ++i) prev_delta[i] += w[o * in + i] * delta[o];
      }
      for (size_t i = 0; i < in; ++i) {
        if (!(pre[l - 1][i] > T(0))) prev_delta[i] = T(0);
      }
      delta.swap(prev_delta);
    }
  }
  return total / static_cast<double>(samples.size());
}

template double mlp_loss_and_grad<float>(std::span<const uint32_t>, std::span<const float>, const Dataset&,
                                         std::span<const size_t>, std::span<float>);
template double mlp_loss_and_grad<double>(std::span<const uint32_t>, std::span<const double>, const Dataset&,
                                          std::span<const size_t>, std::span<double>);

// ---------------------------------------------------------------------------

namespace {

std::string layer_name(size_t l, const char* what) { return "layer" + std::to_string(l) + "." + what; }

}  // namespace

ToyTrainer::ToyTrainer(const ToyTrainConfig& config)
    : config_((config.validate(), config)), data_(make_spiral(config.points, config.layers.front(), config.seed)) {
  const size_t n = mlp_parameter_count(config_.layers);
  params_.assign(n, 0.0f);
  first_.assign(n, 0.0f);
  second_.assign(n, 0.0f);
  grad_.assign(n, 0.0f);
  Xoshiro256 rng(mix_seed(config_.seed, 0x1417));
  size_t off = 0;
  for (size_t l = 0; l + 1 < config_.layers.size(); ++l) {
    const size_t in = config_.layers[l], out = config_.layers[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (size_t i = 0; i < in * out; ++i) params_[off + i] = static_cast<float>(rng.uniform(-limit, limit));
    off += in * out + out;
  }
}

std::vector<size_t> ToyTrainer::minibatch(uint64_t step) const {
  Xoshiro256 rng(mix_seed(config_.seed, 0xBA7C40000000ull + step));
  std::vector<size_t> idx(config_.batch);
  for (auto& i : idx) i = static_cast<size_t>(rng.below(data_.size()));
  return idx;
}

void ToyTrainer::step() {
  const std::vector<size_t> idx = minibatch(step_ + 1);
  const double loss = mlp_loss_and_grad<float>(config_.layers, params_, data_, idx, grad_);
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "toy training diverged at step " + std::to_string(step_ + 1));
  const AdamHyper h{config_.lr, config_.beta1, config_.beta2, config_.eps};
  try {
    adam_step<float>(params_, grad_, first_, second_, step_ + 1, h);
  } catch (const Error&) {
    throw Error(ErrorCode::NonFiniteLoss, "non-finite gradient at step " + std::to_string(step_ + 1));
  }
  ++step_;
}

void ToyTrainer::train_until(uint64_t step) {
  while (step_ < step) this->step();
}

double ToyTrainer::loss() const {
  std::vector<size_t> all(data_.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mlp_loss_and_grad<float>(config_.layers, params_, data_, all, {});
}

double ToyTrainer::loss_of(const Checkpoint& ckpt) const {
  const std::vector<float> p = flatten(ckpt, Role::Weight);
  std::vector<size_t> all(data_.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mlp_loss_and_grad<float>(config_.layers, p, data_, all, {});
}

Checkpoint ToyTrainer::snapshot() const {
  Checkpoint c;
  c.step = step_;
  size_t off = 0;
  for (size_t l = 0; l + 1 < config_.layers.size(); ++l) {
    const uint32_t in = config_.layers[l], out = config_.layers[l + 1];
    auto slice = [&](const std::vector<float>& v, size_t at, size_t n) {
      return std::vector<float>(v.begin() + static_cast<ptrdiff_t>(at), v.begin() + static_cast<ptrdiff_t>(at + n));
    };
    const size_t nw = size_t{in} * out;
    c.add(layer_name(l, "weight"), {out, in}, slice(params_, off, nw), slice(first_, off, nw), slice(second_, off, nw));
    c.add(layer_name(l, "bias"), {out}, slice(params_, off + nw, out), slice(first_, off + nw, out),
          slice(second_, off + nw, out));
    off += nw + out;
  }
  return c;
}

std::vector<float> ToyTrainer::flatten(const Checkpoint& ckpt, Role role) const {
  std::vector<float> out;
  out.reserve(params_.size());
  for (size_t l = 0; l + 1 < config_.layers.size(); ++l) {
    for (const char* what : {"weight", "bias"}) {
      auto it = ckpt.tensors.find(layer_name(l, what));
      if (it == ckpt.tensors.end()) throw Error(ErrorCode::ShapeMismatch, "checkpoint lacks " + layer_name(l, what));
      const auto& data = it->second.get(role).data;
      out.insert(out.end(), data.begin(), data.end());
    }
  }
  if (out.size() != params_.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint does not match the network");
  return out;
}

void ToyTrainer::restore(const Checkpoint& ckpt) {
  params_ = flatten(ckpt, Role::Weight);
  first_ = flatten(ckpt, Role::FirstMoment);
  second_ = flatten(ckpt, Role::SecondMoment);
  step_ = ckpt.step;
}

CheckpointSeries toy_train(const ToyTrainConfig& config) {
  ToyTrainer trainer(config);
  CheckpointSeries series;
  for (uint64_t s = config.checkpoint_every; s <= config.steps; s += config.checkpoint_every) {
    trainer.train_until(s);
    series.push_back(trainer.snapshot());
  }
  return series;
}

ResumeMetrics resume_experiment(const ToyTrainConfig& config, uint64_t break_every,
                                const std::optional<codec::CodecConfig>& codec_config) {
  if (break_every == 0 || break_every % config.checkpoint_every != 0) {
    throw Error(ErrorCode::InvalidArgument, "break interval must be a multiple of the checkpoint interval");
  }
  ResumeMetrics m;
  ToyTrainer baseline(config);
  ToyTrainer resumed(config);
  std::optional<codec::Encoder> enc;
  std::optional<codec::Decoder> dec;
  codec::Container container;
  if (codec_config) {
    enc.emplace(*codec_config);
    dec.emplace(*codec_config);
    container.config = *codec_config;
  }
  for (uint64_t s = config.checkpoint_every; s <= config.steps; s += config.checkpoint_every) {
    baseline.train_until(s);
    resumed.train_until(s);
    const Checkpoint ckpt = resumed.snapshot();
    Checkpoint restored = ckpt;
    if (enc) {
      container.records.push_back(enc->compress(ckpt));
      restored = dec->decompress(container.records.back());
    }
    if (s % break_every == 0) resumed.restore(restored);
    m.steps.push_back(s);
    m.baseline_loss.push_back(baseline.loss());
    m.resumed_loss.push_back(resumed.loss());
  }
  if (codec_config) m.sizes = codec::stats(container);
  if (!m.steps.empty()) {
    m.final_baseline = m.baseline_loss.back();
    m.final_resumed = m.resumed_loss.back();
    m.relative_delta = std::abs(m.final_resumed - m.final_baseline) / m.final_baseline;
  }
  return m;
}

// ---------------------------------------------------------------------------

std::vector<SyntheticPlanePair> synth_planes(int bits, double p, size_t count, uint64_t seed, size_t rows,
                                             size_t cols) {
  if (bits < 1 || bits > 8) throw Error(ErrorCode::InvalidArgument, "bits must be in [1, 8]");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "copy probability must be in [0, 1]");
  const uint64_t alphabet = uint64_t{1} << bits;
  Xoshiro256 rng(seed);
  std::vector<SyntheticPlanePair> out(count);
  for (auto& pair : out) {
    pair.rows = rows;
    pair.cols = cols;
    pair.reference.resize(rows * cols);
    pair.current.resize(rows * cols);
    for (auto& s : pair.reference) s = static_cast<uint8_t>(rng.below(alphabet));
    for (size_t i = 0; i < pair.current.size(); ++i) {
      const uint8_t ref = pair.reference[i];
      if (rng.uniform() < p) {
        pair.current[i] = ref;
      } else {
        const auto other = static_cast<uint8_t>(rng.below(alphabet - 1));
        pair.current[i] = other >= ref ? static_cast<uint8_t>(other + 1) : other;
      }
    }
  }
  return out;
}

std::vector<double> synth_code_lengths(const std::vector<SyntheticPlanePair>& pairs, int bits,
                                       probmodel::ModelKind kind, const probmodel::LstmConfig& config,
                                       uint64_t seed) {
  const size_t alphabet = size_t{1} << bits;
  const uint32_t total = uint32_t{1} << arith::kDefaultTotalLog2;
  probmodel::ProbabilityModel model(kind, alphabet, config, seed);
  std::vector<double> lengths;
  std::vector<probmodel::Context> contexts;
  for (const auto& pair : pairs) {
    const probmodel::SymbolPlaneView view{pair.reference, {pair.rows, pair.cols}};
    const size_t n = pair.current.size();
    for (size_t start = 0; start < n; start += config.batch) {
      const size_t count = std::min<size_t>(config.batch, n - start);
      contexts.resize(count);
      for (size_t i = 0; i < count; ++i) contexts[i] = probmodel::extract_context(view, start + i);
      const probmodel::BatchPrediction pred = model.predict_batch(contexts);
      for (size_t i = 0; i < count; ++i) {
        const arith::FrequencyTable table = arith::quantize_probabilities(pred.row(i), total);
        const uint8_t s = pair.current[start + i];
        lengths.push_back(-std::log2(static_cast<double>(table.frequency(s)) / total));
      }
      model.update(pred, std::span<const uint8_t>(pair.current.data() + start, count));
    }
  }
  return lengths;
}

CheckpointSeries random_series(uint64_t seed, size_t min_checkpoints, size_t max_checkpoints, size_t max_elements) {
  Xoshiro256 rng(seed);
  const size_t count = min_checkpoints + rng.below(max_checkpoints - min_checkpoints + 1);
  const size_t tensors = 1 + rng.below(3);

  struct State {
    std::string name;
    Dims dims;
    std::vector<float> w, v, m, drift;
  };
  std::vector<State> states(tensors);
  for (size_t t = 0; t < tensors; ++t) {
    State& s = states[t];
    s.name = "t" + std::to_string(t);
    const size_t rank = 1 + rng.below(3);
    size_t budget = max_elements;
    for (size_t r = 0; r < rank; ++r) {
      const uint32_t d = static_cast<uint32_t>(1 + rng.below(std::max<size_t>(1, std::min<size_t>(budget, 6))));
      s.dims.push_back(d);
      budget = std::max<size_t>(1, budget / d);
    }
    const size_t n = element_count(s.dims);
    s.w.resize(n);
    s.v.assign(n, 0.0f);
    s.m.assign(n, 0.0f);
    s.drift.resize(n);
    for (size_t i = 0; i < n; ++i) {
      s.w[i] = static_cast<float>(rng.uniform(-0.20, 0.20));
      s.drift[i] = static_cast<float>(rng.uniform(-0.20, 0.20));
    }
  }

  CheckpointSeries series;
  uint64_t step = rng.below(3);
  for (size_t c = 0; c < count; ++c) {
    step += 1 + rng.below(5);
    Checkpoint ckpt;
    ckpt.step = step;
    for (State& s : states) {
      for (size_t k = 0; k < 10; ++k) {
        for (size_t i = 0; i < s.w.size(); ++i) {
          const float g = s.drift[i] + static_cast<float>(rng.uniform(-0.20, 0.20));
          s.v[i] = 0.9f * s.v[i] + 0.1f * g;
          s.m[i] = 0.999f * s.m[i] + 0.001f * g * g;
          s.w[i] -= 0.01f * s.v[i] / (std::sqrt(s.m[i]) + 1e-8f);
        }
      }
      ckpt.add(s.name, s.dims, s.w, s.v, s.m);
    }
    series.push_back(std::move(ckpt));
  }
  return series;
}

std::string loss_csv(const ResumeMetrics& metrics) {
  std::ostringstream out;
  out.precision(9);
  out << "step,baseline_loss,resumed_loss\n";
  for (size_t i = 0; i < metrics.steps.size(); ++i) {
    out << metrics.steps[i] << ',' << metrics.baseline_loss[i] << ',' << metrics.resumed_loss[i] << '\n';
  }
  return out.str();
}

void report(const ResumeMetrics& metrics, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot create " + dir + ": " + ec.message());
  auto put = [&](const std::string& name, const std::string& text) {
    write_file((std::filesystem::path(dir) / name).string(),
               std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
  };
  put("loss.csv", loss_csv(metrics));
  put("sizes.csv", codec::stats_csv(metrics.sizes));
}

}  // namespace ckz::harness
