#include "model.hpp"

#include <cmath>

#include "digest.hpp"
#include "error.hpp"

namespace ckz::probmodel {

const char* model_kind_name(ModelKind kind) noexcept {
  return kind == ModelKind::Lstm ? "lstm" : "freq";
}

LstmConfig LstmConfig::large_scale() {
  LstmConfig c;
  c.embed = 512;
  c.hidden = 512;
  c.batch = 256;
  return c;
}

LstmModel::LstmModel(size_t alphabet, const LstmConfig& config, uint64_t seed)
    : config_(config), net_(LstmShape{alphabet, config.embed, config.hidden, config.layers}) {
  if (config.embed == 0 || config.hidden == 0 || config.layers == 0 || config.batch == 0) {
    throw Error(ErrorCode::InvalidArgument, "LSTM dimensions must be positive");
  }
  net_.init(seed);
  first_.assign(net_.parameter_count(), 0.0f);
  second_.assign(net_.parameter_count(), 0.0f);
  grads_.assign(net_.parameter_count(), 0.0f);
}

void LstmModel::forward(std::span<const Context> contexts, LstmActivations<float>& act) const {
  net_.forward(contexts, act);
}

double LstmModel::update(const LstmActivations<float>& act, std::span<const uint8_t> symbols) {
  if (act.batch == 0 || symbols.size() != act.batch) throw Error(ErrorCode::InvalidArgument, "batch size mismatch");
  net_.backward(act, symbols, grads_);
  double norm2 = 0.0;
  for (float g : grads_) norm2 += static_cast<double>(g) * g;
  if (!std::isfinite(norm2)) throw Error(ErrorCode::NonFiniteGradient, "LSTM gradient diverged");
  const double norm = std::sqrt(norm2);
  if (norm > LstmConfig::kClipNorm) {
    const float scale = static_cast<float>(LstmConfig::kClipNorm / norm);
    for (float& g : grads_) g *= scale;
  }
  const AdamHyper h{config_.lr, config_.beta1, config_.beta2, config_.eps};
  adam_step<float>(net_.params(), grads_, first_, second_, step_ + 1, h);
  ++step_;
  return LstmNetwork<float>::loss(act, symbols, net_.shape().alphabet);
}

void LstmModel::digest_into(Digest& d) const {
  d.span(net_.params());
  d.span(std::span<const float>(first_));
  d.span(std::span<const float>(second_));
  d.value(step_);
}

namespace {

std::variant<FrequencyModel, LstmModel> make_impl(ModelKind kind, size_t alphabet, const LstmConfig& config,
                                                  uint64_t seed) {
  if (kind == ModelKind::Lstm) return LstmModel(alphabet, config, seed);
  return FrequencyModel(alphabet);
}

}  // namespace

ProbabilityModel::ProbabilityModel(ModelKind kind, size_t alphabet, const LstmConfig& config, uint64_t seed)
    : kind_(kind), alphabet_(alphabet), impl_(make_impl(kind, alphabet, config, seed)) {}

std::vector<double> ProbabilityModel::predict(const Context& ctx) const {
  BatchPrediction p = predict_batch(std::span<const Context>(&ctx, 1));
  return std::move(p.probs);
}

BatchPrediction ProbabilityModel::predict_batch(std::span<const Context> contexts) const {
  BatchPrediction out;
  out.count = contexts.size();
  out.alphabet = alphabet_;
  if (const auto* f = std::get_if<FrequencyModel>(&impl_)) {
    out.probs.resize(out.count * alphabet_);
    for (size_t i = 0; i < out.count; ++i) f->predict_into({out.probs.data() + i * alphabet_, alphabet_});
  } else {
    std::get<LstmModel>(impl_).forward(contexts, out.activations);
    out.probs = out.activations.probs;
  }
  return out;
}

void ProbabilityModel::update(const BatchPrediction& prediction, std::span<const uint8_t> symbols) {
  if (symbols.empty() || symbols.size() != prediction.count) {
    throw Error(ErrorCode::InvalidArgument, "update batch must be nonempty and match the prediction");
  }
  if (auto* f = std::get_if<FrequencyModel>(&impl_)) {
    f->update(symbols);
  } else {
    std::get<LstmModel>(impl_).update(prediction.activations, symbols);
  }
}

uint64_t ProbabilityModel::digest() const {
  Digest d;
  d.value(static_cast<uint8_t>(kind_));
  if (const auto* f = std::get_if<FrequencyModel>(&impl_)) {
    d.span(std::span<const uint32_t>(f->counts()));
  } else {
    std::get<LstmModel>(impl_).digest_into(d);
  }
  return d.get();
}

}  // namespace ckz::probmodel
