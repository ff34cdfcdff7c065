#include "ckptzip/ckptzip.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iterator>
#include <new>
#include <string>

#include "codec.hpp"
#include "byteio.hpp"
#include "error.hpp"
#include "harness.hpp"
#include "tensorstore.hpp"

struct ckz_checkpoint {
  ckz::Checkpoint value;
};

struct ckz_container {
  ckz::codec::Container value;
};

struct ckz_encoder {
  explicit ckz_encoder(const ckz::codec::CodecConfig& c) : encoder(c) { container.config = c; }
  ckz::codec::Encoder encoder;
  ckz::codec::Container container;
};

struct ckz_decoder {
  explicit ckz_decoder(ckz::codec::Container c) : container(std::move(c)), decoder(container.config) {}
  ckz::codec::Container container;
  ckz::codec::Decoder decoder;
  size_t next = 0;
};

namespace {

thread_local std::string g_last_error;

ckz_status fail(ckz_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

/// Runs `fn`, mapping exceptions onto status codes.
template <typename Fn>
ckz_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const ckz::Error& e) {
    return fail(static_cast<ckz_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CKZ_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CKZ_ERR_INTERNAL, e.what());
  }
}

ckz::codec::CodecConfig to_cpp(const ckz_config& c) {
  ckz::codec::CodecConfig out;
  out.bits = c.bits;
  out.alpha = c.alpha;
  out.beta = c.beta;
  out.step_size = c.step_size;
  out.model_kind = c.model_kind == CKZ_MODEL_LSTM ? ckz::probmodel::ModelKind::Lstm : ckz::probmodel::ModelKind::Frequency;
  out.model.embed = c.embed;
  out.model.hidden = c.hidden;
  out.model.layers = c.layers;
  out.model.batch = c.batch;
  out.model.lr = c.lr;
  out.model.beta1 = c.beta1;
  out.model.beta2 = c.beta2;
  out.model.eps = c.eps;
  out.seed = c.seed;
  out.total_log2 = c.total_log2;
  if (c.model_kind != CKZ_MODEL_LSTM && c.model_kind != CKZ_MODEL_FREQUENCY) {
    throw ckz::Error(ckz::ErrorCode::InvalidArgument, "unknown model kind");
  }
  return out;
}

ckz_config to_c(const ckz::codec::CodecConfig& c) {
  ckz_config out{};
  out.bits = c.bits;
  out.alpha = c.alpha;
  out.beta = c.beta;
  out.step_size = c.step_size;
  out.model_kind = c.model_kind == ckz::probmodel::ModelKind::Lstm ? CKZ_MODEL_LSTM : CKZ_MODEL_FREQUENCY;
  out.embed = c.model.embed;
  out.hidden = c.model.hidden;
  out.layers = c.model.layers;
  out.batch = c.model.batch;
  out.lr = c.model.lr;
  out.beta1 = c.model.beta1;
  out.beta2 = c.model.beta2;
  out.eps = c.model.eps;
  out.seed = c.seed;
  out.total_log2 = c.total_log2;
  return out;
}

ckz::harness::ToyTrainConfig to_cpp(const ckz_train_options& o) {
  ckz::harness::ToyTrainConfig t;
  t.steps = o.steps;
  t.checkpoint_every = o.checkpoint_every;
  t.seed = o.seed;
  t.lr = o.lr;
  return t;
}

void fill_buffer(ckz_buffer* out, const void* data, size_t size, bool nul_terminate = false) {
  auto* p = static_cast<uint8_t*>(std::malloc(size + (nul_terminate ? 1 : 0) + 1));
  if (!p) throw std::bad_alloc();
  if (size) std::memcpy(p, data, size);
  if (nul_terminate) p[size] = 0;
  out->data = p;
  out->size = size;
}

ckz_record_stats to_c(const ckz::codec::RecordStats& s) {
  return ckz_record_stats{s.step,        s.symbols,       s.raw_bytes,      s.raw_weight_bytes,
                          s.compressed_bytes, s.payload_bytes, s.packed_bytes, s.ratio,
                          s.weight_ratio, s.bits_per_symbol};
}

#define CKZ_REQUIRE(cond)                                                            \
  do {                                                                               \
    if (!(cond)) return fail(CKZ_ERR_INVALID_ARGUMENT, "null or invalid argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* ckz_version(void) { return "1.0.0"; }

const char* ckz_status_name(ckz_status status) {
  if (status == CKZ_END) return "End";
  return ckz::error_name(static_cast<ckz::ErrorCode>(status));
}

const char* ckz_last_error(void) { return g_last_error.c_str(); }

int ckz_is_format_error(ckz_status status) {
  return status != CKZ_END && ckz::is_format_error(static_cast<ckz::ErrorCode>(status)) ? 1 : 0;
}

void ckz_config_default(ckz_config* config) {
  if (config) *config = to_c(ckz::codec::CodecConfig{});
}

void ckz_config_large_scale(ckz_config* config) {
  if (!config) return;
  ckz::codec::CodecConfig c;
  c.model = ckz::probmodel::LstmConfig::large_scale();
  *config = to_c(c);
}

void ckz_train_options_default(ckz_train_options* options) {
  if (!options) return;
  const ckz::harness::ToyTrainConfig t;
  *options = ckz_train_options{t.steps, t.checkpoint_every, t.seed, t.lr};
}

void ckz_buffer_free(ckz_buffer* buffer) {
  if (!buffer) return;
  std::free(buffer->data);
  buffer->data = nullptr;
  buffer->size = 0;
}

// --- checkpoints ------------------------------------------------------------

ckz_status ckz_checkpoint_new(uint64_t step, ckz_checkpoint** out) {
  CKZ_REQUIRE(out);
  return guarded([&] {
    *out = new ckz_checkpoint{};
    (*out)->value.step = step;
    return CKZ_OK;
  });
}

void ckz_checkpoint_free(ckz_checkpoint* ckpt) { delete ckpt; }

ckz_status ckz_checkpoint_add(ckz_checkpoint* ckpt, const char* name, const uint32_t* dims, size_t rank,
                              const float* weight, const float* first_moment, const float* second_moment) {
  CKZ_REQUIRE(ckpt && name && (dims || rank == 0) && weight && first_moment && second_moment);
  return guarded([&] {
    ckz::Dims d(dims, dims + rank);
    const size_t n = ckz::element_count(d);
    ckpt->value.add(name, d, std::vector<float>(weight, weight + n), std::vector<float>(first_moment, first_moment + n),
                    std::vector<float>(second_moment, second_moment + n));
    return CKZ_OK;
  });
}

uint64_t ckz_checkpoint_step(const ckz_checkpoint* ckpt) { return ckpt ? ckpt->value.step : 0; }

size_t ckz_checkpoint_tensor_count(const ckz_checkpoint* ckpt) { return ckpt ? ckpt->value.tensors.size() : 0; }

ckz_status ckz_checkpoint_tensor_info(const ckz_checkpoint* ckpt, size_t index, const char** name, size_t* rank,
                                      const uint32_t** dims, size_t* elements) {
  CKZ_REQUIRE(ckpt && index < ckpt->value.tensors.size());
  auto it = std::next(ckpt->value.tensors.begin(), static_cast<std::ptrdiff_t>(index));
  if (name) *name = it->first.c_str();
  if (rank) *rank = it->second.dims().size();
  if (dims) *dims = it->second.dims().data();
  if (elements) *elements = it->second.weight.size();
  return CKZ_OK;
}

ckz_status ckz_checkpoint_tensor_data(const ckz_checkpoint* ckpt, size_t index, ckz_role role, const float** data) {
  CKZ_REQUIRE(ckpt && data && index < ckpt->value.tensors.size() && role >= CKZ_ROLE_WEIGHT &&
              role <= CKZ_ROLE_SECOND_MOMENT);
  auto it = std::next(ckpt->value.tensors.begin(), static_cast<std::ptrdiff_t>(index));
  *data = it->second.get(static_cast<ckz::Role>(role)).data.data();
  return CKZ_OK;
}

int ckz_checkpoint_equal(const ckz_checkpoint* a, const ckz_checkpoint* b) {
  return a && b && a->value == b->value ? 1 : 0;
}

ckz_status ckz_checkpoint_read(const uint8_t* bytes, size_t size, ckz_checkpoint** out) {
  CKZ_REQUIRE(out && (bytes || size == 0));
  return guarded([&] {
    auto c = ckz::read_checkpoint(std::span<const uint8_t>(bytes, size));
    *out = new ckz_checkpoint{std::move(c)};
    return CKZ_OK;
  });
}

ckz_status ckz_checkpoint_write(const ckz_checkpoint* ckpt, ckz_buffer* out) {
  CKZ_REQUIRE(ckpt && out);
  return guarded([&] {
    const auto bytes = ckz::write_checkpoint(ckpt->value);
    fill_buffer(out, bytes.data(), bytes.size());
    return CKZ_OK;
  });
}

ckz_status ckz_checkpoint_load(const char* path, ckz_checkpoint** out) {
  CKZ_REQUIRE(path && out);
  return guarded([&] {
    *out = new ckz_checkpoint{ckz::load_checkpoint(path)};
    return CKZ_OK;
  });
}

ckz_status ckz_checkpoint_save(const ckz_checkpoint* ckpt, const char* path) {
  CKZ_REQUIRE(ckpt && path);
  return guarded([&] {
    ckz::save_checkpoint(ckpt->value, path);
    return CKZ_OK;
  });
}

// --- encoder ----------------------------------------------------------------

ckz_status ckz_encoder_new(const ckz_config* config, ckz_encoder** out) {
  CKZ_REQUIRE(config && out);
  return guarded([&] {
    *out = new ckz_encoder(to_cpp(*config));
    return CKZ_OK;
  });
}

ckz_status ckz_encoder_push(ckz_encoder* enc, const ckz_checkpoint* ckpt) {
  CKZ_REQUIRE(enc && ckpt);
  return guarded([&] {
    enc->container.records.push_back(enc->encoder.compress(ckpt->value));
    return CKZ_OK;
  });
}

uint64_t ckz_encoder_digest(const ckz_encoder* enc) { return enc ? enc->encoder.digest() : 0; }

ckz_status ckz_encoder_finish(ckz_encoder* enc, ckz_container** out) {
  CKZ_REQUIRE(enc && out);
  return guarded([&] {
    *out = new ckz_container{std::move(enc->container)};
    enc->container = ckz::codec::Container{};
    enc->container.config = (*out)->value.config;
    return CKZ_OK;
  });
}

void ckz_encoder_free(ckz_encoder* enc) { delete enc; }

// --- containers -------------------------------------------------------------

ckz_status ckz_container_read(const uint8_t* bytes, size_t size, ckz_container** out) {
  CKZ_REQUIRE(out && (bytes || size == 0));
  return guarded([&] {
    auto c = ckz::codec::read_container(std::span<const uint8_t>(bytes, size));
    *out = new ckz_container{std::move(c)};
    return CKZ_OK;
  });
}

ckz_status ckz_container_write(const ckz_container* c, ckz_buffer* out) {
  CKZ_REQUIRE(c && out);
  return guarded([&] {
    const auto bytes = ckz::codec::write_container(c->value);
    fill_buffer(out, bytes.data(), bytes.size());
    return CKZ_OK;
  });
}

ckz_status ckz_container_load(const char* path, ckz_container** out) {
  CKZ_REQUIRE(path && out);
  return guarded([&] {
    *out = new ckz_container{ckz::codec::load_container(path)};
    return CKZ_OK;
  });
}

ckz_status ckz_container_save(const ckz_container* c, const char* path) {
  CKZ_REQUIRE(c && path);
  return guarded([&] {
    ckz::codec::save_container(c->value, path);
    return CKZ_OK;
  });
}

void ckz_container_free(ckz_container* c) { delete c; }

size_t ckz_container_record_count(const ckz_container* c) { return c ? c->value.records.size() : 0; }

ckz_status ckz_container_config(const ckz_container* c, ckz_config* out) {
  CKZ_REQUIRE(c && out);
  *out = to_c(c->value.config);
  return CKZ_OK;
}

ckz_status ckz_container_record_stats(const ckz_container* c, size_t index, ckz_record_stats* out) {
  CKZ_REQUIRE(c && out && index < c->value.records.size());
  return guarded([&] {
    ckz::codec::Container one;
    one.config = c->value.config;
    one.records.push_back(c->value.records[index]);
    *out = to_c(ckz::codec::stats(one).front());
    return CKZ_OK;
  });
}

ckz_status ckz_container_stats_csv(const ckz_container* c, ckz_buffer* out) {
  CKZ_REQUIRE(c && out);
  return guarded([&] {
    const std::string csv = ckz::codec::stats_csv(ckz::codec::stats(c->value));
    fill_buffer(out, csv.data(), csv.size(), true);
    return CKZ_OK;
  });
}

// --- decoder ----------------------------------------------------------------

ckz_status ckz_decoder_new(const ckz_container* c, ckz_decoder** out) {
  CKZ_REQUIRE(c && out);
  return guarded([&] {
    *out = new ckz_decoder(c->value);
    return CKZ_OK;
  });
}

ckz_status ckz_decoder_next(ckz_decoder* dec, ckz_checkpoint** out) {
  CKZ_REQUIRE(dec && out);
  if (dec->next >= dec->container.records.size()) return CKZ_END;
  return guarded([&] {
    auto ckpt = dec->decoder.decompress(dec->container.records[dec->next]);
    ++dec->next;
    *out = new ckz_checkpoint{std::move(ckpt)};
    return CKZ_OK;
  });
}

uint64_t ckz_decoder_digest(const ckz_decoder* dec) { return dec ? dec->decoder.digest() : 0; }

void ckz_decoder_free(ckz_decoder* dec) { delete dec; }

// --- verification and harness -----------------------------------------------

ckz_status ckz_verify(const ckz_container* c, ckz_verify_report* report) {
  CKZ_REQUIRE(c && report);
  return guarded([&] {
    const ckz::codec::VerifyReport r = ckz::codec::verify(c->value);
    report->ok = r.ok ? 1 : 0;
    report->records = r.records;
    report->message[0] = '\0';
    if (r.ok) return CKZ_OK;
    std::snprintf(report->message, sizeof report->message, "%s", r.failures.front().c_str());
    return fail(CKZ_ERR_VERIFICATION_FAILED, r.failures.front());
  });
}

ckz_status ckz_synth_train(const ckz_train_options* options, const char* out_dir, size_t* written) {
  CKZ_REQUIRE(options && out_dir);
  return guarded([&] {
    const ckz::CheckpointSeries series = ckz::harness::toy_train(to_cpp(*options));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ckz::Error(ckz::ErrorCode::IOFailure, std::string("cannot create ") + out_dir);
    for (const ckz::Checkpoint& c : series) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%010llu.ckpt", static_cast<unsigned long long>(c.step));
      ckz::save_checkpoint(c, (std::filesystem::path(out_dir) / name).string());
    }
    if (written) *written = series.size();
    return CKZ_OK;
  });
}

ckz_status ckz_bench(const ckz_bench_options* options, ckz_bench_result* result) {
  CKZ_REQUIRE(options && result);
  return guarded([&] {
    const ckz::harness::ToyTrainConfig train = to_cpp(options->train);
    const ckz::CheckpointSeries series = ckz::harness::toy_train(train);
    ckz::codec::CodecConfig lstm = to_cpp(options->codec);
    lstm.model_kind = ckz::probmodel::ModelKind::Lstm;
    ckz::codec::CodecConfig freq = lstm;
    freq.model_kind = ckz::probmodel::ModelKind::Frequency;

    const auto lstm_stats = ckz::codec::stats(ckz::codec::compress_series(series, lstm));
    const auto freq_stats = ckz::codec::stats(ckz::codec::compress_series(series, freq));
    *result = ckz_bench_result{};
    result->checkpoints = series.size();
    for (size_t i = 0; i < series.size(); ++i) {
      result->raw_bytes += lstm_stats[i].raw_bytes;
      result->lstm_bytes += lstm_stats[i].compressed_bytes;
      result->freq_bytes += freq_stats[i].compressed_bytes;
      if (2 * i >= series.size()) {
        result->lstm_late_payload_bytes += lstm_stats[i].payload_bytes;
        result->freq_late_payload_bytes += freq_stats[i].payload_bytes;
      }
    }

    const ckz::harness::ResumeMetrics m =
        ckz::harness::resume_experiment(train, options->break_every, to_cpp(options->codec));
    result->baseline_loss = m.final_baseline;
    result->resumed_loss = m.final_resumed;
    result->relative_delta = m.relative_delta;

    if (options->csv_dir) {
      std::filesystem::create_directories(options->csv_dir);
      ckz::harness::report(m, options->csv_dir);
      const std::filesystem::path dir(options->csv_dir);
      auto put = [&](const char* name, const std::string& text) {
        ckz::write_file((dir / name).string(),
                        std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
      };
      put("sizes_lstm.csv", ckz::codec::stats_csv(lstm_stats));
      put("sizes_freq.csv", ckz::codec::stats_csv(freq_stats));
    }
    return CKZ_OK;
  });
}

}  // extern "C"
