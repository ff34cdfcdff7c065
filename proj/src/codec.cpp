#include "codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "arith.hpp"
#include "byteio.hpp"
#include "digest.hpp"
#include "error.hpp"
#include "prng.hpp"

namespace ckz::codec {

using probmodel::Context;
using probmodel::ProbabilityModel;
using Layout = std::map<std::string, Dims>;

namespace {

constexpr char kMagic[4] = {'C', 'K', 'Z', '1'};
constexpr uint16_t kVersion = 1;

size_t role_index(Role r) { return static_cast<size_t>(r); }

void write_config(ByteWriter& w, const CodecConfig& c) {
  w.u8(c.bits);
  w.f32(c.alpha);
  w.f32(c.beta);
  w.u16(c.step_size);
  w.u8(static_cast<uint8_t>(c.model_kind));
  w.u16(c.model.embed);
  w.u16(c.model.hidden);
  w.u8(c.model.layers);
  w.u16(c.model.batch);
  w.f32(c.model.lr);
  w.f32(c.model.beta1);
  w.f32(c.model.beta2);
  w.f32(c.model.eps);
  w.u64(c.seed);
  w.u8(c.total_log2);
}

CodecConfig read_config(ByteReader& r) {
  CodecConfig c;
  c.bits = r.u8();
  c.alpha = r.f32();
  c.beta = r.f32();
  c.step_size = r.u16();
  const uint8_t kind = r.u8();
  if (kind > 1) throw Error(ErrorCode::HeaderCorrupt, "unknown model kind " + std::to_string(kind));
  c.model_kind = static_cast<ModelKind>(kind);
  c.model.embed = r.u16();
  c.model.hidden = r.u16();
  c.model.layers = r.u8();
  c.model.batch = r.u16();
  c.model.lr = r.f32();
  c.model.beta1 = r.f32();
  c.model.beta2 = r.f32();
  c.model.eps = r.f32();
  c.seed = r.u64();
  c.total_log2 = r.u8();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::HeaderCorrupt, e.what());
  }
  return c;
}

void write_record_body(ByteWriter& w, const Record& rec) {
  w.u64(rec.step);
  w.u32(static_cast<uint32_t>(rec.planes.size()));
  for (const PlaneHeader& p : rec.planes) {
    w.u16(static_cast<uint16_t>(p.name.size()));
    w.str(p.name);
    w.u8(static_cast<uint8_t>(p.role));
    w.u8(static_cast<uint8_t>(p.dims.size()));
    for (uint32_t d : p.dims) w.u32(d);
    w.f32s(p.centers);
  }
  w.u64(rec.payload.size());
  w.bytes(rec.payload);
}

Layout layout_of(const Checkpoint& c) {
  Layout l;
  for (const auto& [name, t] : c.tensors) l.emplace(name, t.dims());
  return l;
}

void check_layout(std::optional<Layout>& expected, const Layout& actual, ErrorCode code) {
  if (expected && *expected != actual) throw Error(code, "tensor names or shapes differ from earlier checkpoints");
}

/// Shared encoder/decoder schedule. Planes in name order, roles in order,
/// positions row-major in batches; every batch is predicted with the
/// pre-batch model and followed by exactly one update.
template <typename CodeFn>
void code_symbols(ProbabilityModel& model, const CodecConfig& cfg, const ReferenceState::Slot* ref,
                  const Layout& layout, std::map<std::string, SymbolTriple>& symbols, CodeFn&& code) {
  const size_t batch = cfg.model.batch;
  const uint32_t total = cfg.total();
  std::vector<Context> contexts;
  for (const auto& [name, dims] : layout) {
    const probmodel::PlaneShape shape = probmodel::plane_shape(dims);
    const size_t n = element_count(dims);
    SymbolTriple& planes = symbols.at(name);
    for (Role role : kRoles) {
      std::vector<uint8_t>& cur = planes[role_index(role)];
      probmodel::SymbolPlaneView view{{}, shape};
      if (ref) view.symbols = ref->symbols.at(name)[role_index(role)];
      for (size_t start = 0; start < n; start += batch) {
        const size_t count = std::min(batch, n - start);
        contexts.resize(count);
        for (size_t i = 0; i < count; ++i) contexts[i] = probmodel::extract_context(view, start + i);
        const probmodel::BatchPrediction pred = model.predict_batch(contexts);
        for (size_t i = 0; i < count; ++i) {
          const arith::FrequencyTable table = arith::quantize_probabilities(pred.row(i), total);
          code(table, cur[start + i]);
        }
        model.update(pred, std::span<const uint8_t>(cur.data() + start, count));
      }
    }
  }
}

uint64_t plane_seed(uint64_t seed, size_t index, const std::string& name, Role role) {
  Digest d;
  d.value(static_cast<uint64_t>(index));
  d.str(name);
  d.value(role);
  return mix_seed(seed, d.get());
}

Checkpoint reconstruct_from(const ReferenceState::Slot* ref, uint64_t step, const QuantizedCheckpoint& q) {
  std::map<std::string, transform::DequantizedTriple> planes;
  for (const auto& [name, t] : q.tensors) {
    transform::DequantizedTriple d;
    d.dims = t.dims;
    d.weight_residual = transform::dequantize(t.planes[0], t.dims);
    d.first_moment = transform::dequantize(t.planes[1], t.dims);
    d.second_moment = transform::dequantize(t.planes[2], t.dims);
    planes.emplace(name, std::move(d));
  }
  return transform::reconstruct(ref ? &ref->reconstruction : nullptr, step, planes);
}

}  // namespace

void CodecConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (bits < 2 || bits > 8) bad("bits must be in [2, 8]");
  if (!(alpha > 0.0f) || !std::isfinite(alpha)) bad("alpha must be a positive finite number");
  if (!(beta > 0.0f) || !std::isfinite(beta)) bad("beta must be a positive finite number");
  if (step_size < 1) bad("step size must be >= 1");
  if (model.embed == 0 || model.hidden == 0 || model.layers == 0 || model.batch == 0) bad("model dimensions must be positive");
  if (!(model.lr >= 0.0f) || !std::isfinite(model.lr)) bad("learning rate must be finite and >= 0");
  if (!(model.beta1 >= 0.0f && model.beta1 < 1.0f)) bad("beta1 must be in [0, 1)");
  if (!(model.beta2 >= 0.0f && model.beta2 < 1.0f)) bad("beta2 must be in [0, 1)");
  if (!(model.eps > 0.0f) || !std::isfinite(model.eps)) bad("eps must be positive");
  if (total_log2 < bits + 1 || total_log2 > arith::kMaxTotalLog2) bad("total_log2 must be in [bits + 1, 16]");
}

bool operator==(const CodecConfig& a, const CodecConfig& b) {
  ByteWriter wa, wb;
  write_config(wa, a);
  write_config(wb, b);
  return std::ranges::equal(wa.view(), wb.view());
}

size_t record_size(const Record& r) {
  ByteWriter w;
  write_record_body(w, r);
  return w.size() + sizeof(uint32_t);
}

uint32_t record_crc(const Record& r) {
  ByteWriter w;
  write_record_body(w, r);
  const auto v = w.view();
  return static_cast<uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), v.data(), static_cast<uInt>(v.size())));
}

std::vector<uint8_t> write_container(const Container& c) {
  c.config.validate();
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u16(kVersion);
  write_config(w, c.config);
  w.u32(static_cast<uint32_t>(c.records.size()));
  for (const Record& r : c.records) {
    write_record_body(w, r);
    w.u32(r.crc);
  }
  return w.take();
}

Container read_container(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a CKZ1 container");
  }
  ByteReader r(bytes);
  r.bytes(4);
  const uint16_t version = r.u16();
  if (version != kVersion) throw Error(ErrorCode::UnsupportedVersion, "CKZ1 version " + std::to_string(version));
  Container c;
  c.config = read_config(r);
  const uint32_t count = r.u32();
  const size_t centers = transform::QuantizedPlane::center_slots(c.config.bits);
  for (uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.step = r.u64();
    const uint32_t planes = r.u32();
    if (planes > r.remaining()) throw Error(ErrorCode::TruncatedPayload, "plane count exceeds container size");
    rec.planes.resize(planes);
    for (PlaneHeader& p : rec.planes) {
      p.name = r.str(r.u16());
      const uint8_t role = r.u8();
      if (role > 2) throw Error(ErrorCode::HeaderCorrupt, "unknown plane role " + std::to_string(role));
      p.role = static_cast<Role>(role);
      p.dims.resize(r.u8());
      for (auto& d : p.dims) {
        d = r.u32();
        if (d == 0) throw Error(ErrorCode::HeaderCorrupt, "zero dimension in plane " + p.name);
      }
      p.centers.resize(centers);
      r.f32s(p.centers);
    }
    const uint64_t len = r.u64();
    if (len > r.remaining()) throw Error(ErrorCode::TruncatedPayload, "payload runs past end of container");
    auto payload = r.bytes(static_cast<size_t>(len));
    rec.payload.assign(payload.begin(), payload.end());
    rec.crc = r.u32();
    c.records.push_back(std::move(rec));
  }
  if (!r.done()) throw Error(ErrorCode::HeaderCorrupt, "trailing bytes after last record");
  return c;
}

Container load_container(const std::string& path) { return read_container(read_file(path)); }

void save_container(const Container& c, const std::string& path) { write_file(path, write_container(c)); }

// ---------------------------------------------------------------------------

ReferenceState::ReferenceState(size_t depth) : ring_(std::max<size_t>(depth, 1)) {}

const ReferenceState::Slot* ReferenceState::next_reference() const {
  if (count_ < ring_.size()) return nullptr;
  const auto& slot = ring_[count_ % ring_.size()];
  return slot ? &*slot : nullptr;
}

const ReferenceState::Slot* ReferenceState::latest() const {
  if (count_ == 0) return nullptr;
  return &*ring_[(count_ - 1) % ring_.size()];
}

void ReferenceState::push(Slot slot) {
  ring_[count_ % ring_.size()] = std::move(slot);
  ++count_;
}

uint64_t ReferenceState::digest() const {
  Digest d;
  d.value(static_cast<uint64_t>(count_));
  for (const auto& slot : ring_) {
    if (!slot) {
      d.value(uint8_t{0});
      continue;
    }
    d.value(slot->reconstruction.step);
    for (const auto& [name, t] : slot->reconstruction.tensors) {
      d.str(name);
      for (Role role : kRoles) d.span(std::span<const float>(t.get(role).data));
    }
    for (const auto& [name, planes] : slot->symbols) {
      d.str(name);
      for (const auto& p : planes) d.span(std::span<const uint8_t>(p));
    }
  }
  return d.get();
}

// ---------------------------------------------------------------------------

Encoder::Encoder(const CodecConfig& config)
    : config_((config.validate(), config)),
      ref_(config.step_size),
      model_(config.model_kind, config.alphabet(), config.model, config.seed) {}

QuantizedCheckpoint Encoder::quantize(const Checkpoint& ckpt) const {
  ckpt.validate();
  std::optional<Layout> expected = layout_;
  check_layout(expected, layout_of(ckpt), ErrorCode::ShapeMismatch);

  const ReferenceState::Slot* ref = ref_.next_reference();
  const Checkpoint* ref_ckpt = ref ? &ref->reconstruction : nullptr;
  uint64_t distance = 0;
  if (ref_ckpt) {
    if (ckpt.step <= ref_ckpt->step) {
      throw Error(ErrorCode::StepMismatch, "checkpoint steps must increase");
    }
    distance = ckpt.step - ref_ckpt->step;
  }
  const transform::ResidualCheckpoint res = transform::residual(ckpt, ref_ckpt, distance);

  QuantizedCheckpoint q;
  q.step = ckpt.step;
  const size_t index = ref_.count();
  for (const auto& [name, planes] : res.planes) {
    const TensorTriple& full = ckpt.tensors.at(name);
    const transform::PruneMask weight_mask = transform::prune_weights(
        planes.weight.data, full.second_moment.data, full.weight.data, config_.alpha);
    const transform::PruneMask moment_mask =
        transform::prune_momentum(full.first_moment.data, config_.beta, weight_mask);
    QuantizedTriple t;
    t.dims = full.dims();
    t.planes[0] = transform::kmeans_quantize(planes.weight.data, weight_mask, config_.bits,
                                             plane_seed(config_.seed, index, name, Role::Weight));
    t.planes[1] = transform::kmeans_quantize(planes.first_moment.data, moment_mask, config_.bits,
                                             plane_seed(config_.seed, index, name, Role::FirstMoment));
    t.planes[2] = transform::kmeans_quantize(planes.second_moment.data, moment_mask, config_.bits,
                                             plane_seed(config_.seed, index, name, Role::SecondMoment));
    q.tensors.emplace(name, std::move(t));
  }
  return q;
}

Record Encoder::encode(const QuantizedCheckpoint& q) {
  Layout layout;
  for (const auto& [name, t] : q.tensors) {
    layout.emplace(name, t.dims);
    for (const auto& p : t.planes) {
      if (p.bits != config_.bits || p.centers.size() != transform::QuantizedPlane::center_slots(config_.bits) ||
          p.symbols.size() != element_count(t.dims)) {
        throw Error(ErrorCode::ShapeMismatch, "quantized plane " + name + " does not match the codec config");
      }
      for (uint8_t s : p.symbols) {
        if (s >= config_.alphabet()) throw Error(ErrorCode::SymbolOutOfRange, "symbol outside alphabet");
      }
    }
  }
  check_layout(layout_, layout, ErrorCode::ShapeMismatch);
  const ReferenceState::Slot* ref = ref_.next_reference();
  if (ref && q.step <= ref->reconstruction.step) throw Error(ErrorCode::StepMismatch, "checkpoint steps must increase");

  Record rec;
  rec.step = q.step;
  std::map<std::string, SymbolTriple> symbols;
  for (const auto& [name, t] : q.tensors) {
    for (Role role : kRoles) {
      const auto& p = t.planes[role_index(role)];
      rec.planes.push_back(PlaneHeader{name, role, t.dims, p.centers});
      symbols[name][role_index(role)] = p.symbols;
    }
  }

  arith::Encoder enc;
  code_symbols(model_, config_, ref, layout, symbols,
               [&](const arith::FrequencyTable& table, uint8_t& symbol) { enc.encode(table, symbol); });
  rec.payload = enc.finish();
  rec.crc = record_crc(rec);

  Checkpoint recon = reconstruct_from(ref, q.step, q);
  ref_.push(ReferenceState::Slot{std::move(recon), std::move(symbols)});
  layout_ = std::move(layout);
  return rec;
}

Record Encoder::compress(const Checkpoint& ckpt) { return encode(quantize(ckpt)); }

const Checkpoint& Encoder::last_reconstruction() const {
  const ReferenceState::Slot* slot = ref_.latest();
  if (!slot) throw Error(ErrorCode::InvalidArgument, "nothing encoded yet");
  return slot->reconstruction;
}

uint64_t Encoder::digest() const {
  Digest d;
  d.value(ref_.digest());
  d.value(model_.digest());
  return d.get();
}

// ---------------------------------------------------------------------------

Decoder::Decoder(const CodecConfig& config)
    : config_((config.validate(), config)),
      ref_(config.step_size),
      model_(config.model_kind, config.alphabet(), config.model, config.seed) {}

Checkpoint Decoder::decompress(const Record& record) {
  if (record_crc(record) != record.crc) {
    throw Error(ErrorCode::ChecksumMismatch, "record for step " + std::to_string(record.step) + " is corrupted");
  }
  const size_t slots = transform::QuantizedPlane::center_slots(config_.bits);
  if (record.planes.size() % 3 != 0) throw Error(ErrorCode::HeaderCorrupt, "plane count is not a multiple of 3");
  QuantizedCheckpoint q;
  q.step = record.step;
  Layout layout;
  for (size_t i = 0; i < record.planes.size(); i += 3) {
    const std::string& name = record.planes[i].name;
    if (!layout.empty() && !(layout.rbegin()->first < name)) {
      throw Error(ErrorCode::HeaderCorrupt, "plane names out of order at " + name);
    }
    QuantizedTriple t;
    t.dims = record.planes[i].dims;
    for (Role role : kRoles) {
      const PlaneHeader& p = record.planes[i + role_index(role)];
      if (p.name != name || p.role != role || p.dims != t.dims || p.centers.size() != slots) {
        throw Error(ErrorCode::HeaderCorrupt, "malformed plane group for " + name);
      }
      auto& plane = t.planes[role_index(role)];
      plane.bits = config_.bits;
      plane.centers = p.centers;
      plane.used_centers = slots;
      plane.symbols.assign(element_count(t.dims), 0);
    }
    layout.emplace(name, t.dims);
    q.tensors.emplace(name, std::move(t));
  }
  check_layout(layout_, layout, ErrorCode::HeaderCorrupt);
  const ReferenceState::Slot* ref = ref_.next_reference();
  if (ref && record.step <= ref->reconstruction.step) {
    throw Error(ErrorCode::HeaderCorrupt, "record steps must increase");
  }

  std::map<std::string, SymbolTriple> symbols;
  for (const auto& [name, t] : q.tensors) {
    for (size_t r = 0; r < 3; ++r) symbols[name][r].assign(element_count(t.dims), 0);
  }
  arith::Decoder dec(record.payload);
  code_symbols(model_, config_, ref, layout, symbols, [&](const arith::FrequencyTable& table, uint8_t& symbol) {
    symbol = static_cast<uint8_t>(dec.decode(table));
  });
  for (auto& [name, t] : q.tensors) {
    for (size_t r = 0; r < 3; ++r) t.planes[r].symbols = symbols.at(name)[r];
  }

  Checkpoint recon = reconstruct_from(ref, q.step, q);
  ref_.push(ReferenceState::Slot{recon, std::move(symbols)});
  layout_ = std::move(layout);
  last_ = std::move(q);
  return recon;
}

uint64_t Decoder::digest() const {
  Digest d;
  d.value(ref_.digest());
  d.value(model_.digest());
  return d.get();
}

// ---------------------------------------------------------------------------

Container compress_series(const CheckpointSeries& series, const CodecConfig& config) {
  for (const SeriesViolation& v : validate_series(series)) {
    const ErrorCode code =
        v.kind == SeriesViolation::Kind::NonIncreasingStep ? ErrorCode::StepMismatch : ErrorCode::ShapeMismatch;
    throw Error(code, "checkpoint " + std::to_string(v.index) + ": " + v.message);
  }
  Container c;
  c.config = config;
  Encoder enc(config);
  for (const Checkpoint& ckpt : series) c.records.push_back(enc.compress(ckpt));
  return c;
}

CheckpointSeries decompress_series(const Container& container) {
  Decoder dec(container.config);
  CheckpointSeries out;
  for (const Record& r : container.records) out.push_back(dec.decompress(r));
  return out;
}

Container recode(const Container& container) {
  Decoder dec(container.config);
  Encoder enc(container.config);
  Container out;
  out.config = container.config;
  for (const Record& r : container.records) {
    dec.decompress(r);
    out.records.push_back(enc.encode(dec.last_symbols()));
  }
  return out;
}

VerifyReport verify(const Container& container) {
  VerifyReport report;
  Decoder dec(container.config);
  Encoder enc(container.config);
  for (const Record& r : container.records) {
    const std::string where = "record " + std::to_string(report.records) + " (step " + std::to_string(r.step) + ")";
    ++report.records;
    try {
      dec.decompress(r);
      const Record again = enc.encode(dec.last_symbols());
      if (again.payload != r.payload) report.failures.push_back(where + ": re-encoded payload differs");
      if (again.crc != r.crc) report.failures.push_back(where + ": re-encoded checksum differs");
      if (enc.digest() != dec.digest()) report.failures.push_back(where + ": encoder/decoder state digests differ");
    } catch (const Error& e) {
      report.failures.push_back(where + ": " + e.what());
    }
    if (!report.failures.empty()) break;
  }
  report.ok = report.failures.empty();
  return report;
}

std::vector<RecordStats> stats(const Container& container) {
  const int bits = container.config.bits;
  const size_t pack_width = bits <= 2 ? 2 : bits <= 4 ? 4 : 8;
  std::vector<RecordStats> rows;
  for (const Record& r : container.records) {
    RecordStats s;
    s.step = r.step;
    for (const PlaneHeader& p : r.planes) {
      const size_t n = element_count(p.dims);
      s.symbols += n;
      s.raw_bytes += 4 * n;
      if (p.role == Role::Weight) s.raw_weight_bytes += 4 * n;
      s.packed_bytes += (n * pack_width + 7) / 8 + 4 * p.centers.size();
    }
    s.compressed_bytes = record_size(r);
    s.payload_bytes = r.payload.size();
    s.ratio = static_cast<double>(s.raw_bytes) / static_cast<double>(s.compressed_bytes);
    s.weight_ratio = static_cast<double>(s.raw_weight_bytes) / static_cast<double>(s.compressed_bytes);
    s.bits_per_symbol = s.symbols ? 8.0 * static_cast<double>(s.payload_bytes) / static_cast<double>(s.symbols) : 0.0;
    rows.push_back(s);
  }
  return rows;
}

std::string stats_csv(const std::vector<RecordStats>& rows) {
  std::ostringstream out;
  out << "step,symbols,raw_bytes,raw_weight_bytes,compressed_bytes,payload_bytes,packed_bytes,ratio,weight_ratio,"
         "bits_per_symbol\n";
  char buf[128];
  for (const RecordStats& s : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f", s.ratio, s.weight_ratio, s.bits_per_symbol);
    out << s.step << ',' << s.symbols << ',' << s.raw_bytes << ',' << s.raw_weight_bytes << ','
        << s.compressed_bytes << ',' << s.payload_bytes << ',' << s.packed_bytes << ',' << buf << '\n';
  }
  return out.str();
}

}  // namespace ckz::codec
