#pragma once

// Compression pipeline over a checkpoint series and the CKZ1 container.
//
// Each checkpoint becomes one record: weight residuals against the
// reconstructed reference plus both optimizer moments are pruned and k-means
// quantized, then every symbol is arithmetic-coded with probabilities from a
// model fed by the reference checkpoint's symbol plane. The decoder replays
// the same model schedule, so model parameters never enter the stream.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "tensorstore.hpp"
#include "transform.hpp"

namespace ckz::codec {

using probmodel::LstmConfig;
using probmodel::ModelKind;

struct CodecConfig {
  uint8_t bits = 4;
  float alpha = 5e-5f;
  float beta = 2.0f;
  uint16_t step_size = 1;  // reference distance, counted in checkpoints
  ModelKind model_kind = ModelKind::Lstm;
  LstmConfig model;
  uint64_t seed = 0;
  uint8_t total_log2 = 16;

  size_t alphabet() const noexcept { return size_t{1} << bits; }
  uint32_t total() const noexcept { return uint32_t{1} << total_log2; }

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;

  friend bool operator==(const CodecConfig& a, const CodecConfig& b);
};

struct PlaneHeader {
  std::string name;
  Role role = Role::Weight;
  Dims dims;
  std::vector<float> centers;  // 2^bits - 1 entries
};

struct Record {
  uint64_t step = 0;
  std::vector<PlaneHeader> planes;
  std::vector<uint8_t> payload;
  uint32_t crc = 0;
};

struct Container {
  CodecConfig config;
  std::vector<Record> records;
};

std::vector<uint8_t> write_container(const Container& c);
/// Parses structure only; checksums are checked when records are decoded.
Container read_container(std::span<const uint8_t> bytes);

Container load_container(const std::string& path);
void save_container(const Container& c, const std::string& path);

/// Serialized size of a record, checksum included.
size_t record_size(const Record& r);
/// CRC-32 over the serialized record up to (excluding) the checksum field.
uint32_t record_crc(const Record& r);

using SymbolTriple = std::array<std::vector<uint8_t>, 3>;

struct QuantizedTriple {
  Dims dims;
  std::array<transform::QuantizedPlane, 3> planes;  // indexed by Role
};

struct QuantizedCheckpoint {
  uint64_t step = 0;
  std::map<std::string, QuantizedTriple> tensors;
};

/// Reconstructions and symbol planes of the last `depth` coded checkpoints.
class ReferenceState {
 public:
  struct Slot {
    Checkpoint reconstruction;
    std::map<std::string, SymbolTriple> symbols;
  };

  explicit ReferenceState(size_t depth = 1);

  /// Reference for the next checkpoint, or nullptr for the zero reference
  /// (the first `depth` checkpoints).
  const Slot* next_reference() const;
  void push(Slot slot);
  /// Most recently pushed slot, nullptr before the first push.
  const Slot* latest() const;

  size_t depth() const noexcept { return ring_.size(); }
  size_t count() const noexcept { return count_; }
  uint64_t digest() const;

 private:
  std::vector<std::optional<Slot>> ring_;
  size_t count_ = 0;
};

class Encoder {
 public:
  explicit Encoder(const CodecConfig& config);

  /// Residual, prune, quantize and entropy-code one checkpoint.
  Record compress(const Checkpoint& ckpt);

  /// Lossy stage only, against the current reference.
  QuantizedCheckpoint quantize(const Checkpoint& ckpt) const;

  /// Lossless stage: codes the symbols and advances the reference state.
  Record encode(const QuantizedCheckpoint& q);

  const CodecConfig& config() const noexcept { return config_; }
  const ReferenceState& reference() const noexcept { return ref_; }
  /// Reconstruction the decoder will produce for the last record.
  const Checkpoint& last_reconstruction() const;
  /// Fingerprint of reference state and model state.
  uint64_t digest() const;

 private:
  CodecConfig config_;
  ReferenceState ref_;
  probmodel::ProbabilityModel model_;
  std::optional<std::map<std::string, Dims>> layout_;
};

class Decoder {
 public:
  explicit Decoder(const CodecConfig& config);

  /// Verifies the checksum, decodes symbols, reconstructs the checkpoint.
  Checkpoint decompress(const Record& record);

  const QuantizedCheckpoint& last_symbols() const noexcept { return last_; }
  uint64_t digest() const;

 private:
  CodecConfig config_;
  ReferenceState ref_;
  probmodel::ProbabilityModel model_;
  std::optional<std::map<std::string, Dims>> layout_;
  QuantizedCheckpoint last_;
};

Container compress_series(const CheckpointSeries& series, const CodecConfig& config);
CheckpointSeries decompress_series(const Container& container);

/// Decodes every record and re-encodes the symbols with a fresh encoder.
Container recode(const Container& container);

struct RecordStats {
  uint64_t step = 0;
  size_t symbols = 0;
  size_t raw_bytes = 0;         // f32 weights + both moments
  size_t raw_weight_bytes = 0;  // f32 weights only
  size_t compressed_bytes = 0;  // whole record
  size_t payload_bytes = 0;
  size_t packed_bytes = 0;      // bit-packed symbols + centers, no entropy coding
  double ratio = 0.0;
  double weight_ratio = 0.0;
  double bits_per_symbol = 0.0;
};

std::vector<RecordStats> stats(const Container& container);
std::string stats_csv(const std::vector<RecordStats>& rows);

struct VerifyReport {
  bool ok = true;
  size_t records = 0;
  std::vector<std::string> failures;
};

/// Checksums, lossless round trip of every payload, and encoder/decoder
/// state digests after every record.
VerifyReport verify(const Container& container);

}  // namespace ckz::codec
