#include <doctest.h>

#include <cmath>
#include <cstring>

#include "byteio.hpp"
#include "codec.hpp"
#include "error.hpp"
#include "harness.hpp"
#include "prng.hpp"

using namespace ckz;
using namespace ckz::codec;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

CodecConfig small_lstm() {
  CodecConfig c;
  c.model.embed = 16;
  c.model.hidden = 16;
  c.model.batch = 16;
  return c;
}

CodecConfig freq() {
  CodecConfig c;
  c.model_kind = probmodel::ModelKind::Frequency;
  return c;
}

void check_same_symbols(const QuantizedCheckpoint& a, const QuantizedCheckpoint& b) {
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (const auto& [name, t] : a.tensors) {
    const auto& u = b.tensors.at(name);
    for (size_t r = 0; r < 3; ++r) {
      CHECK(t.planes[r].symbols == u.planes[r].symbols);
      CHECK(t.planes[r].centers == u.planes[r].centers);
    }
  }
}

Checkpoint one_tensor(uint64_t step, Dims dims, std::vector<float> w, std::vector<float> v, std::vector<float> m) {
  Checkpoint c;
  c.step = step;
  c.add("w", std::move(dims), std::move(w), std::move(v), std::move(m));
  return c;
}

}  // namespace

TEST_CASE("container header layout") {
  Container c;
  c.config.seed = 0x0102030405060708ull;
  const auto bytes = write_container(c);
  REQUIRE(bytes.size() == 4 + 2 + 44 + 4);
  CHECK(std::memcmp(bytes.data(), "CKZ1", 4) == 0);
  ByteReader r(bytes);
  r.bytes(4);
  CHECK(r.u16() == 1);
  CHECK(r.u8() == 4);
  CHECK(r.f32() == 5e-5f);
  CHECK(r.f32() == 2.0f);
  CHECK(r.u16() == 1);
  CHECK(r.u8() == 1);
  CHECK(r.u16() == 64);
  CHECK(r.u16() == 64);
  CHECK(r.u8() == 2);
  CHECK(r.u16() == 64);
  CHECK(r.f32() == 0.001f);
  CHECK(r.f32() == 0.0f);
  CHECK(r.f32() == 0.9999f);
  CHECK(r.f32() == 1e-5f);
  CHECK(r.u64() == 0x0102030405060708ull);
  CHECK(r.u8() == 16);
  CHECK(r.u32() == 0);
  CHECK(read_container(bytes).config == c.config);
}

TEST_CASE("container parse errors") {
  const Container c = compress_series(harness::random_series(3), freq());
  auto bytes = write_container(c);
  CHECK(read_container(bytes).records.size() == c.records.size());
  SUBCASE("magic") {
    bytes[1] = 'Q';
    CHECK(code_of([&] { read_container(bytes); }) == ErrorCode::BadMagic);
  }
  SUBCASE("version") {
    bytes[4] = 9;
    CHECK(code_of([&] { read_container(bytes); }) == ErrorCode::UnsupportedVersion);
  }
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 3);
    CHECK(code_of([&] { read_container(bytes); }) == ErrorCode::TruncatedPayload);
  }
  SUBCASE("invalid config") {
    bytes[6] = 9;  // bits
    CHECK(code_of([&] { read_container(bytes); }) == ErrorCode::HeaderCorrupt);
  }
}

TEST_CASE("round trip reproduces the quantizer output and state digests") {
  for (const CodecConfig& cfg : {freq(), small_lstm()}) {
    for (uint64_t seed = 1; seed <= 6; ++seed) {
      const CheckpointSeries series = harness::random_series(seed);
      Encoder enc(cfg);
      Decoder dec(cfg);
      for (const Checkpoint& ckpt : series) {
        const QuantizedCheckpoint q = enc.quantize(ckpt);
        const Record rec = enc.encode(q);
        const Checkpoint out = dec.decompress(rec);
        check_same_symbols(q, dec.last_symbols());
        CHECK(out == enc.last_reconstruction());
        CHECK(enc.digest() == dec.digest());
      }
      const Container c = compress_series(series, cfg);
      const Container parsed = read_container(write_container(c));
      CHECK(decompress_series(parsed).size() == series.size());
      CHECK(verify(parsed).ok);
    }
  }
}

TEST_CASE("reconstruction error equals the quantization error of that step") {
  const CheckpointSeries series = harness::random_series(21, 6, 6, 24);
  const CodecConfig cfg = freq();
  Encoder enc(cfg);
  Decoder dec(cfg);
  for (const Checkpoint& ckpt : series) {
    const QuantizedCheckpoint q = enc.quantize(ckpt);
    const Checkpoint* ref = enc.reference().next_reference() ? &enc.reference().next_reference()->reconstruction
                                                             : nullptr;
    const auto res = transform::residual(ckpt, ref, ref ? ckpt.step - ref->step : 1);
    const Checkpoint out = dec.decompress(enc.encode(q));
    for (const auto& [name, t] : ckpt.tensors) {
      const auto& w = t.weight.data;
      const auto& r = res.planes.at(name).weight.data;
      const auto deq = transform::dequantize(q.tensors.at(name).planes[0], t.dims());
      double step_error = 0;
      for (size_t i = 0; i < w.size(); ++i) step_error = std::max(step_error, std::abs(double(r[i]) - deq[i]));
      for (size_t i = 0; i < w.size(); ++i) {
        const double err = std::abs(double(w[i]) - out.tensors.at(name).weight.data[i]);
        CHECK(err <= step_error + 1e-6 * (1 + std::abs(w[i])));
      }
    }
  }
}

TEST_CASE("single checkpoint against the zero reference") {
  const Checkpoint c = one_tensor(1, {2, 2}, {0.5f, -1.0f, 2.0f, 0.25f}, {1e-3f, 0, 0, 0}, {1e-6f, 1e-6f, 1e-6f, 1e-6f});
  const Container out = compress_series({c}, freq());
  const CheckpointSeries back = decompress_series(out);
  REQUIRE(back.size() == 1);
  // four distinct retained residuals fit in 15 centers: exact
  CHECK(back[0].tensors.at("w").weight.data == c.tensors.at("w").weight.data);
  // only v[0] exceeds beta * mean|v| = 5e-4
  CHECK(back[0].tensors.at("w").first_moment.data == std::vector<float>{1e-3f, 0, 0, 0});
  CHECK(back[0].tensors.at("w").second_moment.data == std::vector<float>{1e-6f, 0, 0, 0});
}

TEST_CASE("step size 2 references the checkpoint two back") {
  CodecConfig cfg = freq();
  cfg.step_size = 2;
  const std::vector<float> v(4, 0), m(4, 1e-6f);
  const CheckpointSeries series{one_tensor(1, {4}, {1, 2, 3, 4}, v, m), one_tensor(2, {4}, {9, 9, 9, 1}, v, m),
                                one_tensor(3, {4}, {1, 2, 3, 4}, v, m)};
  Encoder enc(cfg);
  CHECK(enc.reference().next_reference() == nullptr);
  enc.compress(series[0]);
  CHECK(enc.reference().next_reference() == nullptr);
  enc.compress(series[1]);
  REQUIRE(enc.reference().next_reference() != nullptr);
  CHECK(enc.reference().next_reference()->reconstruction.step == 1);
  const QuantizedCheckpoint q = enc.quantize(series[2]);
  CHECK(q.tensors.at("w").planes[0].symbols == std::vector<uint8_t>{0, 0, 0, 0});

  const Container c = compress_series(series, cfg);
  const CheckpointSeries back = decompress_series(c);
  CHECK(back[2].tensors.at("w").weight.data == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("identical checkpoints collapse") {
  const CheckpointSeries base = harness::random_series(4, 1, 1, 24);
  CheckpointSeries series;
  for (uint64_t s = 1; s <= 5; ++s) {
    Checkpoint c = base[0];
    c.step = s;
    series.push_back(c);
  }
  const auto rows = stats(compress_series(series, freq()));
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].payload_bytes < rows[0].payload_bytes);
    CHECK(rows[i].payload_bytes <= 8);
  }
}

TEST_CASE("corruption is detected") {
  const Container c = compress_series(harness::random_series(5), freq());
  Container bad = c;
  REQUIRE(!bad.records[0].payload.empty());
  bad.records[0].payload[0] ^= 0x40;
  CHECK(code_of([&] { decompress_series(bad); }) == ErrorCode::ChecksumMismatch);
  const VerifyReport report = verify(bad);
  CHECK(!report.ok);
  CHECK(report.failures.size() == 1);

  SUBCASE("structurally bad plane groups") {
    Container hdr = c;
    hdr.records[0].planes[1].role = Role::Weight;
    hdr.records[0].crc = record_crc(hdr.records[0]);
    CHECK(code_of([&] { decompress_series(hdr); }) == ErrorCode::HeaderCorrupt);
  }
  SUBCASE("payload damage with a matching checksum") {
    Container p = c;
    p.records[0].payload.resize(p.records[0].payload.size() / 2);
    p.records[0].crc = record_crc(p.records[0]);
    Decoder dec(p.config);
    Encoder enc(p.config);
    const Checkpoint out = [&] {
      try {
        return dec.decompress(p.records[0]);
      } catch (const Error& e) {
        CHECK((e.code() == ErrorCode::BitstreamExhausted || e.code() == ErrorCode::SymbolOutOfRange));
        return Checkpoint{};
      }
    }();
    (void)out;
    CHECK(!verify(p).ok);
  }
}

TEST_CASE("stats") {
  const CheckpointSeries series = harness::random_series(8, 5, 5);
  const Container c = compress_series(series, freq());
  const auto rows = stats(c);
  REQUIRE(rows.size() == series.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].step == series[i].step);
    CHECK(rows[i].raw_bytes == 12 * series[i].parameter_count());
    CHECK(rows[i].compressed_bytes == record_size(c.records[i]));
    CHECK(rows[i].ratio == doctest::Approx(double(rows[i].raw_bytes) / rows[i].compressed_bytes));
  }
  const Container again = recode(read_container(write_container(c)));
  CHECK(write_container(again) == write_container(c));
  CHECK(stats_csv(stats(again)) == stats_csv(rows));
  const std::string csv = stats_csv(rows);
  CHECK(csv.rfind("step,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(rows.size() + 1));
}

TEST_CASE("series validation errors") {
  CheckpointSeries s = harness::random_series(2, 3, 3);
  s[2].step = s[1].step;
  CHECK(code_of([&] { compress_series(s, freq()); }) == ErrorCode::StepMismatch);
  CheckpointSeries t = harness::random_series(2, 3, 3);
  t[1].tensors.erase(t[1].tensors.begin());
  CHECK(code_of([&] { compress_series(t, freq()); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("config validation") {
  CodecConfig c;
  c.bits = 1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
  c = CodecConfig{};
  c.step_size = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
  c = CodecConfig{};
  c.alpha = -1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
}
