#include "tensorstore.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "byteio.hpp"
#include "error.hpp"

namespace ckz {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};
constexpr uint16_t kVersion = 1;

std::string dims_string(const Dims& dims) {
  std::string s = "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

}  // namespace

const char* role_name(Role role) noexcept {
  switch (role) {
    case Role::Weight: return "weight";
    case Role::FirstMoment: return "first_moment";
    case Role::SecondMoment: return "second_moment";
  }
  return "unknown";
}

size_t element_count(const Dims& dims) noexcept {
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return n;
}

Tensor Tensor::make(std::string name, Role role, Dims dims, std::vector<float> data) {
  for (uint32_t d : dims) {
    if (d == 0) throw Error(ErrorCode::ShapeMismatch, name + ": zero-sized dimension");
  }
  if (data.size() != element_count(dims)) {
    throw Error(ErrorCode::ShapeMismatch, name + ": " + std::to_string(data.size()) +
                                              " values for dims " + dims_string(dims));
  }
  for (float x : data) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteInput, name + ": non-finite value");
    if (role == Role::SecondMoment && x < 0.0f) {
      throw Error(ErrorCode::InvalidArgument, name + ": negative second moment");
    }
  }
  return Tensor{std::move(name), role, std::move(dims), std::move(data)};
}

const Tensor& TensorTriple::get(Role role) const {
  switch (role) {
    case Role::Weight: return weight;
    case Role::FirstMoment: return first_moment;
    case Role::SecondMoment: return second_moment;
  }
  throw Error(ErrorCode::InvalidArgument, "bad role");
}

Tensor& TensorTriple::get(Role role) {
  return const_cast<Tensor&>(std::as_const(*this).get(role));
}

void Checkpoint::add(const std::string& name, Dims dims, std::vector<float> weight,
                     std::vector<float> first_moment, std::vector<float> second_moment) {
  if (name.empty() || name.size() > 0xFFFF) {
    throw Error(ErrorCode::InvalidArgument, "tensor name must be 1..65535 bytes");
  }
  if (dims.size() > 0xFF) throw Error(ErrorCode::InvalidArgument, name + ": rank above 255");
  if (tensors.count(name)) throw Error(ErrorCode::InvalidArgument, "duplicate tensor " + name);
  TensorTriple t{Tensor::make(name, Role::Weight, dims, std::move(weight)),
                 Tensor::make(name, Role::FirstMoment, dims, std::move(first_moment)),
                 Tensor::make(name, Role::SecondMoment, dims, std::move(second_moment))};
  tensors.emplace(name, std::move(t));
}

size_t Checkpoint::parameter_count() const noexcept {
  size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.weight.size();
  return n;
}

void Checkpoint::validate() const {
  for (const auto& [name, t] : tensors) {
    for (Role r : kRoles) {
      const Tensor& x = t.get(r);
      if (x.dims != t.dims()) throw Error(ErrorCode::ShapeMismatch, name + ": dims differ within triple");
      Tensor::make(name, r, x.dims, x.data);
    }
  }
}

std::vector<uint8_t> write_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u16(kVersion);
  w.u64(ckpt.step);
  w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.u16(static_cast<uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<uint8_t>(t.dims().size()));
    for (uint32_t d : t.dims()) w.u32(d);
    w.f32s(t.weight.data);
    w.f32s(t.first_moment.data);
    w.f32s(t.second_moment.data);
  }
  return w.take();
}

Checkpoint read_checkpoint(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a CKPT container");
  }
  r.bytes(4);
  const uint16_t version = r.u16();
  if (version != kVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "CKPT version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.step = r.u64();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    const uint8_t rank = r.u8();
    Dims dims(rank);
    for (auto& d : dims) d = r.u32();
    const size_t n = element_count(dims);
    // The format carries no explicit payload length; on the last triple a
    // remainder that splits into three equal f32 planes of the wrong size is
    // a shape error, anything else is truncation.
    if (i + 1 == count && r.remaining() != 12 * n && r.remaining() % 12 == 0) {
      throw Error(ErrorCode::ShapeMismatch, name + ": dims " + dims_string(dims) + " but " +
                                                std::to_string(r.remaining() / 12) +
                                                " payload reals per plane");
    }
    std::vector<float> w(n), v(n), m(n);
    r.f32s(w);
    r.f32s(v);
    r.f32s(m);
    if (ckpt.tensors.count(name)) throw Error(ErrorCode::ShapeMismatch, "duplicate tensor " + name);
    for (uint32_t d : dims) {
      if (d == 0) throw Error(ErrorCode::ShapeMismatch, name + ": zero-sized dimension");
    }
    ckpt.add(name, std::move(dims), std::move(w), std::move(v), std::move(m));
  }
  if (!r.done()) throw Error(ErrorCode::ShapeMismatch, "trailing bytes after last tensor");
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) { return read_checkpoint(read_file(path)); }

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file(path, write_checkpoint(ckpt));
}

std::vector<SeriesViolation> validate_series(const CheckpointSeries& series) {
  using Kind = SeriesViolation::Kind;
  std::vector<SeriesViolation> out;
  for (size_t i = 0; i < series.size(); ++i) {
    try {
      series[i].validate();
    } catch (const Error& e) {
      out.push_back({Kind::InvalidTensor, i, e.what()});
    }
    if (i == 0) continue;
    const Checkpoint& first = series.front();
    const Checkpoint& cur = series[i];
    if (cur.step <= series[i - 1].step) {
      out.push_back({Kind::NonIncreasingStep, i,
                     "non-increasing step " + std::to_string(series[i - 1].step) + " -> " +
                         std::to_string(cur.step)});
    }
    for (const auto& [name, t] : first.tensors) {
      auto it = cur.tensors.find(name);
      if (it == cur.tensors.end()) {
        out.push_back({Kind::MissingTensor, i, "missing tensor " + name});
      } else if (it->second.dims() != t.dims()) {
        out.push_back({Kind::ShapeMismatch, i,
                       "shape mismatch " + name + ": " + dims_string(t.dims()) + " vs " +
                           dims_string(it->second.dims())});
      }
    }
    for (const auto& [name, _] : cur.tensors) {
      if (!first.tensors.count(name)) out.push_back({Kind::ExtraTensor, i, "extra tensor " + name});
    }
  }
  return out;
}

}  // namespace ckz
