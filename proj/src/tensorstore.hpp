#pragma once

// Framework-independent checkpoint representation and the CKPT file format.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ckz {

enum class Role : uint8_t { Weight = 0, FirstMoment = 1, SecondMoment = 2 };

inline constexpr Role kRoles[] = {Role::Weight, Role::FirstMoment, Role::SecondMoment};

const char* role_name(Role role) noexcept;

using Dims = std::vector<uint32_t>;

/// Number of elements described by `dims`; rank 0 is a scalar.
size_t element_count(const Dims& dims) noexcept;

struct Tensor {
  std::string name;
  Role role = Role::Weight;
  Dims dims;
  std::vector<float> data;

  /// Checks length against dims and second moments for negativity.
  /// Throws ShapeMismatch / InvalidArgument / NonFiniteInput.
  static Tensor make(std::string name, Role role, Dims dims, std::vector<float> data);

  size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Weight plus the two optimizer moments for one parameter tensor.
struct TensorTriple {
  Tensor weight;
  Tensor first_moment;
  Tensor second_moment;

  const Dims& dims() const noexcept { return weight.dims; }
  const Tensor& get(Role role) const;
  Tensor& get(Role role);

  friend bool operator==(const TensorTriple&, const TensorTriple&) = default;
};

struct Checkpoint {
  uint64_t step = 0;
  /// std::map keeps names in ascending lexicographic order, which is the
  /// global traversal order of the codec.
  std::map<std::string, TensorTriple> tensors;

  /// Adds a validated triple. Throws InvalidArgument on duplicate names.
  void add(const std::string& name, Dims dims, std::vector<float> weight,
           std::vector<float> first_moment, std::vector<float> second_moment);

  /// Total number of scalars per role.
  size_t parameter_count() const noexcept;

  /// Throws if any triple breaks the type invariants.
  void validate() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

using CheckpointSeries = std::vector<Checkpoint>;

std::vector<uint8_t> write_checkpoint(const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::span<const uint8_t> bytes);

Checkpoint load_checkpoint(const std::string& path);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

struct SeriesViolation {
  enum class Kind { MissingTensor, ExtraTensor, ShapeMismatch, NonIncreasingStep, InvalidTensor };
  Kind kind;
  size_t index;  // position of the offending checkpoint in the series
  std::string message;
};

/// Reports every name/shape/step violation; an empty result means valid.
std::vector<SeriesViolation> validate_series(const CheckpointSeries& series);

}  // namespace ckz
