#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qtl/tensor.hpp"

namespace qtl {

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Weight dump tagged with the architecture it belongs to.
///
/// On disk (all integers little-endian):
///   "QTLCKPT\0" | u32 version | str kind | str fingerprint | u64 seed |
///   str regime | u32 count | count x (str name | u32 rank | rank x u64 dim |
///   f64 values...)
/// where str is a u32 byte length followed by the bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;  ///< "extractor" or "model"
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::string regime;
  std::vector<NamedTensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws CheckpointError on a malformed or foreign file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qtl
