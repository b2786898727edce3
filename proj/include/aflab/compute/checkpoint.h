#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "aflab/compute/layers.h"

namespace aflab {

// Binary container:
//   "AFLAB" | u32 version | u32 n_meta | (str key, str value)* |
//   u32 n_tensors | (str name, u64 rows, u64 cols, f64[rows*cols])*
// where str = u32 length + bytes. Everything little-endian.
inline constexpr char kCheckpointMagic[] = "AFLAB";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* Find(const std::string& name) const;
  // Copies parameter values in list order.
  void AddParameters(const ParameterList& params);
  // Overwrites values of every listed parameter; missing names or shape
  // mismatches throw FormatError.
  void LoadInto(const ParameterList& params) const;
  bool HasPrefix(const std::string& prefix) const;
};

void WriteCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint ReadCheckpoint(const std::filesystem::path& path);

std::string SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

}  // namespace aflab
