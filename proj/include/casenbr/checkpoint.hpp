#pragma once

// Flat binary container for named tensors:
//
//   "CASECKPT" u32 version
//   u64 manifest_bytes, manifest (JSON text)
//   u64 tensor_count
//   per tensor: u32 name_bytes, name, u8 element_bytes (4 or 8),
//               u64 rows, u64 cols, rows·cols little-endian IEEE values
//
// All integers are little-endian. Round-trips are bit-exact.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "casenbr/params.hpp"

namespace casenbr {

struct StoredTensor {
  std::string name;
  std::uint8_t element_bytes = 4;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<std::uint8_t> payload;  // little-endian raw values
};

struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<StoredTensor> tensors;
};

template <typename Real>
Checkpoint make_checkpoint(const ParamSet<Real>& params, nlohmann::json manifest);

/// Overwrites values of `params` (names and shapes must match); converts
/// precision if the stored element size differs.
template <typename Real>
void load_into(const Checkpoint& ckpt, ParamSet<Real>& params);

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes, e.g. for comparing two runs.
std::string checkpoint_bytes(const Checkpoint& ckpt);

}  // namespace casenbr
