#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace jsi {

// Single-file parameter container:
//   "JSIC" | u32 version | u32 len | kind | u32 n_blocks |
//   n_blocks x (u32 len | name | u64 count | count x f64)
// All integers and doubles are little-endian.
struct ParamBlock {
  std::string name;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string kind;
  std::vector<ParamBlock> blocks;

  const ParamBlock& block(std::string_view name) const;
  const ParamBlock* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace jsi
