#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "letter/core/tensor.hpp"

namespace letter {

/// Versioned binary container used for tokenizer and recommender checkpoints.
///
/// Layout (all integers little-endian):
///   8 bytes   magic "LETTERCK"
///   u32       container version
///   u64       header length, then that many bytes of UTF-8 JSON
///   u64       tensor count
///   per tensor: u32 name length, name bytes, u32 rank, u64 extents[rank],
///               f64 values (row-major, IEEE-754 little-endian)
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header;
  std::map<std::string, Tensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace letter
