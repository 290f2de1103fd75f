#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "iaf/nn.hpp"

namespace iaf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary checkpoint layout (all integers and floats little-endian):
///
///   "IAFCKPT\n"                          8-byte magic
///   u32 version
///   u32 header count, then per entry: u32 len + key bytes, u32 len + value bytes
///   u32 tensor count, then per tensor: u32 len + name bytes, u32 rank, u64 dims[rank]
///   float64 payload of every tensor, in manifest order
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Tensor>> tensors;

  /// Header value or CheckpointError naming the missing key.
  const std::string& require(const std::string& key) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(std::map<std::string, std::string> header, const nn::ConstParamList& params);

/// Copies tensors into `params`, requiring the manifest to match names and
/// shapes one-to-one and in order.
void load_params(const Checkpoint& ckpt, const nn::ParamList& params);

}  // namespace iaf
