#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace iaf::cli {

/// Provenance record written next to a command's outputs.
struct RunManifest {
  std::string command;
  std::string config;  // serialized RunConfig
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version;
  double duration_seconds = 0.0;

  std::string to_json() const;
};

/// Fills duration from `start`, then writes `<dir>/<command>_manifest.json`
/// atomically. Returns the path.
std::filesystem::path finish_manifest(RunManifest& m, const std::filesystem::path& dir,
                                      std::chrono::steady_clock::time_point start);

}  // namespace iaf::cli
