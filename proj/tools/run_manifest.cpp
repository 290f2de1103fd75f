#include "run_manifest.hpp"

#include <json.hpp>

#include "iaf/fileutil.hpp"

namespace iaf::cli {

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["duration_seconds"] = duration_seconds;
  j["config"] = config;
  return j.dump(2) + "\n";
}

std::filesystem::path finish_manifest(RunManifest& m, const std::filesystem::path& dir,
                                      std::chrono::steady_clock::time_point start) {
  m.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto path = dir / (m.command + "_manifest.json");
  write_file_atomic(path, m.to_json());
  return path;
}

}  // namespace iaf::cli
