#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "iaf/detector.hpp"
#include "iaf/eval.hpp"
#include "iaf/fusion.hpp"
#include "iaf/illumination.hpp"
#include "iaf/synth.hpp"

namespace iaf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of the pipeline. Defaults are scaled to the 64x64 synthetic
/// data; the library structs keep their full-scale defaults.
struct RunConfig {
  synth::SceneConfig scene;
  std::size_t train_frames = 400;
  std::size_t test_frames = 100;

  illumination::IanTrainConfig ian;
  detector::DetectorConfig detector;
  detector::DetectorTrainConfig detector_train;
  fusion::GateTrainConfig gate;
  double gate_alpha_init = 0.1;
  double gate_beta_init = 1.0;
  fusion::FinalizeConfig finalize;
  eval::EvalConfig eval;

  RunConfig();
};

/// Flat "key = value" text. Blank lines and '#' comments are skipped; unknown
/// keys, duplicates and values of the wrong type raise ConfigError naming
/// the key. Missing keys keep their defaults.
RunConfig parse_config(std::string_view text, const std::string& source = "<memory>");

/// Every key in a fixed order with shortest round-trip numbers.
std::string serialize_config(const RunConfig& cfg);

RunConfig load_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Sorted list of accepted keys.
std::vector<std::string> config_keys();

}  // namespace iaf
