#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iaf/config.hpp"
#include "iaf/dataio.hpp"
#include "iaf/detector.hpp"
#include "iaf/eval.hpp"

namespace iaf::cli {

/// Bad flags or flag combinations; main maps it to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputDirEnv = "IAF_OUTPUT_DIR";

/// --out when given, else $IAF_OUTPUT_DIR, else a UsageError.
std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& out);

/// --config file when given, else the built-in defaults.
RunConfig resolve_config(const std::optional<std::filesystem::path>& path);

/// Throws std::runtime_error("missing <what>: <path>") unless the file exists.
void require_artifact(const std::filesystem::path& path, const std::string& what);

/// Frames of one manifest split with images and annotations loaded.
struct Split {
  DatasetLayout layout;
  std::vector<FrameRecord> frames;
  std::vector<detector::TrainSample> samples;
};

Split load_split(const std::filesystem::path& data_dir, const std::string& set);

// ------------------------------------------------------------- commands
// Each returns the list of files it wrote (run manifest last).

struct SynthArgs {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};
std::vector<std::filesystem::path> run_synth(const SynthArgs& a);

struct TrainArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arch;  // train-detector only
};
std::vector<std::filesystem::path> run_train_ian(const TrainArgs& a);
std::vector<std::filesystem::path> run_train_detector(const TrainArgs& a);

struct GateArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> ian;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};
std::vector<std::filesystem::path> run_optimize_gate(const GateArgs& a);

struct DetectArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> model;
  std::string weighting = "average";
  std::optional<std::filesystem::path> ian;
  std::optional<std::filesystem::path> gate;
  std::optional<std::string> arch;
  std::string set = "test";
  /// Replaces the gate output for every image (ia weighting only).
  std::optional<double> force_weight;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
};
std::vector<std::filesystem::path> run_detect(const DetectArgs& a);

struct EvalArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> detections;
  std::string set = "test";
  bool self_check = false;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
};
std::vector<std::filesystem::path> run_eval(const EvalArgs& a);

struct CompareArgs {
  std::filesystem::path data;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> ian;
  std::optional<std::filesystem::path> gate;
  std::string set = "test";
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
};

struct CompareRow {
  std::string mode;
  eval::ConditionBreakdown result;
};

/// Rows sorted by reasonable-all lamr, best first (ties keep mode order).
std::vector<CompareRow> rank_rows(std::vector<CompareRow> rows);
std::string format_compare_table(const std::vector<CompareRow>& rows);

std::vector<std::filesystem::path> run_compare(const CompareArgs& a, std::string* table = nullptr);

struct PlotArgs {
  std::vector<std::filesystem::path> curves;
  std::vector<std::string> labels;
  std::optional<std::filesystem::path> out;
  std::string name = "curves.svg";
};
std::vector<std::filesystem::path> run_plot(const PlotArgs& a);

/// Log-log miss-rate plot, FPPI 1e-2..1e1 on x and miss rate 1e-2..1 on y.
/// Each curve becomes one polyline with one point per row; values outside
/// the axes are pinned to the border.
std::string render_svg(const std::vector<std::vector<eval::CurvePoint>>& curves,
                       const std::vector<std::string>& labels);

}  // namespace iaf::cli
