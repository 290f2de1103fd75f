#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iaf/boxes.hpp"
#include "iaf/stream_output.hpp"

namespace iaf::fusion {

/// Learnable gate parameters; both strictly positive.
class GateParams {
 public:
  GateParams() = default;
  GateParams(double alpha, double beta);

  static GateParams from_log(double log_alpha, double log_beta);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  bool operator==(const GateParams&) const = default;

 private:
  double alpha_ = 0.1;
  double beta_ = 1.0;
};

/// Color-stream weight; the thermal weight is always 1 - color.
struct FusionWeights {
  double color = 0.5;
  double thermal() const { return 1.0 - color; }
};

enum class WeightingMode { Average, Hard01, IlluminationAware };

std::string to_string(WeightingMode m);
/// Accepts "average", "hard01", "ia".
WeightingMode weighting_from_string(const std::string& s);

/// w = iv / (1 + alpha * exp(-(iv - 0.5) / beta)), iv clamped to [0,1].
double gate(double iv, const GateParams& p);

struct GateDerivatives {
  double w;
  double dw_dlog_alpha;
  double dw_dlog_beta;
};

GateDerivatives gate_with_derivatives(double iv, const GateParams& p);

FusionWeights weights_for(WeightingMode mode, double iv, const GateParams& p);

/// Convex combination of two stream outputs over the same proposal set.
/// Throws std::invalid_argument if the proposal sets differ in length.
StreamOutput fuse(const StreamOutput& color, const StreamOutput& thermal, FusionWeights w);

struct FinalizeConfig {
  double score_threshold = 0.01;
  double nms_threshold = kDefaultNmsThreshold;
  std::size_t max_detections = 100;
  double image_width = 64.0;
  double image_height = 64.0;
};

/// Decodes person offsets against each proposal, clips to the image, drops
/// scores below threshold, and applies NMS.
std::vector<ScoredBox> finalize_detections(const StreamOutput& out, const FinalizeConfig& cfg);

// ---------------------------------------------------------------- phase 2

/// One labelled proposal with both streams' frozen outputs.
struct GateRoi {
  std::array<double, 2> s_color;
  std::array<double, 2> s_thermal;
  RegressionTarget t_color;
  RegressionTarget t_thermal;
  std::size_t label = 0;  // 0 background, 1 person
  RegressionTarget target;  // meaningful only when label == 1
};

struct GateImage {
  double iv = 0.5;
  std::vector<GateRoi> rois;
};

struct GateLoss {
  double loss = 0.0;
  double d_log_alpha = 0.0;
  double d_log_beta = 0.0;
};

/// Detection loss on the fused outputs of one image: mean cross-entropy of
/// the fused score vectors plus (optionally) smooth-L1 on the fused person
/// offsets of positive rois, normalized by the roi count.
GateLoss fused_detection_loss(const GateImage& img, const GateParams& p, bool include_box_loss = true);

struct GateTrainConfig {
  double lr = 0.01;
  std::size_t epochs = 3;
  std::size_t lr_drop_epoch = 2;
  double lr_drop_factor = 0.1;
  double momentum = 0.9;
  bool include_box_loss = true;
  std::uint64_t seed = 0;
};

struct GateTrainResult {
  GateParams params;
  /// Mean loss over the dataset before training and after each epoch.
  std::vector<double> epoch_losses;
  /// (epoch, step, lr, loss) per optimizer step.
  struct Step {
    std::size_t epoch;
    std::size_t step;
    double lr;
    double loss;
  };
  std::vector<Step> steps;
};

/// SGD over (log alpha, log beta) with one image per step.
GateTrainResult optimize_gate(std::span<const GateImage> data, const GateParams& init,
                              const GateTrainConfig& cfg);

/// "alpha = <v>\nbeta = <v>\n" with shortest round-trip decimals.
std::string serialize_gate(const GateParams& p);
GateParams parse_gate(const std::string& text, const std::string& source = "<memory>");
void write_gate(const std::filesystem::path& path, const GateParams& p);
GateParams read_gate(const std::filesystem::path& path);

}  // namespace iaf::fusion
