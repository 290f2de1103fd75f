#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iaf/annotation.hpp"
#include "iaf/checkpoint.hpp"
#include "iaf/fusion.hpp"
#include "iaf/imaging.hpp"
#include "iaf/nn.hpp"
#include "iaf/stream_output.hpp"

namespace iaf::illumination {
class IanModel;
}

namespace iaf::detector {

enum class FusionArchitecture { InputFusion, EarlyFusion, HalfwayFusion, LateFusion, ScoreFusionI, ScoreFusionII };

/// "input", "early", "halfway", "late", "score1", "score2".
std::string to_string(FusionArchitecture a);
FusionArchitecture architecture_from_string(const std::string& s);

/// True for the architectures that keep two detection heads.
bool has_two_heads(FusionArchitecture a);

// ------------------------------------------------------------------ anchors

struct AnchorConfig {
  double stride = 8.0;
  std::vector<double> heights{24.0, 34.0, 48.0};
  /// height / width; 0.5 (wide boxes) is rejected.
  std::vector<double> ratios{1.0, 2.0};

  void validate() const;
  std::size_t per_cell() const { return heights.size() * ratios.size(); }
};

/// Row-major over cells, then heights, then ratios. Cell (i, j) anchors are
/// centered at ((j + 0.5) * stride, (i + 0.5) * stride).
std::vector<BBox> generate_anchors(std::size_t feat_h, std::size_t feat_w, const AnchorConfig& cfg);

struct SampleConfig {
  std::size_t anchors_per_image = 120;
  /// 1:5 positive:negative.
  double positive_fraction = 1.0 / 6.0;
  double positive_iou = 0.5;
  double negative_iou = 0.3;
  bool exclude_ignore = true;
  double ignore_ioa = 0.5;
  /// Partially occluded people count as training targets; heavy occlusion never does.
  bool include_occluded = true;
  double min_height = 50.0;
};

/// Ground truth split into training targets and regions never sampled.
struct TrainingBoxes {
  std::vector<BBox> targets;
  std::vector<BBox> ignore;
};

TrainingBoxes training_boxes(const std::vector<GtEntry>& gts, const SampleConfig& cfg);

struct AnchorSample {
  std::size_t index;
  std::size_t label;  // 0 negative, 1 positive
  RegressionTarget target;
};

/// Up to anchors_per_image anchors: at most positive_fraction of them
/// positive, the rest filled with negatives when available.
std::vector<AnchorSample> sample_anchors(const std::vector<BBox>& anchors, const TrainingBoxes& boxes,
                                         const SampleConfig& cfg, Rng& rng);

// ---------------------------------------------------------------- roi ops

struct RoiPoolResult {
  Tensor output;  // out x out x C
  /// Flat feature index of each output's maximum; -1 for empty bins.
  std::vector<std::ptrdiff_t> argmax;
};

/// Max pooling of the roi's footprint [x/stride, (x+w)/stride) into an
/// out x out grid. Bin b covers cells floor(start_b) .. ceil(end_b) - 1,
/// clipped to the map; empty bins yield 0. Throws std::invalid_argument when
/// the footprint misses the map entirely.
RoiPoolResult roi_pool_indexed(const Tensor& features, const BBox& roi, double stride, std::size_t out);
Tensor roi_pool(const Tensor& features, const BBox& roi, double stride, std::size_t out = 6);
/// Scatters dy into dfeatures along the recorded argmax.
void roi_pool_backward(const RoiPoolResult& pooled, const Tensor& dy, Tensor& dfeatures);

/// Box-filled foreground mask at feature resolution: cell (i, j) is 1 when
/// its center ((j + 0.5) s, (i + 0.5) s) lies inside any box.
Tensor seg_target(const std::vector<BBox>& boxes, std::size_t feat_h, std::size_t feat_w, double stride);
/// Same rule on the out x out bin centers of a roi.
Tensor roi_seg_target(const std::vector<BBox>& boxes, const BBox& roi, std::size_t out);

struct RoiSampleConfig {
  std::size_t rois_per_image = 64;
  double foreground_fraction = 0.25;
  double foreground_iou = 0.5;
  double background_iou = 0.5;
  /// Append the training boxes themselves to the candidate set.
  bool add_ground_truth = true;
};

struct RoiBatch {
  std::vector<BBox> rois;
  std::vector<std::size_t> labels;
  std::vector<RegressionTarget> targets;  // zero for background
};

RoiBatch sample_rois(const std::vector<BBox>& proposals, const TrainingBoxes& boxes,
                     const RoiSampleConfig& cfg, const SampleConfig& sample_cfg, Rng& rng);

struct ProposalConfig {
  double nms_threshold = 0.7;
  std::size_t top_k = 300;
  double min_size = 2.0;
};

// ------------------------------------------------------------------- model

struct DetectorConfig {
  FusionArchitecture arch = FusionArchitecture::ScoreFusionII;
  std::size_t image_size = 64;
  std::array<std::size_t, 3> channels{16, 32, 64};
  std::size_t rpn_channels = 64;
  std::size_t fc_units = 128;
  std::size_t roi_size = 6;
  AnchorConfig anchors;
  SampleConfig sample;
  RoiSampleConfig roi_sample;
  ProposalConfig proposals;

  void validate() const;
  std::size_t feature_size() const;
};

/// Seven loss weights: rpn, detection (color, thermal), image segmentation
/// (color, thermal), roi segmentation (color, thermal).
struct LossWeights {
  std::array<double, 7> lambda{1, 1, 1, 1, 1, 1, 1};
};

inline constexpr std::array<const char*, 7> kLossTermNames{
    "rpn", "det_color", "det_thermal", "seg_color", "seg_thermal", "seg_roi_color", "seg_roi_thermal"};

struct LossBreakdown {
  double total = 0.0;
  std::array<double, 7> terms{};  // unweighted
};

class DetectorModel;

/// Sampled supervision for one image, fixed so the loss is a smooth
/// function of the parameters.
struct ImageTargets {
  std::vector<std::vector<AnchorSample>> rpn;  // per proposal network
  std::vector<RoiBatch> heads;                 // per detection head
  std::vector<std::vector<Tensor>> roi_masks;  // per head, per roi
  std::vector<Tensor> seg;                     // per final feature map
};

struct DetectorOutput {
  /// Shared proposal set (empty for ScoreFusionI, whose streams propose separately).
  std::vector<BBox> proposals;
  /// Outputs of each detection head before any fusion.
  std::vector<StreamOutput> streams;
  /// The architecture's own final output.
  StreamOutput combined;
};

class DetectorModel {
 public:
  explicit DetectorModel(const DetectorConfig& cfg = {});
  DetectorModel(const DetectorModel& other);
  DetectorModel& operator=(const DetectorModel& other);
  DetectorModel(DetectorModel&&) noexcept;
  DetectorModel& operator=(DetectorModel&&) noexcept;
  ~DetectorModel();

  const DetectorConfig& config() const { return cfg_; }
  FusionArchitecture architecture() const { return cfg_.arch; }

  void init(Rng& rng);
  nn::ParamList params();
  nn::ConstParamList params() const;

  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }

  DetectorOutput forward(const ImagePair& pair) const;

  /// Runs one inference pass to obtain proposals, then samples targets.
  ImageTargets make_targets(const ImagePair& pair, const std::vector<GtEntry>& gts, Rng& rng) const;

  /// Seven-term loss for fixed targets; with backprop it accumulates
  /// gradients into params().
  LossBreakdown joint_loss(const ImagePair& pair, const ImageTargets& targets, const LossWeights& w,
                           bool backprop);

  /// make_targets + joint_loss sharing a single forward pass.
  LossBreakdown train_step(const ImagePair& pair, const std::vector<GtEntry>& gts, const LossWeights& w,
                           Rng& rng);

  /// Both heads' raw outputs on caller-chosen rois (two-head models only).
  std::vector<StreamOutput> head_outputs(const ImagePair& pair, const std::vector<BBox>& rois) const;

  Checkpoint to_checkpoint() const;
  static DetectorModel from_checkpoint(const Checkpoint& ckpt);

  struct Impl;

 private:
  DetectorConfig cfg_;
  bool trained_ = false;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper around model.forward.
DetectorOutput detector_forward(const DetectorModel& model, const ImagePair& pair);

/// Final detections for one image. Two-head score fusion II models fuse
/// their streams with the requested weighting; other architectures use
/// their own combined output and only accept the average weighting.
std::vector<ScoredBox> detect(const DetectorModel& model, const ImagePair& pair, fusion::WeightingMode mode,
                              double iv, const fusion::GateParams& gate, const fusion::FinalizeConfig& fin);

// ---------------------------------------------------------------- training

struct TrainSample {
  ImagePair pair;
  std::vector<GtEntry> annotations;
};

struct DetectorTrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 6;
  std::size_t lr_drop_epoch = 4;
  double lr_drop_factor = 0.1;
  LossWeights weights;
  std::uint64_t seed = 0;
};

struct DetectorStep {
  std::size_t epoch;
  std::size_t step;
  double lr;
  LossBreakdown loss;
};

struct DetectorTrainResult {
  DetectorModel model;
  std::vector<DetectorStep> steps;
  /// Mean of each unweighted term per epoch (index 0 is epoch 1).
  std::vector<LossBreakdown> epoch_means;
};

/// Image-centric SGD over all trunk parameters, one image per step.
DetectorTrainResult train_detector(const std::vector<TrainSample>& data, const DetectorTrainConfig& cfg,
                                   const DetectorConfig& model_cfg);

void save_detector(const std::filesystem::path& path, const DetectorModel& model);
DetectorModel load_detector(const std::filesystem::path& path);

/// Phase-2 data: per image, the illumination value and both frozen heads'
/// outputs on sampled, labelled proposals.
std::vector<fusion::GateImage> collect_gate_samples(const DetectorModel& model,
                                                    const illumination::IanModel& ian,
                                                    const std::vector<TrainSample>& data, std::uint64_t seed);

}  // namespace iaf::detector
