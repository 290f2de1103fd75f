#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "iaf/checkpoint.hpp"
#include "iaf/imaging.hpp"
#include "iaf/nn.hpp"

namespace iaf::illumination {

/// Mean pixel value over all channels, in [0,1].
double key_estimate(const Image& color);

/// (90th - 10th nearest-rank percentile) / 255, in [0,1].
double range_estimate(const Image& color);

/// Softmax class indices; the day probability is the illumination value.
inline constexpr std::size_t kNightClass = 0;
inline constexpr std::size_t kDayClass = 1;

struct IanConfig {
  std::size_t input_size = 56;
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 32;
  std::size_t fc1_units = 256;
  double dropout = 0.5;
};

/// conv3x3-relu-pool, conv3x3-relu-pool, fc(256)-relu-dropout, fc(2).
class IanModel {
 public:
  explicit IanModel(const IanConfig& cfg = {});

  const IanConfig& config() const { return cfg_; }

  void init(Rng& rng);

  /// Inference-mode logits for a prepared input tensor.
  std::array<double, 2> logits(const Tensor& input) const;

  /// Day probability for any-size color image (resized internally).
  double infer(const Image& color) const;

  /// Train-mode forward + backward for one sample; accumulates gradients
  /// scaled by `grad_scale` and returns the sample loss.
  double accumulate_gradients(const Tensor& input, std::size_t label, Rng& rng, double grad_scale);

  /// Inference-mode loss (no dropout), for logging and gradient checks.
  double loss(const Tensor& input, std::size_t label) const;

  nn::ParamList params();
  nn::ConstParamList params() const;

  Checkpoint to_checkpoint() const;
  static IanModel from_checkpoint(const Checkpoint& ckpt);

  nn::Linear& fc2() { return fc2_; }

 private:
  IanConfig cfg_;
  nn::Conv2d conv1_, conv2_;
  nn::Linear fc1_, fc2_;
};

/// Resize to the model input size; samples scaled to [0,1] then centered on 0.
Tensor ian_input(const Image& color, std::size_t input_size = 56);

struct IanTrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 2;
  std::uint64_t seed = 0;
};

struct LabeledImage {
  Image color;
  Condition condition;
};

struct IanStep {
  std::size_t epoch;
  std::size_t step;
  double loss;  // mean train-mode loss over the minibatch
};

struct IanTrainResult {
  IanModel model;
  /// Inference-mode mean loss before training (index 0) and after each epoch.
  std::vector<double> epoch_losses;
  std::vector<IanStep> steps;
};

/// Adam on the softmax day/night loss; throws std::invalid_argument unless
/// both day and night samples are present.
IanTrainResult ian_train(const std::vector<LabeledImage>& data, const IanTrainConfig& cfg,
                         const IanConfig& model_cfg = {});

void save_ian(const std::filesystem::path& path, const IanModel& model);
IanModel load_ian(const std::filesystem::path& path);

}  // namespace iaf::illumination
