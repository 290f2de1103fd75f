#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "iaf/annotation.hpp"
#include "iaf/dataio.hpp"
#include "iaf/imaging.hpp"
#include "iaf/random.hpp"

namespace iaf::synth {

/// Scene generator settings. Intensities are 8-bit levels.
struct SceneConfig {
  std::size_t image_size = 64;
  double pedestrians_mean = 1.6;
  /// Integer pixel heights; widths are height / 2.
  std::size_t min_height = 20;
  std::size_t max_height = 50;
  double night_fraction = 0.5;

  double color_noise = 6.0;
  double thermal_noise = 6.0;

  // Background level ranges by condition. Day and night color ranges must not
  // overlap; that gap is what makes the illumination label learnable.
  double day_key_min = 120.0;
  double day_key_max = 190.0;
  double night_key_min = 15.0;
  double night_key_max = 50.0;
  double thermal_background_min = 40.0;
  double thermal_background_max = 80.0;

  /// Day-time color contrast magnitude of pedestrians.
  double color_contrast_min = 60.0;
  double color_contrast_max = 100.0;
  /// Chance a figure is darker than the daylit background.
  double color_dark_prob = 1.0;
  /// Thermal contrast, identical by day and night.
  double thermal_contrast_min = 70.0;
  double thermal_contrast_max = 110.0;

  /// Pedestrian-shaped clutter visible in only one modality. Color clutter
  /// appears by day only; thermal clutter at the same rate in both conditions.
  double color_distractors_mean = 0.15;
  double thermal_distractors_mean = 0.8;

  /// Chance of one "people" group (annotated as an ignore region) per frame.
  double ignore_region_prob = 0.15;
  /// Chance a pedestrian is partially (2/3) or heavily (1/3) occluded.
  double occlusion_prob = 0.15;

  std::uint64_t seed = 7;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Frame {
  ImagePair pair;
  std::vector<GtEntry> annotations;
};

/// Renders one scene. The condition is an input; all other randomness comes
/// from `rng`.
Frame generate_pair(const SceneConfig& cfg, Rng& rng, Condition condition);

/// Frame `index` of the dataset seeded by cfg.seed: draws its condition and
/// renders it from an independent stream, so frames can be built in any order.
Frame generate_frame(const SceneConfig& cfg, std::uint64_t index);

/// Pixel footprint of a rendered pedestrian box: samples whose soft mask is at
/// least one half. Used to check annotation tightness.
std::vector<std::uint8_t> render_footprint(std::size_t image_size, const BBox& box);

/// Writes images, annotations and manifest.txt under `out_dir`. Train frames
/// use indices [0, n_train), test frames [n_train, n_train + n_test).
Manifest generate_dataset(const SceneConfig& cfg, std::size_t n_train, std::size_t n_test,
                          const std::filesystem::path& out_dir);

}  // namespace iaf::synth
