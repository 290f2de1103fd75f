#pragma once

// Small models and scenes that keep finite-difference checks fast.

#include <utility>

#include "iaf/detector.hpp"
#include "iaf/random.hpp"
#include "iaf/synth.hpp"

namespace tiny {

inline iaf::synth::SceneConfig scene32(std::uint64_t seed = 3) {
  iaf::synth::SceneConfig s;
  s.image_size = 32;
  s.min_height = 12;
  s.max_height = 28;
  s.pedestrians_mean = 2.0;
  s.seed = seed;
  return s;
}

inline iaf::detector::DetectorConfig detector32(iaf::detector::FusionArchitecture arch) {
  iaf::detector::DetectorConfig c;
  c.arch = arch;
  c.image_size = 32;
  c.channels = {3, 4, 4};
  c.rpn_channels = 4;
  c.fc_units = 6;
  c.roi_size = 2;
  c.anchors.heights = {14.0, 24.0};
  c.sample.min_height = 10.0;
  c.sample.anchors_per_image = 12;
  c.roi_sample.rois_per_image = 6;
  c.proposals.top_k = 20;
  return c;
}

/// Zero-initialized biases put ReLU inputs exactly on the kink in flat image
/// regions, where finite differences are meaningless. Moves them off zero.
inline void jitter_biases(const iaf::nn::ParamList& params, std::uint64_t seed) {
  iaf::Rng rng(seed);
  for (iaf::nn::Param* p : params) {
    const std::string& n = p->name;
    if (n.size() < 4 || n.compare(n.size() - 4, 4, "bias") != 0) continue;
    for (double& v : p->value.storage()) v = iaf::uniform(rng, 0.05, 0.15);
  }
}

/// A frame with at least one trainable pedestrian.
inline iaf::synth::Frame frame_with_people(const iaf::synth::SceneConfig& s, iaf::Condition cond) {
  for (std::uint64_t i = 0;; ++i) {
    iaf::synth::Frame f = iaf::synth::generate_frame(s, i);
    if (f.pair.condition != cond) continue;
    for (const auto& g : f.annotations) {
      if (g.label == iaf::Label::Person && !g.ignore && g.occlusion == iaf::Occlusion::None) return f;
    }
  }
}

}  // namespace tiny
