#pragma once

#include <array>
#include <vector>

#include "iaf/boxes.hpp"
#include "iaf/tensor.hpp"

namespace iaf {

/// Per-proposal outputs of one detection head over a proposal set.
/// scores[i] = (background, person), offsets[i] relative to proposals[i].
struct StreamOutput {
  std::vector<BBox> proposals;
  std::vector<std::array<double, 2>> scores;
  std::vector<RegressionTarget> offsets;
  /// Image-level segmentation probabilities (feature resolution); may be empty.
  Tensor segmentation;

  std::size_t size() const { return proposals.size(); }
};

}  // namespace iaf
