#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace iaf {

/// Axis-aligned box in pixel space: (x, y) is the top-left corner.
/// Construction rejects non-finite coordinates and non-positive sizes.
class BBox {
 public:
  /// Unit box at the origin.
  BBox() : x_(0.0), y_(0.0), w_(1.0), h_(1.0) {}
  BBox(double x, double y, double w, double h);

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double right() const { return x_ + w_; }
  double bottom() const { return y_ + h_; }
  double cx() const { return x_ + 0.5 * w_; }
  double cy() const { return y_ + 0.5 * h_; }
  double area() const { return w_ * h_; }

  bool operator==(const BBox&) const = default;

 private:
  double x_, y_, w_, h_;
};

/// Box from corner coordinates; nullopt when the extent is empty.
std::optional<BBox> box_from_corners(double x1, double y1, double x2, double y2);

/// Clip to [0,width] x [0,height]; nullopt if nothing remains.
std::optional<BBox> clip_box(const BBox& b, double width, double height);

double intersection_area(const BBox& a, const BBox& b);

/// Intersection over union.
double iou(const BBox& a, const BBox& b);

/// Intersection over the area of `det` (ignore-region overlap).
double ioa(const BBox& det, const BBox& region);

struct ScoredBox {
  BBox box;
  double score;

  bool operator==(const ScoredBox&) const = default;
};

inline constexpr double kDefaultNmsThreshold = 0.3;

/// Greedy NMS. Returns indices into `dets` of the kept boxes, ordered by
/// descending score; equal scores keep the lower index first.
std::vector<std::size_t> nms_indices(std::span<const ScoredBox> dets, double iou_threshold);

std::vector<ScoredBox> nms(std::span<const ScoredBox> dets,
                           double iou_threshold = kDefaultNmsThreshold);

/// Faster R-CNN center/size regression parameterization.
struct RegressionTarget {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;

  std::array<double, 4> as_array() const { return {tx, ty, tw, th}; }
  static RegressionTarget from_array(const std::array<double, 4>& a) {
    return {a[0], a[1], a[2], a[3]};
  }
  bool operator==(const RegressionTarget&) const = default;
};

inline constexpr double kScaleClamp = 4.0;

RegressionTarget encode(const BBox& anchor, const BBox& gt);

/// Inverse of encode; tw and th are clamped to +-clamp before exponentiation.
BBox decode(const BBox& anchor, const RegressionTarget& t, double clamp = kScaleClamp);

/// A single-class (person) detection: background/person probabilities and the
/// person-class regression offsets relative to `bbox`.
struct Detection {
  BBox bbox;
  std::array<double, 2> scores;
  RegressionTarget offsets;

  double person_score() const { return scores[1]; }
};

}  // namespace iaf
