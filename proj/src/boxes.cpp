#include "iaf/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace iaf {

BBox::BBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
    throw std::invalid_argument("BBox: non-finite coordinate");
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("BBox: width and height must be positive (got w=" +
                                std::to_string(w) + ", h=" + std::to_string(h) + ")");
  }
}

std::optional<BBox> box_from_corners(double x1, double y1, double x2, double y2) {
  if (!(x2 > x1) || !(y2 > y1)) return std::nullopt;
  return BBox(x1, y1, x2 - x1, y2 - y1);
}

std::optional<BBox> clip_box(const BBox& b, double width, double height) {
  return box_from_corners(std::clamp(b.x(), 0.0, width), std::clamp(b.y(), 0.0, height),
                          std::clamp(b.right(), 0.0, width), std::clamp(b.bottom(), 0.0, height));
}

double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double ioa(const BBox& det, const BBox& region) {
  return intersection_area(det, region) / det.area();
}

std::vector<std::size_t> nms_indices(std::span<const ScoredBox> dets, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw std::invalid_argument("nms: iou_threshold must lie in (0,1)");
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<std::size_t> keep;
  std::vector<bool> suppressed(dets.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && iou(dets[i].box, dets[j].box) > iou_threshold) suppressed[j] = true;
    }
  }
  return keep;
}

std::vector<ScoredBox> nms(std::span<const ScoredBox> dets, double iou_threshold) {
  std::vector<ScoredBox> out;
  for (std::size_t i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
  return out;
}

RegressionTarget encode(const BBox& anchor, const BBox& gt) {
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h())};
}

BBox decode(const BBox& anchor, const RegressionTarget& t, double clamp) {
  const double w = anchor.w() * std::exp(std::clamp(t.tw, -clamp, clamp));
  const double h = anchor.h() * std::exp(std::clamp(t.th, -clamp, clamp));
  const double cx = anchor.cx() + t.tx * anchor.w();
  const double cy = anchor.cy() + t.ty * anchor.h();
  return BBox(cx - 0.5 * w, cy - 0.5 * h, w, h);
}

}  // namespace iaf
