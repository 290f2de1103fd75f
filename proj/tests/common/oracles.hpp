#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. They follow the written rules directly and avoid the library code
// paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "iaf/boxes.hpp"
#include "iaf/eval.hpp"
#include "iaf/random.hpp"

namespace oracle {

inline double area_iou(const iaf::BBox& a, const iaf::BBox& b) {
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x(), b.x()));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y()));
  const double inter = iw * ih;
  return inter / (a.w() * a.h() + b.w() * b.h() - inter);
}

inline double area_ioa(const iaf::BBox& det, const iaf::BBox& region) {
  const double iw = std::max(0.0, std::min(det.right(), region.right()) - std::max(det.x(), region.x()));
  const double ih = std::max(0.0, std::min(det.bottom(), region.bottom()) - std::max(det.y(), region.y()));
  return iw * ih / (det.w() * det.h());
}

/// Kept indices: box i survives iff no surviving box of higher priority
/// (higher score, or equal score and lower index) overlaps it above tau.
inline std::vector<std::size_t> greedy_nms(const std::vector<iaf::ScoredBox>& d, double tau) {
  const std::size_t n = d.size();
  auto before = [&](std::size_t a, std::size_t b) {
    return d[a].score > d[b].score || (d[a].score == d[b].score && a < b);
  };
  std::vector<int> state(n, -1);  // -1 unknown, 0 suppressed, 1 kept
  std::function<bool(std::size_t)> kept = [&](std::size_t i) -> bool {
    if (state[i] >= 0) return state[i] == 1;
    bool ok = true;
    for (std::size_t j = 0; j < n && ok; ++j) {
      if (j != i && before(j, i) && kept(j) && area_iou(d[i].box, d[j].box) > tau) ok = false;
    }
    state[i] = ok ? 1 : 0;
    return ok;
  };
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (kept(i)) out.push_back(i);
  }
  std::sort(out.begin(), out.end(), before);
  return out;
}

/// Greedy matcher written from the rule: walk detections in order; a
/// detection takes the best-IoU free evaluable gt (lowest index on ties) if
/// that IoU reaches the match threshold, else any ignore gt it covers by IoA.
inline iaf::eval::FrameMatch greedy_match(const std::vector<iaf::ScoredBox>& dets,
                                          const std::vector<iaf::eval::EvalGt>& gts, double match_iou,
                                          double ignore_ioa) {
  iaf::eval::FrameMatch m;
  m.gt_matched.assign(gts.size(), false);
  for (const auto& g : gts) m.evaluable_gts += g.ignore ? 0 : 1;
  for (const auto& det : dets) {
    std::vector<std::size_t> cand;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (!gts[g].ignore && !m.gt_matched[g] && area_iou(det.box, gts[g].bbox) >= match_iou) cand.push_back(g);
    }
    if (!cand.empty()) {
      std::size_t best = cand[0];
      for (std::size_t g : cand) {
        if (area_iou(det.box, gts[g].bbox) > area_iou(det.box, gts[best].bbox)) best = g;
      }
      m.gt_matched[best] = true;
      m.det_outcomes.push_back(iaf::eval::MatchOutcome::TruePositive);
      continue;
    }
    const bool absorbed = std::any_of(gts.begin(), gts.end(), [&](const iaf::eval::EvalGt& g) {
      return g.ignore && area_ioa(det.box, g.bbox) >= ignore_ioa;
    });
    m.det_outcomes.push_back(absorbed ? iaf::eval::MatchOutcome::MatchedIgnore
                                      : iaf::eval::MatchOutcome::FalsePositive);
  }
  return m;
}

/// Random box inside a `span` x `span` canvas. Coordinates sit on a 0.5 grid
/// so exact IoU ties and threshold hits occur often.
inline iaf::BBox random_box(iaf::Rng& rng, double span = 40.0, double max_side = 16.0) {
  const double w = 1.0 + std::floor(iaf::uniform(rng, 0.0, 2.0 * max_side)) * 0.5;
  const double h = 1.0 + std::floor(iaf::uniform(rng, 0.0, 2.0 * max_side)) * 0.5;
  const double x = std::floor(iaf::uniform(rng, 0.0, 2.0 * span)) * 0.5;
  const double y = std::floor(iaf::uniform(rng, 0.0, 2.0 * span)) * 0.5;
  return iaf::BBox(x, y, w, h);
}

/// Central-difference relative error of an analytic scalar derivative.
inline double rel_err(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle
