#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iaf/annotation.hpp"
#include "iaf/boxes.hpp"
#include "iaf/imaging.hpp"

namespace iaf::eval {

/// Reasonable-configuration filter and matching thresholds.
struct EvalConfig {
  double min_height = 55.0;
  std::set<Occlusion> allowed_occlusion{Occlusion::None, Occlusion::Partial};
  double match_iou = 0.5;
  double ignore_ioa = 0.5;
  /// Strictly increasing FPPI reference points for the log-average.
  std::vector<double> fppi_refs = default_fppi_refs();

  static std::vector<double> default_fppi_refs();  // 9 points, 10^-2 .. 10^0
};

/// A ground-truth box as seen by the matcher.
struct EvalGt {
  BBox bbox;
  bool ignore = false;
};

/// Flags every non-"person", too-short, over-occluded, or file-ignored entry.
std::vector<EvalGt> apply_reasonable(const std::vector<GtEntry>& gts, const EvalConfig& cfg);

enum class MatchOutcome { TruePositive, FalsePositive, MatchedIgnore };

struct FrameMatch {
  /// Indexed like the (score-sorted) detections passed in.
  std::vector<MatchOutcome> det_outcomes;
  /// Evaluable gts matched to a detection; ignore gts are always false.
  std::vector<bool> gt_matched;
  std::size_t evaluable_gts = 0;
};

/// Greedy matching. `dets` must be sorted by descending score: each detection
/// takes the highest-IoU unmatched evaluable gt with IoU >= match_iou, else is
/// absorbed by any ignore gt with IoA >= ignore_ioa, else counts as a false
/// positive.
FrameMatch match_frame(const std::vector<ScoredBox>& dets, const std::vector<EvalGt>& gts,
                       const EvalConfig& cfg);

struct Frame {
  std::vector<ScoredBox> dets;
  std::vector<EvalGt> gts;
  Condition condition = Condition::Unknown;
};

struct CurvePoint {
  double fppi;
  double miss_rate;

  bool operator==(const CurvePoint&) const = default;
};

/// Sweeps the score threshold over every distinct detection score (high to
/// low). Points therefore come out ordered by non-decreasing FPPI.
/// Throws std::invalid_argument when there are no frames or no evaluable gts.
std::vector<CurvePoint> curve(const std::vector<Frame>& frames, const EvalConfig& cfg);

inline constexpr double kMissRateFloor = 1e-10;

/// For each reference FPPI take the miss rate of the right-most point with
/// FPPI <= reference (1 if none), then the geometric mean.
double log_average_miss_rate(const std::vector<CurvePoint>& curve, const EvalConfig& cfg);

struct EvalResult {
  double lamr = 1.0;
  std::vector<CurvePoint> curve;
};

struct ConditionBreakdown {
  std::optional<EvalResult> all, day, night;
};

/// Evaluates the full frame list and the day/night subsets; a subset with
/// no evaluable gts is left empty.
ConditionBreakdown evaluate_by_condition(const std::vector<Frame>& frames, const EvalConfig& cfg);

/// "fppi,miss_rate" CSV with shortest round-trip decimals.
std::string curve_csv(const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> parse_curve_csv(const std::string& text, const std::string& source);

}  // namespace iaf::eval
