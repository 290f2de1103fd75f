#include "iaf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iaf/fileutil.hpp"

namespace iaf::eval {

std::vector<double> EvalConfig::default_fppi_refs() {
  std::vector<double> refs(9);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    refs[i] = std::pow(10.0, -2.0 + 2.0 * static_cast<double>(i) / 8.0);
  }
  return refs;
}

std::vector<EvalGt> apply_reasonable(const std::vector<GtEntry>& gts, const EvalConfig& cfg) {
  std::vector<EvalGt> out;
  out.reserve(gts.size());
  for (const GtEntry& g : gts) {
    const bool evaluable = g.label == Label::Person && !g.ignore &&
                           g.bbox.h() >= cfg.min_height &&
                           cfg.allowed_occlusion.contains(g.occlusion);
    out.push_back({g.bbox, !evaluable});
  }
  return out;
}

FrameMatch match_frame(const std::vector<ScoredBox>& dets, const std::vector<EvalGt>& gts,
                       const EvalConfig& cfg) {
  for (std::size_t i = 1; i < dets.size(); ++i) {
    if (dets[i].score > dets[i - 1].score) {
      throw std::invalid_argument("match_frame: detections must be sorted by descending score");
    }
  }
  FrameMatch m;
  m.det_outcomes.assign(dets.size(), MatchOutcome::FalsePositive);
  m.gt_matched.assign(gts.size(), false);
  m.evaluable_gts = static_cast<std::size_t>(
      std::count_if(gts.begin(), gts.end(), [](const EvalGt& g) { return !g.ignore; }));

  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = cfg.match_iou;
    std::optional<std::size_t> best_gt;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].ignore || m.gt_matched[g]) continue;
      const double o = iou(dets[d].box, gts[g].bbox);
      if (o >= best && (!best_gt || o > best)) {
        best = o;
        best_gt = g;
      }
    }
    if (best_gt) {
      m.gt_matched[*best_gt] = true;
      m.det_outcomes[d] = MatchOutcome::TruePositive;
      continue;
    }
    for (const EvalGt& g : gts) {
      if (g.ignore && ioa(dets[d].box, g.bbox) >= cfg.ignore_ioa) {
        m.det_outcomes[d] = MatchOutcome::MatchedIgnore;
        break;
      }
    }
  }
  return m;
}

std::vector<CurvePoint> curve(const std::vector<Frame>& frames, const EvalConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("curve: no frames");

  struct Scored {
    double score;
    MatchOutcome outcome;
  };
  std::vector<Scored> all;
  std::size_t total_gts = 0;
  for (const Frame& f : frames) {
    std::vector<ScoredBox> sorted = f.dets;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    const FrameMatch m = match_frame(sorted, f.gts, cfg);
    total_gts += m.evaluable_gts;
    for (std::size_t i = 0; i < sorted.size(); ++i) all.push_back({sorted[i].score, m.det_outcomes[i]});
  }
  if (total_gts == 0) throw std::invalid_argument("curve: zero evaluable ground-truth boxes");

  const double n_frames = static_cast<double>(frames.size());
  const double n_gts = static_cast<double>(total_gts);
  if (all.empty()) return {{0.0, 1.0}};

  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<CurvePoint> points;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].outcome == MatchOutcome::TruePositive) ++tp;
    if (all[i].outcome == MatchOutcome::FalsePositive) ++fp;
    const bool last_of_score = i + 1 == all.size() || all[i + 1].score != all[i].score;
    if (last_of_score) {
      points.push_back({static_cast<double>(fp) / n_frames, 1.0 - static_cast<double>(tp) / n_gts});
    }
  }
  return points;
}

double log_average_miss_rate(const std::vector<CurvePoint>& pts, const EvalConfig& cfg) {
  if (pts.empty()) throw std::invalid_argument("log_average_miss_rate: empty curve");
  if (cfg.fppi_refs.empty()) throw std::invalid_argument("log_average_miss_rate: no reference points");
  double log_sum = 0.0;
  for (double ref : cfg.fppi_refs) {
    double mr = 1.0;
    for (const CurvePoint& p : pts) {
      if (p.fppi <= ref) mr = p.miss_rate;
    }
    log_sum += std::log(std::max(mr, kMissRateFloor));
  }
  return std::exp(log_sum / static_cast<double>(cfg.fppi_refs.size()));
}

namespace {

std::optional<EvalResult> try_evaluate(const std::vector<Frame>& frames, const EvalConfig& cfg) {
  if (frames.empty()) return std::nullopt;
  const bool any_gt = std::any_of(frames.begin(), frames.end(), [](const Frame& f) {
    return std::any_of(f.gts.begin(), f.gts.end(), [](const EvalGt& g) { return !g.ignore; });
  });
  if (!any_gt) return std::nullopt;
  EvalResult r;
  r.curve = curve(frames, cfg);
  r.lamr = log_average_miss_rate(r.curve, cfg);
  return r;
}

}  // namespace

ConditionBreakdown evaluate_by_condition(const std::vector<Frame>& frames, const EvalConfig& cfg) {
  ConditionBreakdown out;
  std::vector<Frame> day, night;
  for (const Frame& f : frames) {
    if (f.condition == Condition::Day) day.push_back(f);
    if (f.condition == Condition::Night) night.push_back(f);
  }
  out.all = try_evaluate(frames, cfg);
  out.day = try_evaluate(day, cfg);
  out.night = try_evaluate(night, cfg);
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& pts) {
  std::string out = "fppi,miss_rate\n";
  for (const CurvePoint& p : pts) out += format_double(p.fppi) + "," + format_double(p.miss_rate) + "\n";
  return out;
}

std::vector<CurvePoint> parse_curve_csv(const std::string& text, const std::string& source) {
  const auto lines = split_lines(text, source);
  if (lines.empty() || trim(lines[0]) != "fppi,miss_rate") {
    throw ParseError(source + ":1: expected header 'fppi,miss_rate'");
  }
  std::vector<CurvePoint> pts;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw ParseError(source + ":" + std::to_string(i + 1) + ": expected 'fppi,miss_rate'");
    }
    try {
      pts.push_back({parse_double(line.substr(0, comma)), parse_double(line.substr(comma + 1))});
    } catch (const std::invalid_argument& e) {
      throw ParseError(source + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return pts;
}

}  // namespace iaf::eval
