#include "iaf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "iaf/fileutil.hpp"
#include "iaf/nn.hpp"
#include "iaf/random.hpp"

namespace iaf::fusion {

GateParams::GateParams(double alpha, double beta) : alpha_(alpha), beta_(beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw std::invalid_argument("GateParams: alpha and beta must be finite and positive");
  }
}

GateParams GateParams::from_log(double log_alpha, double log_beta) {
  return GateParams(std::exp(log_alpha), std::exp(log_beta));
}

std::string to_string(WeightingMode m) {
  switch (m) {
    case WeightingMode::Average: return "average";
    case WeightingMode::Hard01: return "hard01";
    case WeightingMode::IlluminationAware: return "ia";
  }
  return "average";
}

WeightingMode weighting_from_string(const std::string& s) {
  if (s == "average") return WeightingMode::Average;
  if (s == "hard01") return WeightingMode::Hard01;
  if (s == "ia") return WeightingMode::IlluminationAware;
  throw std::invalid_argument("unknown weighting mode '" + s + "' (expected average, hard01 or ia)");
}

GateDerivatives gate_with_derivatives(double iv, const GateParams& p) {
  iv = std::clamp(iv, 0.0, 1.0);
  const double a = p.alpha() * std::exp(-(iv - 0.5) / p.beta());
  const double w = iv / (1.0 + a);
  const double k = w * a / (1.0 + a);
  return {w, -k, -k * (iv - 0.5) / p.beta()};
}

double gate(double iv, const GateParams& p) { return gate_with_derivatives(iv, p).w; }

FusionWeights weights_for(WeightingMode mode, double iv, const GateParams& p) {
  switch (mode) {
    case WeightingMode::Average: return {0.5};
    case WeightingMode::Hard01: return {iv > 0.5 ? 1.0 : 0.0};
    case WeightingMode::IlluminationAware: return {gate(iv, p)};
  }
  return {0.5};
}

StreamOutput fuse(const StreamOutput& color, const StreamOutput& thermal, FusionWeights w) {
  if (color.size() != thermal.size() || color.scores.size() != color.size() ||
      thermal.scores.size() != thermal.size() || color.offsets.size() != color.size() ||
      thermal.offsets.size() != thermal.size()) {
    throw std::invalid_argument("fuse: stream outputs cover different proposal sets (" +
                                std::to_string(color.size()) + " vs " +
                                std::to_string(thermal.size()) + ")");
  }
  const double wc = w.color, wt = w.thermal();
  StreamOutput out;
  out.proposals = color.proposals;
  out.scores.resize(color.size());
  out.offsets.resize(color.size());
  for (std::size_t i = 0; i < color.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) out.scores[i][k] = wc * color.scores[i][k] + wt * thermal.scores[i][k];
    const auto tc = color.offsets[i].as_array(), tt = thermal.offsets[i].as_array();
    std::array<double, 4> t{};
    for (std::size_t k = 0; k < 4; ++k) t[k] = wc * tc[k] + wt * tt[k];
    out.offsets[i] = RegressionTarget::from_array(t);
  }
  return out;
}

std::vector<ScoredBox> finalize_detections(const StreamOutput& out, const FinalizeConfig& cfg) {
  std::vector<ScoredBox> cands;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = std::clamp(out.scores[i][1], 0.0, 1.0);
    if (s < cfg.score_threshold) continue;
    const auto clipped = clip_box(decode(out.proposals[i], out.offsets[i]), cfg.image_width, cfg.image_height);
    if (!clipped) continue;
    cands.push_back({*clipped, s});
  }
  auto kept = nms(cands, cfg.nms_threshold);
  if (kept.size() > cfg.max_detections) kept.resize(cfg.max_detections);
  return kept;
}

// ---------------------------------------------------------------- phase 2

GateLoss fused_detection_loss(const GateImage& img, const GateParams& p, bool include_box_loss) {
  GateLoss out;
  if (img.rois.empty()) return out;
  const GateDerivatives g = gate_with_derivatives(img.iv, p);
  const double w = g.w;
  const double inv_n = 1.0 / static_cast<double>(img.rois.size());
  double dl_dw = 0.0;
  for (const GateRoi& r : img.rois) {
    const double sc = r.s_color[r.label], st = r.s_thermal[r.label];
    const double s = w * sc + (1.0 - w) * st;
    out.loss -= std::log(std::max(s, nn::kLogFloor)) * inv_n;
    if (s > nn::kLogFloor) dl_dw -= (sc - st) / s * inv_n;
    if (include_box_loss && r.label == 1) {
      const auto tc = r.t_color.as_array(), tt = r.t_thermal.as_array();
      std::array<double, 4> tf{};
      for (std::size_t k = 0; k < 4; ++k) tf[k] = w * tc[k] + (1.0 - w) * tt[k];
      const auto target = r.target.as_array();
      const nn::LossGrad sl = nn::smooth_l1(tf, target);
      out.loss += sl.loss * inv_n;
      for (std::size_t k = 0; k < 4; ++k) dl_dw += sl.grad[k] * (tc[k] - tt[k]) * inv_n;
    }
  }
  out.d_log_alpha = dl_dw * g.dw_dlog_alpha;
  out.d_log_beta = dl_dw * g.dw_dlog_beta;
  return out;
}

namespace {

double mean_loss(std::span<const GateImage> data, const GateParams& p, bool box) {
  double sum = 0.0;
  for (const GateImage& img : data) sum += fused_detection_loss(img, p, box).loss;
  return sum / static_cast<double>(data.size());
}

}  // namespace

GateTrainResult optimize_gate(std::span<const GateImage> data, const GateParams& init,
                              const GateTrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("optimize_gate: empty dataset");
  GateTrainResult result;
  double log_alpha = std::log(init.alpha()), log_beta = std::log(init.beta());
  double v_alpha = 0.0, v_beta = 0.0;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.epoch_losses.push_back(mean_loss(data, init, cfg.include_box_loss));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch >= cfg.lr_drop_epoch ? cfg.lr * cfg.lr_drop_factor : cfg.lr;
    shuffle(order, rng);
    for (std::size_t idx : order) {
      const GateParams p = GateParams::from_log(log_alpha, log_beta);
      const GateLoss l = fused_detection_loss(data[idx], p, cfg.include_box_loss);
      v_alpha = cfg.momentum * v_alpha + l.d_log_alpha;
      v_beta = cfg.momentum * v_beta + l.d_log_beta;
      log_alpha -= lr * v_alpha;
      log_beta -= lr * v_beta;
      result.steps.push_back({epoch + 1, ++step, lr, l.loss});
    }
    result.epoch_losses.push_back(
        mean_loss(data, GateParams::from_log(log_alpha, log_beta), cfg.include_box_loss));
  }
  result.params = GateParams::from_log(log_alpha, log_beta);
  return result;
}

std::string serialize_gate(const GateParams& p) {
  return "alpha = " + format_double(p.alpha()) + "\nbeta = " + format_double(p.beta()) + "\n";
}

GateParams parse_gate(const std::string& text, const std::string& source) {
  std::optional<double> alpha, beta;
  const auto lines = split_lines(text, source);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(source + ":" + std::to_string(i + 1) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    double v = 0.0;
    try {
      v = parse_double(line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw ParseError(source + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    if (key == "alpha") {
      alpha = v;
    } else if (key == "beta") {
      beta = v;
    } else {
      throw ParseError(source + ":" + std::to_string(i + 1) + ": unknown key '" + key + "'");
    }
  }
  if (!alpha || !beta) throw ParseError(source + ": gate record needs both alpha and beta");
  try {
    return GateParams(*alpha, *beta);
  } catch (const std::invalid_argument& e) {
    throw ParseError(source + ": " + e.what());
  }
}

void write_gate(const std::filesystem::path& path, const GateParams& p) {
  write_file_atomic(path, serialize_gate(p));
}

GateParams read_gate(const std::filesystem::path& path) { return parse_gate(read_file(path), path.string()); }

}  // namespace iaf::fusion
