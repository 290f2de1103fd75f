#include "iaf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "iaf/fileutil.hpp"
#include "iaf/illumination.hpp"

namespace iaf::detector {

namespace {

constexpr std::array<const char*, 6> kArchNames{"input", "early", "halfway", "late", "score1", "score2"};

// Snaps bin edges that land within rounding error of a cell boundary.
constexpr double kBinEps = 1e-9;

}  // namespace

std::string to_string(FusionArchitecture a) { return kArchNames[static_cast<std::size_t>(a)]; }

FusionArchitecture architecture_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kArchNames.size(); ++i) {
    if (s == kArchNames[i]) return static_cast<FusionArchitecture>(i);
  }
  throw std::invalid_argument("unknown fusion architecture '" + s +
                              "' (expected input, early, halfway, late, score1 or score2)");
}

bool has_two_heads(FusionArchitecture a) {
  return a == FusionArchitecture::ScoreFusionI || a == FusionArchitecture::ScoreFusionII;
}

// ------------------------------------------------------------------ anchors

void AnchorConfig::validate() const {
  if (!(stride > 0.0)) throw std::invalid_argument("anchors: stride must be positive");
  if (heights.empty() || ratios.empty()) throw std::invalid_argument("anchors: need at least one height and ratio");
  for (double h : heights)
    if (!(h > 0.0)) throw std::invalid_argument("anchors: heights must be positive");
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("anchors: ratios must be positive");
    if (std::abs(r - 0.5) < 1e-12) throw std::invalid_argument("anchors: ratio 0.5 (wide boxes) is not supported");
  }
}

std::vector<BBox> generate_anchors(std::size_t feat_h, std::size_t feat_w, const AnchorConfig& cfg) {
  cfg.validate();
  if (feat_h == 0 || feat_w == 0) throw std::invalid_argument("generate_anchors: feature map must be non-empty");
  std::vector<BBox> out;
  out.reserve(feat_h * feat_w * cfg.per_cell());
  for (std::size_t i = 0; i < feat_h; ++i)
    for (std::size_t j = 0; j < feat_w; ++j) {
      const double cx = (static_cast<double>(j) + 0.5) * cfg.stride;
      const double cy = (static_cast<double>(i) + 0.5) * cfg.stride;
      for (double h : cfg.heights)
        for (double r : cfg.ratios) {
          const double w = h / r;
          out.emplace_back(cx - 0.5 * w, cy - 0.5 * h, w, h);
        }
    }
  return out;
}

TrainingBoxes training_boxes(const std::vector<GtEntry>& gts, const SampleConfig& cfg) {
  TrainingBoxes out;
  for (const GtEntry& g : gts) {
    const bool occ_ok =
        g.occlusion == Occlusion::None || (cfg.include_occluded && g.occlusion == Occlusion::Partial);
    if (g.label == Label::Person && !g.ignore && g.bbox.h() >= cfg.min_height && occ_ok) {
      out.targets.push_back(g.bbox);
    } else {
      out.ignore.push_back(g.bbox);
    }
  }
  return out;
}

namespace {

bool hits_ignore(const BBox& b, const std::vector<BBox>& ignore, double thr) {
  return std::any_of(ignore.begin(), ignore.end(), [&](const BBox& r) { return ioa(b, r) > thr; });
}

// Highest IoU over `targets` and the first index achieving it.
std::pair<double, std::size_t> best_match(const BBox& b, const std::vector<BBox>& targets) {
  double best = 0.0;
  std::size_t idx = 0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double v = iou(b, targets[k]);
    if (v > best) {
      best = v;
      idx = k;
    }
  }
  return {best, idx};
}

std::size_t quota(std::size_t total, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(total) * fraction + 1e-9));
}

}  // namespace

std::vector<AnchorSample> sample_anchors(const std::vector<BBox>& anchors, const TrainingBoxes& boxes,
                                         const SampleConfig& cfg, Rng& rng) {
  std::vector<AnchorSample> pos, neg;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (cfg.exclude_ignore && hits_ignore(anchors[a], boxes.ignore, cfg.ignore_ioa)) continue;
    const auto [best, k] = best_match(anchors[a], boxes.targets);
    if (!boxes.targets.empty() && best >= cfg.positive_iou) {
      pos.push_back({a, 1, encode(anchors[a], boxes.targets[k])});
    } else if (best < cfg.negative_iou) {
      neg.push_back({a, 0, {}});
    }
  }
  shuffle(pos, rng);
  shuffle(neg, rng);
  const std::size_t n_pos = std::min(pos.size(), quota(cfg.anchors_per_image, cfg.positive_fraction));
  const std::size_t n_neg = std::min(neg.size(), cfg.anchors_per_image - n_pos);
  std::vector<AnchorSample> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_neg));
  return out;
}

// ---------------------------------------------------------------- roi ops

RoiPoolResult roi_pool_indexed(const Tensor& features, const BBox& roi, double stride, std::size_t out) {
  if (features.rank() != 3) throw ShapeError("roi_pool: expected an HxWxC feature map, got " + shape_string(features.shape()));
  if (out == 0 || !(stride > 0.0)) throw std::invalid_argument("roi_pool: output size and stride must be positive");
  const std::size_t H = features.dim(0), W = features.dim(1), C = features.dim(2);
  const double fx0 = roi.x() / stride, fx1 = roi.right() / stride;
  const double fy0 = roi.y() / stride, fy1 = roi.bottom() / stride;
  if (fx1 <= 0.0 || fy1 <= 0.0 || fx0 >= static_cast<double>(W) || fy0 >= static_cast<double>(H)) {
    throw std::invalid_argument("roi_pool: roi lies outside the feature map");
  }
  const double bw = (fx1 - fx0) / static_cast<double>(out);
  const double bh = (fy1 - fy0) / static_cast<double>(out);

  auto span = [&](double start, double len, std::size_t b, std::size_t limit) {
    const double s = start + len * static_cast<double>(b);
    const double e = start + len * static_cast<double>(b + 1);
    auto lo = static_cast<std::ptrdiff_t>(std::floor(s + kBinEps));
    auto hi = static_cast<std::ptrdiff_t>(std::ceil(e - kBinEps));
    hi = std::max(hi, lo + 1);
    lo = std::clamp<std::ptrdiff_t>(lo, 0, static_cast<std::ptrdiff_t>(limit));
    hi = std::clamp<std::ptrdiff_t>(hi, 0, static_cast<std::ptrdiff_t>(limit));
    return std::pair<std::ptrdiff_t, std::ptrdiff_t>{lo, hi};
  };

  RoiPoolResult r{Tensor({out, out, C}), std::vector<std::ptrdiff_t>(out * out * C, -1)};
  const double* f = features.ptr();
  for (std::size_t by = 0; by < out; ++by) {
    const auto [y0, y1] = span(fy0, bh, by, H);
    for (std::size_t bx = 0; bx < out; ++bx) {
      const auto [x0, x1] = span(fx0, bw, bx, W);
      const std::size_t o = (by * out + bx) * C;
      if (y0 >= y1 || x0 >= x1) continue;
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t arg = -1;
        for (std::ptrdiff_t y = y0; y < y1; ++y)
          for (std::ptrdiff_t x = x0; x < x1; ++x) {
            const auto idx = (y * static_cast<std::ptrdiff_t>(W) + x) * static_cast<std::ptrdiff_t>(C) +
                             static_cast<std::ptrdiff_t>(c);
            if (f[idx] > best) {
              best = f[idx];
              arg = idx;
            }
          }
        r.output[o + c] = best;
        r.argmax[o + c] = arg;
      }
    }
  }
  return r;
}

Tensor roi_pool(const Tensor& features, const BBox& roi, double stride, std::size_t out) {
  return roi_pool_indexed(features, roi, stride, out).output;
}

void roi_pool_backward(const RoiPoolResult& pooled, const Tensor& dy, Tensor& dfeatures) {
  dy.expect_shape(pooled.output.shape(), "roi_pool gradient");
  for (std::size_t i = 0; i < pooled.argmax.size(); ++i) {
    if (pooled.argmax[i] >= 0) dfeatures[static_cast<std::size_t>(pooled.argmax[i])] += dy[i];
  }
}

namespace {

bool inside_any(const std::vector<BBox>& boxes, double px, double py) {
  return std::any_of(boxes.begin(), boxes.end(), [&](const BBox& b) {
    return px >= b.x() && px < b.right() && py >= b.y() && py < b.bottom();
  });
}

}  // namespace

Tensor seg_target(const std::vector<BBox>& boxes, std::size_t feat_h, std::size_t feat_w, double stride) {
  Tensor m({feat_h, feat_w});
  for (std::size_t i = 0; i < feat_h; ++i)
    for (std::size_t j = 0; j < feat_w; ++j)
      m[i * feat_w + j] = inside_any(boxes, (static_cast<double>(j) + 0.5) * stride,
                                     (static_cast<double>(i) + 0.5) * stride)
                              ? 1.0
                              : 0.0;
  return m;
}

Tensor roi_seg_target(const std::vector<BBox>& boxes, const BBox& roi, std::size_t out) {
  Tensor m({out, out});
  const double bw = roi.w() / static_cast<double>(out), bh = roi.h() / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i)
    for (std::size_t j = 0; j < out; ++j)
      m[i * out + j] = inside_any(boxes, roi.x() + (static_cast<double>(j) + 0.5) * bw,
                                  roi.y() + (static_cast<double>(i) + 0.5) * bh)
                           ? 1.0
                           : 0.0;
  return m;
}

RoiBatch sample_rois(const std::vector<BBox>& proposals, const TrainingBoxes& boxes, const RoiSampleConfig& cfg,
                     const SampleConfig& sample_cfg, Rng& rng) {
  std::vector<BBox> cands = proposals;
  if (cfg.add_ground_truth) cands.insert(cands.end(), boxes.targets.begin(), boxes.targets.end());
  std::vector<std::pair<std::size_t, std::size_t>> fg;  // (candidate, target)
  std::vector<std::size_t> bg;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto [best, k] = best_match(cands[i], boxes.targets);
    if (!boxes.targets.empty() && best >= cfg.foreground_iou) {
      fg.emplace_back(i, k);
    } else if (best < cfg.background_iou) {
      if (sample_cfg.exclude_ignore && hits_ignore(cands[i], boxes.ignore, sample_cfg.ignore_ioa)) continue;
      bg.push_back(i);
    }
  }
  shuffle(fg, rng);
  shuffle(bg, rng);
  const std::size_t n_fg = std::min(fg.size(), quota(cfg.rois_per_image, cfg.foreground_fraction));
  const std::size_t n_bg = std::min(bg.size(), cfg.rois_per_image - n_fg);
  RoiBatch batch;
  for (std::size_t i = 0; i < n_fg; ++i) {
    const BBox& r = cands[fg[i].first];
    batch.rois.push_back(r);
    batch.labels.push_back(1);
    batch.targets.push_back(encode(r, boxes.targets[fg[i].second]));
  }
  for (std::size_t i = 0; i < n_bg; ++i) {
    batch.rois.push_back(cands[bg[i]]);
    batch.labels.push_back(0);
    batch.targets.push_back({});
  }
  return batch;
}

// ------------------------------------------------------------------- model

void DetectorConfig::validate() const {
  anchors.validate();
  if (image_size == 0 || image_size % 8 != 0) throw std::invalid_argument("detector: image_size must be a positive multiple of 8");
  if (anchors.stride != 8.0) throw std::invalid_argument("detector: the backbone has stride 8; anchors.stride must be 8");
  for (std::size_t c : channels)
    if (c == 0) throw std::invalid_argument("detector: channel counts must be positive");
  if (rpn_channels == 0 || fc_units == 0 || roi_size == 0) {
    throw std::invalid_argument("detector: rpn_channels, fc_units and roi_size must be positive");
  }
  if (proposals.top_k == 0) throw std::invalid_argument("detector: proposal top_k must be positive");
}

std::size_t DetectorConfig::feature_size() const { return image_size / 8; }

namespace {

struct ConvBlock {
  nn::Conv2d a, b;
};

struct BlockCache {
  Tensor x, a, ra, b, rb;
};

ConvBlock make_block(const std::string& name, std::size_t in, std::size_t out) {
  return {nn::Conv2d(name + ".conv1", in, out, 3), nn::Conv2d(name + ".conv2", out, out, 3)};
}

Tensor block_forward(const ConvBlock& blk, const Tensor& x, BlockCache& c) {
  c.x = x;
  c.a = blk.a.forward(x);
  c.ra = nn::relu_forward(c.a);
  c.b = blk.b.forward(c.ra);
  c.rb = nn::relu_forward(c.b);
  return nn::maxpool2x2_forward(c.rb);
}

Tensor block_backward(ConvBlock& blk, const BlockCache& c, const Tensor& dout) {
  Tensor d = nn::maxpool2x2_backward(c.rb, dout);
  d = nn::relu_backward(c.b, d);
  d = blk.b.backward(c.ra, d);
  d = nn::relu_backward(c.a, d);
  return blk.a.backward(c.x, d);
}

struct RpnNet {
  nn::Conv2d conv, cls, reg;
  std::vector<std::size_t> maps;
};

struct RoiHead {
  std::vector<nn::Linear> fc1;  // one per pooled map
  nn::Linear cls, reg;
  std::vector<std::size_t> maps;
};

void gaussian_init(nn::Param& p, double stddev, Rng& rng) {
  for (double& v : p.value.data()) v = stddev * standard_normal(rng);
}

Tensor prepare_input(const Image& img) {
  Tensor t = to_tensor(img);
  for (double& v : t.data()) v -= 0.5;
  return t;
}

Tensor concat_maps(const std::vector<Tensor>& maps, const std::vector<std::size_t>& which) {
  Tensor out = maps[which[0]];
  for (std::size_t k = 1; k < which.size(); ++k) out = concat_channels(out, maps[which[k]]);
  return out;
}

// Rows [0, n) of a {n, a+b} tensor split by columns.
std::pair<Tensor, Tensor> split_columns(const Tensor& t, std::size_t a) {
  const std::size_t n = t.dim(0), w = t.dim(1);
  Tensor l({n, a}), r({n, w - a});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(t.ptr() + i * w, t.ptr() + i * w + a, l.ptr() + i * a);
    std::copy(t.ptr() + i * w + a, t.ptr() + (i + 1) * w, r.ptr() + i * (w - a));
  }
  return {l, r};
}

Tensor concat_columns(const Tensor& l, const Tensor& r) {
  const std::size_t n = l.dim(0), a = l.dim(1), b = r.dim(1);
  Tensor t({n, a + b});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(l.ptr() + i * a, l.ptr() + (i + 1) * a, t.ptr() + i * (a + b));
    std::copy(r.ptr() + i * b, r.ptr() + (i + 1) * b, t.ptr() + i * (a + b) + a);
  }
  return t;
}

}  // namespace

struct DetectorModel::Impl {
  std::vector<ConvBlock> color, thermal, shared;
  std::optional<nn::Conv2d> nin;
  std::vector<RpnNet> rpns;
  std::vector<RoiHead> heads;
  std::vector<nn::Linear> seg;  // 1x1 conv per final map
  std::vector<BBox> anchors;

  // ---- forward state for one image
  struct Trunk {
    std::vector<BlockCache> color, thermal, shared;
    Tensor nin_in, nin_pre;
    std::vector<Tensor> maps;
  };
  struct RpnState {
    Tensor in, pre, hidden, cls, reg;
  };
  struct HeadState {
    std::vector<BBox> rois;
    std::vector<std::vector<RoiPoolResult>> pooled;  // per input map, per roi
    std::vector<Tensor> flat;                        // per input map: {n, S*S*C}
    std::vector<Tensor> pre;                         // per input map: {n, F}
    Tensor hidden, cls, reg;
  };
};

namespace {

using Impl = DetectorModel::Impl;

void build(Impl& m, const DetectorConfig& cfg) {
  const auto [c0, c1, c2] = cfg.channels;
  const std::size_t A = cfg.anchors.per_cell();
  const std::size_t pooled = cfg.roi_size * cfg.roi_size;
  std::size_t n_maps = 1;
  switch (cfg.arch) {
    case FusionArchitecture::InputFusion:
      m.shared = {make_block("shared.block1", 4, c0), make_block("shared.block2", c0, c1),
                  make_block("shared.block3", c1, c2)};
      break;
    case FusionArchitecture::EarlyFusion:
      m.color = {make_block("color.block1", 3, c0)};
      m.thermal = {make_block("thermal.block1", 1, c0)};
      m.nin = nn::Conv2d("nin", 2 * c0, c0, 1);
      m.shared = {make_block("shared.block2", c0, c1), make_block("shared.block3", c1, c2)};
      break;
    case FusionArchitecture::HalfwayFusion:
      m.color = {make_block("color.block1", 3, c0), make_block("color.block2", c0, c1)};
      m.thermal = {make_block("thermal.block1", 1, c0), make_block("thermal.block2", c0, c1)};
      m.nin = nn::Conv2d("nin", 2 * c1, c1, 1);
      m.shared = {make_block("shared.block3", c1, c2)};
      break;
    default:
      m.color = {make_block("color.block1", 3, c0), make_block("color.block2", c0, c1),
                 make_block("color.block3", c1, c2)};
      m.thermal = {make_block("thermal.block1", 1, c0), make_block("thermal.block2", c0, c1),
                   make_block("thermal.block3", c1, c2)};
      n_maps = 2;
      break;
  }

  auto rpn = [&](const std::string& name, std::vector<std::size_t> maps) {
    const std::size_t in = c2 * maps.size();
    return RpnNet{nn::Conv2d(name + ".conv", in, cfg.rpn_channels, 3),
                  nn::Conv2d(name + ".cls", cfg.rpn_channels, 2 * A, 1),
                  nn::Conv2d(name + ".reg", cfg.rpn_channels, 4 * A, 1), std::move(maps)};
  };
  auto head = [&](const std::string& name, std::vector<std::size_t> maps, std::vector<std::string> fc1_names) {
    RoiHead h;
    for (const auto& n : fc1_names) h.fc1.emplace_back(name + "." + n, pooled * c2, cfg.fc_units);
    h.cls = nn::Linear(name + ".cls", cfg.fc_units * maps.size(), 2);
    h.reg = nn::Linear(name + ".reg", cfg.fc_units * maps.size(), 4);
    h.maps = std::move(maps);
    return h;
  };

  switch (cfg.arch) {
    case FusionArchitecture::LateFusion:
      m.rpns.push_back(rpn("rpn", {0, 1}));
      m.heads.push_back(head("head", {0, 1}, {"fc1_color", "fc1_thermal"}));
      break;
    case FusionArchitecture::ScoreFusionI:
      m.rpns.push_back(rpn("rpn_color", {0}));
      m.rpns.push_back(rpn("rpn_thermal", {1}));
      m.heads.push_back(head("head_color", {0}, {"fc1"}));
      m.heads.push_back(head("head_thermal", {1}, {"fc1"}));
      break;
    case FusionArchitecture::ScoreFusionII:
      m.rpns.push_back(rpn("rpn", {0, 1}));
      m.heads.push_back(head("head_color", {0}, {"fc1"}));
      m.heads.push_back(head("head_thermal", {1}, {"fc1"}));
      break;
    default:
      m.rpns.push_back(rpn("rpn", {0}));
      m.heads.push_back(head("head", {0}, {"fc1"}));
      break;
  }
  if (n_maps == 2) {
    m.seg = {nn::Linear("seg_color", c2, 1), nn::Linear("seg_thermal", c2, 1)};
  } else {
    m.seg = {nn::Linear("seg", c2, 1)};
  }
  m.anchors = generate_anchors(cfg.feature_size(), cfg.feature_size(), cfg.anchors);
}

Impl::Trunk run_trunk(const Impl& m, const ImagePair& pair, const DetectorConfig& cfg) {
  pair.validate();
  if (pair.color.height() != cfg.image_size || pair.color.width() != cfg.image_size) {
    throw std::invalid_argument("detector: expected " + std::to_string(cfg.image_size) + "x" +
                                std::to_string(cfg.image_size) + " images, got " +
                                std::to_string(pair.color.height()) + "x" + std::to_string(pair.color.width()));
  }
  Impl::Trunk t;
  Tensor xc = prepare_input(pair.color);
  Tensor xt = prepare_input(pair.thermal);
  t.color.resize(m.color.size());
  t.thermal.resize(m.thermal.size());
  t.shared.resize(m.shared.size());
  for (std::size_t i = 0; i < m.color.size(); ++i) xc = block_forward(m.color[i], xc, t.color[i]);
  for (std::size_t i = 0; i < m.thermal.size(); ++i) xt = block_forward(m.thermal[i], xt, t.thermal[i]);
  if (m.shared.empty()) {
    t.maps = {std::move(xc), std::move(xt)};
    return t;
  }
  Tensor x;
  if (m.nin) {
    t.nin_in = concat_channels(xc, xt);
    t.nin_pre = m.nin->forward(t.nin_in);
    x = nn::relu_forward(t.nin_pre);
  } else {
    x = concat_channels(xc, xt);  // input fusion: stacked 4-channel image
  }
  for (std::size_t i = 0; i < m.shared.size(); ++i) x = block_forward(m.shared[i], x, t.shared[i]);
  t.maps = {std::move(x)};
  return t;
}

void trunk_backward(Impl& m, const Impl::Trunk& t, std::vector<Tensor> dmaps) {
  if (m.shared.empty()) {
    Tensor dc = std::move(dmaps[0]), dt = std::move(dmaps[1]);
    for (std::size_t i = m.color.size(); i-- > 0;) dc = block_backward(m.color[i], t.color[i], dc);
    for (std::size_t i = m.thermal.size(); i-- > 0;) dt = block_backward(m.thermal[i], t.thermal[i], dt);
    return;
  }
  Tensor d = std::move(dmaps[0]);
  for (std::size_t i = m.shared.size(); i-- > 0;) d = block_backward(m.shared[i], t.shared[i], d);
  if (!m.nin) return;  // input fusion reaches the image
  d = nn::relu_backward(t.nin_pre, d);
  d = m.nin->backward(t.nin_in, d);
  const std::size_t cc = m.color.empty() ? 0 : m.color.back().b.out_channels();
  auto [dc, dt] = split_channels(d, cc);
  for (std::size_t i = m.color.size(); i-- > 0;) dc = block_backward(m.color[i], t.color[i], dc);
  for (std::size_t i = m.thermal.size(); i-- > 0;) dt = block_backward(m.thermal[i], t.thermal[i], dt);
}

Impl::RpnState run_rpn(const RpnNet& r, const std::vector<Tensor>& maps) {
  Impl::RpnState s;
  s.in = concat_maps(maps, r.maps);
  s.pre = r.conv.forward(s.in);
  s.hidden = nn::relu_forward(s.pre);
  s.cls = r.cls.forward(s.hidden);
  s.reg = r.reg.forward(s.hidden);
  return s;
}

void rpn_backward(RpnNet& r, const Impl::RpnState& s, const Tensor& dcls, const Tensor& dreg,
                  std::vector<Tensor>& dmaps) {
  Tensor dh = r.cls.backward(s.hidden, dcls);
  dh += r.reg.backward(s.hidden, dreg);
  dh = nn::relu_backward(s.pre, dh);
  Tensor din = r.conv.backward(s.in, dh);
  if (r.maps.size() == 1) {
    dmaps[r.maps[0]] += din;
  } else {
    auto [a, b] = split_channels(din, dmaps[r.maps[0]].dim(2));
    dmaps[r.maps[0]] += a;
    dmaps[r.maps[1]] += b;
  }
}

std::vector<BBox> proposals_from(const Impl::RpnState& s, const std::vector<BBox>& anchors,
                                 const DetectorConfig& cfg) {
  const std::size_t A = cfg.anchors.per_cell();
  const double size = static_cast<double>(cfg.image_size);
  std::vector<ScoredBox> cands;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const std::size_t cell = a / A, k = a % A;
    const double l0 = s.cls[cell * 2 * A + 2 * k], l1 = s.cls[cell * 2 * A + 2 * k + 1];
    const double score = nn::sigmoid(l1 - l0);
    const double* t = s.reg.ptr() + cell * 4 * A + 4 * k;
    const auto box = clip_box(decode(anchors[a], {t[0], t[1], t[2], t[3]}), size, size);
    if (!box || box->w() < cfg.proposals.min_size || box->h() < cfg.proposals.min_size) continue;
    cands.push_back({*box, score});
  }
  const auto keep = nms_indices(cands, cfg.proposals.nms_threshold);
  std::vector<BBox> out;
  for (std::size_t i = 0; i < keep.size() && out.size() < cfg.proposals.top_k; ++i) out.push_back(cands[keep[i]].box);
  return out;
}

Impl::HeadState run_head(const RoiHead& h, const std::vector<Tensor>& maps, const std::vector<BBox>& rois,
                         const DetectorConfig& cfg) {
  Impl::HeadState s;
  s.rois = rois;
  const std::size_t n = rois.size();
  const std::size_t S = cfg.roi_size;
  std::vector<Tensor> hidden;
  for (std::size_t k = 0; k < h.maps.size(); ++k) {
    const Tensor& f = maps[h.maps[k]];
    const std::size_t D = S * S * f.dim(2);
    std::vector<RoiPoolResult> pooled;
    Tensor flat({n, D});
    for (std::size_t i = 0; i < n; ++i) {
      pooled.push_back(roi_pool_indexed(f, rois[i], cfg.anchors.stride, S));
      std::copy(pooled.back().output.ptr(), pooled.back().output.ptr() + D, flat.ptr() + i * D);
    }
    Tensor pre = h.fc1[k].forward(flat);
    hidden.push_back(nn::relu_forward(pre));
    s.pooled.push_back(std::move(pooled));
    s.flat.push_back(std::move(flat));
    s.pre.push_back(std::move(pre));
  }
  s.hidden = hidden.size() == 1 ? hidden[0] : concat_columns(hidden[0], hidden[1]);
  s.cls = h.cls.forward(s.hidden);
  s.reg = h.reg.forward(s.hidden);
  return s;
}

// Backprop of head outputs; dflat_extra carries roi-segmentation gradients
// w.r.t. the pooled features (per input map), already shaped {n, D}.
void head_backward(RoiHead& h, const Impl::HeadState& s, const Tensor& dcls, const Tensor& dreg,
                   const std::vector<Tensor>& dflat_extra, std::vector<Tensor>& dmaps, const DetectorConfig& cfg) {
  Tensor dh = h.cls.backward(s.hidden, dcls);
  dh += h.reg.backward(s.hidden, dreg);
  std::vector<Tensor> dparts;
  if (h.maps.size() == 1) {
    dparts.push_back(std::move(dh));
  } else {
    auto [a, b] = split_columns(dh, cfg.fc_units);
    dparts.push_back(std::move(a));
    dparts.push_back(std::move(b));
  }
  const std::size_t S = cfg.roi_size;
  for (std::size_t k = 0; k < h.maps.size(); ++k) {
    Tensor d = nn::relu_backward(s.pre[k], dparts[k]);
    Tensor dflat = h.fc1[k].backward(s.flat[k], d);
    if (!dflat_extra.empty()) dflat += dflat_extra[k];
    Tensor& dm = dmaps[h.maps[k]];
    const std::size_t C = dm.dim(2), D = S * S * C;
    for (std::size_t i = 0; i < s.rois.size(); ++i) {
      Tensor dy({S, S, C}, std::vector<double>(dflat.ptr() + i * D, dflat.ptr() + (i + 1) * D));
      roi_pool_backward(s.pooled[k][i], dy, dm);
    }
  }
}

StreamOutput to_stream_output(const Impl::HeadState& s, Tensor segmentation) {
  StreamOutput o;
  o.proposals = s.rois;
  for (std::size_t i = 0; i < s.rois.size(); ++i) {
    const auto p = nn::softmax(std::span<const double>(s.cls.ptr() + 2 * i, 2));
    o.scores.push_back({p[0], p[1]});
    const double* t = s.reg.ptr() + 4 * i;
    o.offsets.push_back({t[0], t[1], t[2], t[3]});
  }
  o.segmentation = std::move(segmentation);
  return o;
}

Tensor seg_probabilities(const nn::Linear& seg, const Tensor& map) {
  const std::size_t H = map.dim(0), W = map.dim(1), C = map.dim(2);
  Tensor logits = seg.forward(map.reshaped({H * W, C}));
  Tensor p({H, W});
  for (std::size_t i = 0; i < H * W; ++i) p[i] = nn::sigmoid(logits[i]);
  return p;
}

// Shared proposals for single-RPN models, per-stream lists for score fusion I.
std::vector<std::vector<BBox>> all_proposals(const Impl& m, const Impl::Trunk& t, const DetectorConfig& cfg,
                                             std::vector<Impl::RpnState>* states) {
  std::vector<std::vector<BBox>> out;
  for (const RpnNet& r : m.rpns) {
    auto s = run_rpn(r, t.maps);
    out.push_back(proposals_from(s, m.anchors, cfg));
    if (states) states->push_back(std::move(s));
  }
  return out;
}

const std::vector<BBox>& head_proposals(const std::vector<std::vector<BBox>>& props, std::size_t head) {
  return props.size() == 1 ? props[0] : props[head];
}

}  // namespace

DetectorModel::DetectorModel(const DetectorConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  build(*impl_, cfg_);
}

DetectorModel::DetectorModel(const DetectorModel& other)
    : cfg_(other.cfg_), trained_(other.trained_), impl_(std::make_unique<Impl>(*other.impl_)) {}

DetectorModel& DetectorModel::operator=(const DetectorModel& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    trained_ = other.trained_;
    impl_ = std::make_unique<Impl>(*other.impl_);
  }
  return *this;
}

DetectorModel::DetectorModel(DetectorModel&&) noexcept = default;
DetectorModel& DetectorModel::operator=(DetectorModel&&) noexcept = default;
DetectorModel::~DetectorModel() = default;

void DetectorModel::init(Rng& rng) {
  Impl& m = *impl_;
  for (auto* blocks : {&m.color, &m.thermal, &m.shared})
    for (ConvBlock& b : *blocks) {
      b.a.init(rng);
      b.b.init(rng);
    }
  if (m.nin) m.nin->init(rng);
  for (RpnNet& r : m.rpns) {
    r.conv.init(rng);
    gaussian_init(r.cls.weight, 0.01, rng);
    gaussian_init(r.reg.weight, 0.01, rng);
    r.cls.bias.value.fill(0.0);
    r.reg.bias.value.fill(0.0);
  }
  for (RoiHead& h : m.heads) {
    for (nn::Linear& f : h.fc1) f.init(rng);
    gaussian_init(h.cls.weight, 0.01, rng);
    gaussian_init(h.reg.weight, 0.001, rng);
    h.cls.bias.value.fill(0.0);
    h.reg.bias.value.fill(0.0);
  }
  for (nn::Linear& s : m.seg) {
    gaussian_init(s.weight, 0.01, rng);
    s.bias.value.fill(0.0);
  }
  trained_ = false;
}

nn::ParamList DetectorModel::params() {
  Impl& m = *impl_;
  nn::ParamList out;
  auto add = [&](nn::ParamList ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (auto* blocks : {&m.color, &m.thermal})
    for (ConvBlock& b : *blocks) {
      add(b.a.params());
      add(b.b.params());
    }
  if (m.nin) add(m.nin->params());
  for (ConvBlock& b : m.shared) {
    add(b.a.params());
    add(b.b.params());
  }
  for (RpnNet& r : m.rpns) {
    add(r.conv.params());
    add(r.cls.params());
    add(r.reg.params());
  }
  for (RoiHead& h : m.heads) {
    for (nn::Linear& f : h.fc1) add(f.params());
    add(h.cls.params());
    add(h.reg.params());
  }
  for (nn::Linear& s : m.seg) add(s.params());
  return out;
}

nn::ConstParamList DetectorModel::params() const {
  return nn::as_const(const_cast<DetectorModel&>(*this).params());
}

DetectorOutput DetectorModel::forward(const ImagePair& pair) const {
  const Impl& m = *impl_;
  const Impl::Trunk t = run_trunk(m, pair, cfg_);
  const auto props = all_proposals(m, t, cfg_, nullptr);
  std::vector<Tensor> segs;
  for (std::size_t k = 0; k < m.seg.size(); ++k) segs.push_back(seg_probabilities(m.seg[k], t.maps[k]));

  DetectorOutput out;
  if (props.size() == 1) out.proposals = props[0];
  for (std::size_t h = 0; h < m.heads.size(); ++h) {
    const auto s = run_head(m.heads[h], t.maps, head_proposals(props, h), cfg_);
    out.streams.push_back(to_stream_output(s, segs[std::min(h, segs.size() - 1)]));
  }

  switch (cfg_.arch) {
    case FusionArchitecture::ScoreFusionII:
      out.combined = fusion::fuse(out.streams[0], out.streams[1], {0.5});
      break;
    case FusionArchitecture::ScoreFusionI: {
      // Each stream's detections are re-scored by the other stream's head;
      // boxes are already regressed, so the combined offsets are zero.
      fusion::FinalizeConfig fin;
      fin.image_width = fin.image_height = static_cast<double>(cfg_.image_size);
      StreamOutput c;
      c.segmentation = segs[0];
      for (std::size_t h = 0; h < 2; ++h) {
        const auto dets = fusion::finalize_detections(out.streams[h], fin);
        if (dets.empty()) continue;
        std::vector<BBox> boxes;
        for (const auto& d : dets) boxes.push_back(d.box);
        const auto other = to_stream_output(run_head(m.heads[1 - h], t.maps, boxes, cfg_), {});
        for (std::size_t i = 0; i < dets.size(); ++i) {
          const double s = 0.5 * (dets[i].score + other.scores[i][1]);
          c.proposals.push_back(boxes[i]);
          c.scores.push_back({1.0 - s, s});
          c.offsets.push_back({});
        }
      }
      out.combined = std::move(c);
      break;
    }
    default:
      out.combined = out.streams[0];
      break;
  }
  return out;
}

std::vector<StreamOutput> DetectorModel::head_outputs(const ImagePair& pair, const std::vector<BBox>& rois) const {
  const Impl& m = *impl_;
  if (m.heads.size() != 2) throw std::invalid_argument("head_outputs: model has a single detection head");
  const Impl::Trunk t = run_trunk(m, pair, cfg_);
  std::vector<StreamOutput> out;
  for (std::size_t h = 0; h < 2; ++h) {
    if (rois.empty()) {
      out.emplace_back();
      continue;
    }
    out.push_back(to_stream_output(run_head(m.heads[h], t.maps, rois, cfg_), {}));
  }
  return out;
}

namespace {

ImageTargets targets_from(const Impl& m, const DetectorConfig& cfg, const std::vector<std::vector<BBox>>& props,
                          const std::vector<GtEntry>& gts, Rng& rng) {
  const TrainingBoxes boxes = training_boxes(gts, cfg.sample);
  ImageTargets t;
  for (std::size_t r = 0; r < m.rpns.size(); ++r) t.rpn.push_back(sample_anchors(m.anchors, boxes, cfg.sample, rng));
  if (cfg.arch == FusionArchitecture::ScoreFusionI) {
    for (std::size_t h = 0; h < 2; ++h) t.heads.push_back(sample_rois(props[h], boxes, cfg.roi_sample, cfg.sample, rng));
  } else {
    t.heads.push_back(sample_rois(props[0], boxes, cfg.roi_sample, cfg.sample, rng));
    if (m.heads.size() == 2) t.heads.push_back(t.heads[0]);
  }
  for (const RoiBatch& b : t.heads) {
    std::vector<Tensor> masks;
    for (const BBox& roi : b.rois) masks.push_back(roi_seg_target(boxes.targets, roi, cfg.roi_size));
    t.roi_masks.push_back(std::move(masks));
  }
  const std::size_t fs = cfg.feature_size();
  for (std::size_t k = 0; k < m.seg.size(); ++k) t.seg.push_back(seg_target(boxes.targets, fs, fs, cfg.anchors.stride));
  return t;
}

void check_targets(const Impl& m, const DetectorConfig& cfg, const ImageTargets& t) {
  if (t.rpn.size() != m.rpns.size() || t.heads.size() != m.heads.size() || t.roi_masks.size() != m.heads.size() ||
      t.seg.size() != m.seg.size()) {
    throw std::invalid_argument("joint_loss: targets do not match the model's " + to_string(cfg.arch) +
                                " structure (missing rpn, head or segmentation targets)");
  }
  for (std::size_t h = 0; h < t.heads.size(); ++h) {
    const RoiBatch& b = t.heads[h];
    if (b.labels.size() != b.rois.size() || b.targets.size() != b.rois.size() ||
        t.roi_masks[h].size() != b.rois.size()) {
      throw std::invalid_argument("joint_loss: roi batch " + std::to_string(h) + " has inconsistent lengths");
    }
  }
  const std::size_t fs = cfg.feature_size();
  for (const Tensor& s : t.seg) s.expect_shape({fs, fs}, "segmentation target");
}

LossBreakdown loss_from(Impl& m, const DetectorConfig& cfg, const Impl::Trunk& t,
                        const std::vector<Impl::RpnState>& rpn_states, const ImageTargets& tg, const LossWeights& w,
                        bool backprop) {
  check_targets(m, cfg, tg);
  LossBreakdown lb;
  std::vector<Tensor> dmaps;
  for (const Tensor& f : t.maps) dmaps.emplace_back(f.shape());
  const std::size_t A = cfg.anchors.per_cell();

  // Proposal networks.
  for (std::size_t r = 0; r < m.rpns.size(); ++r) {
    const auto& s = rpn_states[r];
    const auto& samples = tg.rpn[r];
    Tensor dcls(s.cls.shape()), dreg(s.reg.shape());
    if (!samples.empty()) {
      const double inv = 1.0 / static_cast<double>(samples.size());
      for (const AnchorSample& a : samples) {
        const std::size_t cell = a.index / A, k = a.index % A;
        const std::size_t ci = cell * 2 * A + 2 * k, ri = cell * 4 * A + 4 * k;
        const auto ce = nn::softmax_ce(std::span<const double>(s.cls.ptr() + ci, 2), a.label);
        lb.terms[0] += ce.loss * inv;
        dcls[ci] += ce.grad[0] * inv * w.lambda[0];
        dcls[ci + 1] += ce.grad[1] * inv * w.lambda[0];
        if (a.label == 1) {
          const auto tgt = a.target.as_array();
          const auto sl = nn::smooth_l1(std::span<const double>(s.reg.ptr() + ri, 4), tgt);
          lb.terms[0] += sl.loss * inv;
          for (std::size_t c = 0; c < 4; ++c) dreg[ri + c] += sl.grad[c] * inv * w.lambda[0];
        }
      }
    }
    if (backprop) rpn_backward(m.rpns[r], s, dcls, dreg, dmaps);
  }

  // Detection heads with roi-level segmentation on their pooled features.
  const std::size_t S = cfg.roi_size;
  for (std::size_t h = 0; h < m.heads.size(); ++h) {
    const RoiBatch& b = tg.heads[h];
    if (b.rois.empty()) continue;
    const auto hs = run_head(m.heads[h], t.maps, b.rois, cfg);
    const std::size_t n = b.rois.size();
    const double inv = 1.0 / static_cast<double>(n);
    const double lam = w.lambda[1 + h];
    Tensor dcls({n, 2}), dreg({n, 4});
    double det = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ce = nn::softmax_ce(std::span<const double>(hs.cls.ptr() + 2 * i, 2), b.labels[i]);
      det += ce.loss * inv;
      dcls[2 * i] = ce.grad[0] * inv * lam;
      dcls[2 * i + 1] = ce.grad[1] * inv * lam;
      if (b.labels[i] == 1) {
        const auto sl = nn::smooth_l1(std::span<const double>(hs.reg.ptr() + 4 * i, 4), b.targets[i].as_array());
        det += sl.loss * inv;
        for (std::size_t c = 0; c < 4; ++c) dreg[4 * i + c] = sl.grad[c] * inv * lam;
      }
    }
    lb.terms[1 + h] = det;

    std::vector<Tensor> dflat_extra;
    for (std::size_t k = 0; k < m.heads[h].maps.size(); ++k) {
      const std::size_t map = m.heads[h].maps[k];
      const nn::Linear& seg = m.seg[map];
      const std::size_t C = t.maps[map].dim(2);
      const Tensor cells = hs.flat[k].reshaped({n * S * S, C});
      const Tensor logits = seg.forward(cells);
      std::vector<double> target;
      target.reserve(n * S * S);
      for (const Tensor& mk : tg.roi_masks[h]) target.insert(target.end(), mk.data().begin(), mk.data().end());
      const auto bce = nn::sigmoid_bce_mean(logits.data(), target);
      lb.terms[5 + map] = bce.loss;
      if (backprop) {
        Tensor dlog({n * S * S, 1});
        for (std::size_t i = 0; i < dlog.size(); ++i) dlog[i] = bce.grad[i] * w.lambda[5 + map];
        Tensor dcells = m.seg[map].backward(cells, dlog);
        dcells.reshape({n, S * S * C});
        dflat_extra.push_back(std::move(dcells));
      }
    }
    if (backprop) head_backward(m.heads[h], hs, dcls, dreg, dflat_extra, dmaps, cfg);
  }

  // Image-level segmentation.
  for (std::size_t k = 0; k < m.seg.size(); ++k) {
    const Tensor& f = t.maps[k];
    const std::size_t H = f.dim(0), W = f.dim(1), C = f.dim(2);
    const Tensor cells = f.reshaped({H * W, C});
    const Tensor logits = m.seg[k].forward(cells);
    const auto bce = nn::sigmoid_bce_mean(logits.data(), tg.seg[k].data());
    lb.terms[3 + k] = bce.loss;
    if (backprop) {
      Tensor dlog({H * W, 1});
      for (std::size_t i = 0; i < dlog.size(); ++i) dlog[i] = bce.grad[i] * w.lambda[3 + k];
      Tensor d = m.seg[k].backward(cells, dlog);
      d.reshape({H, W, C});
      dmaps[k] += d;
    }
  }

  for (std::size_t i = 0; i < 7; ++i) lb.total += w.lambda[i] * lb.terms[i];
  if (backprop) trunk_backward(m, t, std::move(dmaps));
  return lb;
}

}  // namespace

ImageTargets DetectorModel::make_targets(const ImagePair& pair, const std::vector<GtEntry>& gts, Rng& rng) const {
  const Impl& m = *impl_;
  const Impl::Trunk t = run_trunk(m, pair, cfg_);
  return targets_from(m, cfg_, all_proposals(m, t, cfg_, nullptr), gts, rng);
}

LossBreakdown DetectorModel::joint_loss(const ImagePair& pair, const ImageTargets& targets, const LossWeights& w,
                                        bool backprop) {
  Impl& m = *impl_;
  const Impl::Trunk t = run_trunk(m, pair, cfg_);
  std::vector<Impl::RpnState> states;
  for (const RpnNet& r : m.rpns) states.push_back(run_rpn(r, t.maps));
  return loss_from(m, cfg_, t, states, targets, w, backprop);
}

LossBreakdown DetectorModel::train_step(const ImagePair& pair, const std::vector<GtEntry>& gts, const LossWeights& w,
                                        Rng& rng) {
  Impl& m = *impl_;
  const Impl::Trunk t = run_trunk(m, pair, cfg_);
  std::vector<Impl::RpnState> states;
  const auto props = all_proposals(m, t, cfg_, &states);
  const ImageTargets tg = targets_from(m, cfg_, props, gts, rng);
  return loss_from(m, cfg_, t, states, tg, w, true);
}

// ------------------------------------------------------------- checkpoints

namespace {

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_double(tok));
  return out;
}

}  // namespace

Checkpoint DetectorModel::to_checkpoint() const {
  const DetectorConfig& c = cfg_;
  std::map<std::string, std::string> h{
      {"model", "detector"},
      {"arch", to_string(c.arch)},
      {"trained", trained_ ? "1" : "0"},
      {"image_size", std::to_string(c.image_size)},
      {"channels", std::to_string(c.channels[0]) + "," + std::to_string(c.channels[1]) + "," +
                       std::to_string(c.channels[2])},
      {"rpn_channels", std::to_string(c.rpn_channels)},
      {"fc_units", std::to_string(c.fc_units)},
      {"roi_size", std::to_string(c.roi_size)},
      {"anchors.stride", format_double(c.anchors.stride)},
      {"anchors.heights", join_doubles(c.anchors.heights)},
      {"anchors.ratios", join_doubles(c.anchors.ratios)},
      {"sample.anchors_per_image", std::to_string(c.sample.anchors_per_image)},
      {"sample.positive_fraction", format_double(c.sample.positive_fraction)},
      {"sample.positive_iou", format_double(c.sample.positive_iou)},
      {"sample.negative_iou", format_double(c.sample.negative_iou)},
      {"sample.exclude_ignore", c.sample.exclude_ignore ? "1" : "0"},
      {"sample.ignore_ioa", format_double(c.sample.ignore_ioa)},
      {"sample.include_occluded", c.sample.include_occluded ? "1" : "0"},
      {"sample.min_height", format_double(c.sample.min_height)},
      {"roi.rois_per_image", std::to_string(c.roi_sample.rois_per_image)},
      {"roi.foreground_fraction", format_double(c.roi_sample.foreground_fraction)},
      {"roi.foreground_iou", format_double(c.roi_sample.foreground_iou)},
      {"roi.background_iou", format_double(c.roi_sample.background_iou)},
      {"roi.add_ground_truth", c.roi_sample.add_ground_truth ? "1" : "0"},
      {"proposals.nms_threshold", format_double(c.proposals.nms_threshold)},
      {"proposals.top_k", std::to_string(c.proposals.top_k)},
      {"proposals.min_size", format_double(c.proposals.min_size)},
  };
  return make_checkpoint(std::move(h), params());
}

DetectorModel DetectorModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.require("model") != "detector") throw CheckpointError("checkpoint is not a detector model");
  DetectorConfig c;
  bool trained = false;
  try {
    auto u = [&](const char* k) { return static_cast<std::size_t>(parse_int(ckpt.require(k))); };
    auto d = [&](const char* k) { return parse_double(ckpt.require(k)); };
    auto b = [&](const char* k) { return ckpt.require(k) == "1"; };
    c.arch = architecture_from_string(ckpt.require("arch"));
    trained = b("trained");
    c.image_size = u("image_size");
    const auto ch = split_doubles(ckpt.require("channels"));
    if (ch.size() != 3) throw CheckpointError("detector checkpoint: channels needs three values");
    for (std::size_t i = 0; i < 3; ++i) c.channels[i] = static_cast<std::size_t>(ch[i]);
    c.rpn_channels = u("rpn_channels");
    c.fc_units = u("fc_units");
    c.roi_size = u("roi_size");
    c.anchors.stride = d("anchors.stride");
    c.anchors.heights = split_doubles(ckpt.require("anchors.heights"));
    c.anchors.ratios = split_doubles(ckpt.require("anchors.ratios"));
    c.sample.anchors_per_image = u("sample.anchors_per_image");
    c.sample.positive_fraction = d("sample.positive_fraction");
    c.sample.positive_iou = d("sample.positive_iou");
    c.sample.negative_iou = d("sample.negative_iou");
    c.sample.exclude_ignore = b("sample.exclude_ignore");
    c.sample.ignore_ioa = d("sample.ignore_ioa");
    c.sample.include_occluded = b("sample.include_occluded");
    c.sample.min_height = d("sample.min_height");
    c.roi_sample.rois_per_image = u("roi.rois_per_image");
    c.roi_sample.foreground_fraction = d("roi.foreground_fraction");
    c.roi_sample.foreground_iou = d("roi.foreground_iou");
    c.roi_sample.background_iou = d("roi.background_iou");
    c.roi_sample.add_ground_truth = b("roi.add_ground_truth");
    c.proposals.nms_threshold = d("proposals.nms_threshold");
    c.proposals.top_k = u("proposals.top_k");
    c.proposals.min_size = d("proposals.min_size");
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("detector checkpoint: bad header: ") + e.what());
  }
  DetectorModel m(c);
  load_params(ckpt, m.params());
  m.trained_ = trained;
  return m;
}

void save_detector(const std::filesystem::path& path, const DetectorModel& model) {
  write_checkpoint(path, model.to_checkpoint());
}

DetectorModel load_detector(const std::filesystem::path& path) {
  return DetectorModel::from_checkpoint(read_checkpoint(path));
}

// --------------------------------------------------------------- inference

DetectorOutput detector_forward(const DetectorModel& model, const ImagePair& pair) { return model.forward(pair); }

std::vector<ScoredBox> detect(const DetectorModel& model, const ImagePair& pair, fusion::WeightingMode mode,
                              double iv, const fusion::GateParams& gate, const fusion::FinalizeConfig& fin) {
  const DetectorOutput out = model.forward(pair);
  if (model.architecture() == FusionArchitecture::ScoreFusionII) {
    const auto w = fusion::weights_for(mode, iv, gate);
    return fusion::finalize_detections(fusion::fuse(out.streams[0], out.streams[1], w), fin);
  }
  if (mode != fusion::WeightingMode::Average) {
    throw std::invalid_argument("weighting '" + fusion::to_string(mode) + "' needs a score2 model; " +
                                to_string(model.architecture()) + " only supports 'average'");
  }
  return fusion::finalize_detections(out.combined, fin);
}

// ---------------------------------------------------------------- training

DetectorTrainResult train_detector(const std::vector<TrainSample>& data, const DetectorTrainConfig& cfg,
                                   const DetectorConfig& model_cfg) {
  if (data.empty()) throw std::invalid_argument("train_detector: empty dataset");
  if (cfg.epochs == 0) throw std::invalid_argument("train_detector: epochs must be positive");
  Rng rng(cfg.seed);
  DetectorTrainResult result{DetectorModel(model_cfg), {}, {}};
  DetectorModel& model = result.model;
  model.init(rng);
  const nn::ParamList params = model.params();
  nn::Sgd sgd(params, cfg.momentum, cfg.weight_decay);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = epoch > cfg.lr_drop_epoch ? cfg.lr * cfg.lr_drop_factor : cfg.lr;
    shuffle(order, rng);
    LossBreakdown mean;
    for (std::size_t idx : order) {
      nn::zero_grads(params);
      const LossBreakdown lb = model.train_step(data[idx].pair, data[idx].annotations, cfg.weights, rng);
      if (!std::isfinite(lb.total)) {
        throw std::runtime_error("train_detector: loss diverged at step " + std::to_string(step + 1));
      }
      sgd.step(lr);
      result.steps.push_back({epoch, ++step, lr, lb});
      mean.total += lb.total;
      for (std::size_t i = 0; i < 7; ++i) mean.terms[i] += lb.terms[i];
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    mean.total *= inv;
    for (double& v : mean.terms) v *= inv;
    result.epoch_means.push_back(mean);
  }
  model.set_trained(true);
  return result;
}

// ------------------------------------------------------------------ phase 2

std::vector<fusion::GateImage> collect_gate_samples(const DetectorModel& model, const illumination::IanModel& ian,
                                                    const std::vector<TrainSample>& data, std::uint64_t seed) {
  if (model.architecture() != FusionArchitecture::ScoreFusionII) {
    throw std::invalid_argument("gate optimization needs a score2 trunk, got " + to_string(model.architecture()));
  }
  const DetectorConfig& cfg = model.config();
  RoiSampleConfig roi_cfg = cfg.roi_sample;
  roi_cfg.add_ground_truth = false;
  std::vector<fusion::GateImage> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = derive_rng(seed, i);
    fusion::GateImage g;
    g.iv = ian.infer(data[i].pair.color);
    const DetectorOutput fwd = model.forward(data[i].pair);
    const TrainingBoxes boxes = training_boxes(data[i].annotations, cfg.sample);
    const RoiBatch batch = sample_rois(fwd.proposals, boxes, roi_cfg, cfg.sample, rng);
    const auto heads = model.head_outputs(data[i].pair, batch.rois);
    for (std::size_t r = 0; r < batch.rois.size(); ++r) {
      g.rois.push_back({heads[0].scores[r], heads[1].scores[r], heads[0].offsets[r], heads[1].offsets[r],
                        batch.labels[r], batch.targets[r]});
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace iaf::detector
