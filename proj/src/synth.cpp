#include "iaf/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <stdexcept>
#include <string>

namespace iaf::synth {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("scene config: ") + field + " " + what);
}

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

// Flat top out to 70% of the half-size, then a Gaussian skirt that crosses
// one half exactly at the box edge.
double edge_profile(double u) {
  constexpr double kFlat = 0.7;
  const double skirt = (1.0 - kFlat) / std::sqrt(std::log(2.0));
  const double a = std::abs(u);
  if (a <= kFlat) return 1.0;
  const double z = (a - kFlat) / skirt;
  return std::exp(-z * z);
}

double box_mask(const BBox& b, double px, double py) {
  const double ux = (px - b.cx()) / (0.5 * b.w());
  const double uy = (py - b.cy()) / (0.5 * b.h());
  return std::min(edge_profile(ux), edge_profile(uy));
}

// Float canvas; quantized once at the end.
struct Canvas {
  std::size_t size, channels;
  std::vector<double> v;

  Canvas(std::size_t s, std::size_t c) : size(s), channels(c), v(s * s * c, 0.0) {}
  double& at(std::size_t y, std::size_t x, std::size_t c) { return v[(y * size + x) * channels + c]; }

  void background(const std::vector<double>& level, double gx, double gy) {
    const double mid = 0.5 * static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        for (std::size_t c = 0; c < channels; ++c)
          at(y, x, c) = level[c] + gx * (static_cast<double>(x) + 0.5 - mid) +
                        gy * (static_cast<double>(y) + 0.5 - mid);
  }

  void blob(const BBox& b, const std::vector<double>& contrast) {
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.x() - 2.0)));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.y() - 2.0)));
    const auto x1 = std::min(size, static_cast<std::size_t>(std::ceil(b.right() + 2.0)));
    const auto y1 = std::min(size, static_cast<std::size_t>(std::ceil(b.bottom() + 2.0)));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) {
        const double m = box_mask(b, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
        for (std::size_t c = 0; c < channels; ++c) at(y, x, c) += contrast[c] * m;
      }
  }

  void fill_rect(const BBox& b, const std::vector<double>& level) {
    const auto x0 = static_cast<std::size_t>(std::max(0.0, b.x()));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, b.y()));
    const auto x1 = std::min(size, static_cast<std::size_t>(b.right()));
    const auto y1 = std::min(size, static_cast<std::size_t>(b.bottom()));
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x)
        for (std::size_t c = 0; c < channels; ++c) at(y, x, c) = level[c];
  }

  Image quantize(Rng& rng, double noise) const {
    Image img(size, size, channels);
    auto& d = img.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double s = v[i] + noise * standard_normal(rng);
      d[i] = static_cast<std::uint8_t>(std::clamp(std::lround(s), 0L, 255L));
    }
    return img;
  }
};

BBox random_box(const SceneConfig& cfg, Rng& rng, std::size_t height) {
  const std::size_t width = std::max<std::size_t>(1, height / 2);
  const std::size_t x = uniform_index(rng, cfg.image_size - width + 1);
  const std::size_t y = uniform_index(rng, cfg.image_size - height + 1);
  return BBox(static_cast<double>(x), static_cast<double>(y), static_cast<double>(width),
              static_cast<double>(height));
}

std::size_t random_height(const SceneConfig& cfg, Rng& rng) {
  return cfg.min_height + uniform_index(rng, cfg.max_height - cfg.min_height + 1);
}

// Figure color contrast; `sign` is -1 for dark and +1 for bright figures.
std::vector<double> color_contrast(const SceneConfig& cfg, Rng& rng, double sign, double scale) {
  const double mag = scale * uniform(rng, cfg.color_contrast_min, cfg.color_contrast_max);
  std::vector<double> c(3);
  for (double& v : c) v = sign * mag * uniform(rng, 0.75, 1.0);
  return c;
}

std::vector<double> person_color(const SceneConfig& cfg, Rng& rng) {
  const double sign = bernoulli(rng, cfg.color_dark_prob) ? -1.0 : 1.0;
  return color_contrast(cfg, rng, sign, 1.0);
}

std::vector<double> thermal_contrast(const SceneConfig& cfg, Rng& rng) {
  return {uniform(rng, cfg.thermal_contrast_min, cfg.thermal_contrast_max)};
}

}  // namespace

void SceneConfig::validate() const {
  require(image_size >= 8, "image_size", "must be at least 8");
  require(min_height >= 2 && min_height <= max_height, "min_height", "must be in [2, max_height]");
  require(max_height <= image_size, "max_height", "must fit inside the image");
  require(pedestrians_mean >= 0.0 && pedestrians_mean <= 20.0, "pedestrians_mean", "must be in [0, 20]");
  require(color_distractors_mean >= 0.0 && color_distractors_mean <= 20.0, "color_distractors_mean",
          "must be in [0, 20]");
  require(thermal_distractors_mean >= 0.0 && thermal_distractors_mean <= 20.0, "thermal_distractors_mean",
          "must be in [0, 20]");
  require(is_prob(night_fraction), "night_fraction", "must be a probability");
  require(is_prob(ignore_region_prob), "ignore_region_prob", "must be a probability");
  require(is_prob(occlusion_prob), "occlusion_prob", "must be a probability");
  require(color_noise >= 0.0, "color_noise", "must be non-negative");
  require(thermal_noise >= 0.0, "thermal_noise", "must be non-negative");
  require(day_key_min <= day_key_max, "day_key_min", "must not exceed day_key_max");
  require(night_key_min <= night_key_max, "night_key_min", "must not exceed night_key_max");
  require(night_key_max < day_key_min, "night_key_max", "must be below day_key_min");
  require(thermal_background_min <= thermal_background_max, "thermal_background_min",
          "must not exceed thermal_background_max");
  require(color_contrast_min <= color_contrast_max, "color_contrast_min",
          "must not exceed color_contrast_max");
  require(is_prob(color_dark_prob), "color_dark_prob", "must be a probability");
  require(thermal_contrast_min <= thermal_contrast_max, "thermal_contrast_min",
          "must not exceed thermal_contrast_max");
}

Frame generate_pair(const SceneConfig& cfg, Rng& rng, Condition condition) {
  cfg.validate();
  if (condition == Condition::Unknown) throw std::invalid_argument("generate_pair: condition must be day or night");
  const bool day = condition == Condition::Day;
  const std::size_t s = cfg.image_size;

  Canvas color(s, 3), thermal(s, 1);
  const double key = day ? uniform(rng, cfg.day_key_min, cfg.day_key_max)
                         : uniform(rng, cfg.night_key_min, cfg.night_key_max);
  std::vector<double> tint(3);
  for (double& t : tint) t = key * uniform(rng, 0.9, 1.1);
  const double key_slope = day ? 0.4 : 0.1;
  color.background(tint, uniform(rng, -key_slope, key_slope), uniform(rng, -key_slope, key_slope));
  thermal.background({uniform(rng, cfg.thermal_background_min, cfg.thermal_background_max)},
                     uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));

  Frame frame;
  frame.pair.condition = condition;

  // Single-modality clutter first, so pedestrians draw on top.
  // Night color frames carry background and noise only.
  const int n_color_clutter = poisson(rng, cfg.color_distractors_mean);
  for (int i = 0; i < n_color_clutter; ++i) {
    const BBox b = random_box(cfg, rng, random_height(cfg, rng));
    const auto c = person_color(cfg, rng);
    if (day) color.blob(b, c);
  }
  const int n_thermal_clutter = poisson(rng, cfg.thermal_distractors_mean);
  for (int i = 0; i < n_thermal_clutter; ++i) {
    const BBox b = random_box(cfg, rng, random_height(cfg, rng));
    thermal.blob(b, thermal_contrast(cfg, rng));
  }

  if (bernoulli(rng, cfg.ignore_region_prob)) {
    const std::size_t h = random_height(cfg, rng);
    const std::size_t members = 2 + uniform_index(rng, 2);
    const std::size_t member_w = std::max<std::size_t>(1, h / 2);
    const std::size_t step = std::max<std::size_t>(1, member_w * 2 / 3);
    const std::size_t group_w = std::min(s, member_w + step * (members - 1));
    const std::size_t gx = uniform_index(rng, s - group_w + 1);
    const std::size_t gy = uniform_index(rng, s - h + 1);
    for (std::size_t m = 0; m < members; ++m) {
      const double mx = std::min(static_cast<double>(gx + m * step), static_cast<double>(s - member_w));
      const BBox b(mx, static_cast<double>(gy), static_cast<double>(member_w), static_cast<double>(h));
      const auto c = person_color(cfg, rng);
      if (day) color.blob(b, c);
      thermal.blob(b, thermal_contrast(cfg, rng));
    }
    frame.annotations.push_back({Label::People,
                                 BBox(static_cast<double>(gx), static_cast<double>(gy),
                                      static_cast<double>(group_w), static_cast<double>(h)),
                                 Occlusion::None, true});
  }

  const int n_people = poisson(rng, cfg.pedestrians_mean);
  std::vector<BBox> occluders;
  for (int i = 0; i < n_people; ++i) {
    const BBox b = random_box(cfg, rng, random_height(cfg, rng));
    const auto c = person_color(cfg, rng);
    if (day) color.blob(b, c);
    thermal.blob(b, thermal_contrast(cfg, rng));

    Occlusion occ = Occlusion::None;
    if (bernoulli(rng, cfg.occlusion_prob)) {
      const bool heavy = bernoulli(rng, 1.0 / 3.0);
      occ = heavy ? Occlusion::Heavy : Occlusion::Partial;
      const double frac = heavy ? uniform(rng, 0.45, 0.7) : uniform(rng, 0.15, 0.35);
      const double oh = std::max(1.0, std::round(frac * b.h()));
      occluders.emplace_back(b.x() - 1.0, b.bottom() - oh, b.w() + 2.0, oh);
    }
    frame.annotations.push_back({Label::Person, b, occ, false});
  }
  // Occluders are opaque and thermally at background temperature.
  for (const BBox& o : occluders) {
    // Drawn in both conditions so the thermal frame does not depend on it.
    const double shade = uniform(rng, 0.6, 1.4);
    const double grey = day ? shade * key : key;
    color.fill_rect(o, {grey, grey, grey});
    thermal.fill_rect(o, {uniform(rng, cfg.thermal_background_min, cfg.thermal_background_max)});
  }

  frame.pair.color = color.quantize(rng, cfg.color_noise);
  frame.pair.thermal = thermal.quantize(rng, cfg.thermal_noise);
  return frame;
}

Frame generate_frame(const SceneConfig& cfg, std::uint64_t index) {
  Rng rng = derive_rng(cfg.seed, index);
  const Condition c = bernoulli(rng, cfg.night_fraction) ? Condition::Night : Condition::Day;
  return generate_pair(cfg, rng, c);
}

std::vector<std::uint8_t> render_footprint(std::size_t image_size, const BBox& box) {
  std::vector<std::uint8_t> fp(image_size * image_size, 0);
  for (std::size_t y = 0; y < image_size; ++y)
    for (std::size_t x = 0; x < image_size; ++x)
      fp[y * image_size + x] =
          box_mask(box, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5) >= 0.5 ? 1 : 0;
  return fp;
}

Manifest generate_dataset(const SceneConfig& cfg, std::size_t n_train, std::size_t n_test,
                          const std::filesystem::path& out_dir) {
  cfg.validate();
  const DatasetLayout layout{out_dir};
  Manifest manifest;
  std::size_t night[2] = {0, 0};
  const std::pair<const char*, std::size_t> sets[2] = {{"train", n_train}, {"test", n_test}};
  std::uint64_t index = 0;
  for (int si = 0; si < 2; ++si) {
    for (std::size_t i = 0; i < sets[si].second; ++i, ++index) {
      const Frame f = generate_frame(cfg, index);
      char id[32];
      std::snprintf(id, sizeof(id), "%s%05zu", si == 0 ? "tr" : "te", i);
      FrameRecord rec{id, sets[si].first, f.pair.condition};
      try {
        write_pnm(layout.color(rec), f.pair.color);
        write_pnm(layout.thermal(rec), f.pair.thermal);
        write_annotations(layout.annotations(rec), f.annotations);
      } catch (const std::exception& e) {
        throw IoError(std::string("synth: writing frame ") + id + ": " + e.what());
      }
      if (f.pair.condition == Condition::Night) ++night[si];
      manifest.frames.push_back(std::move(rec));
    }
  }
  manifest.info["generator"] = "iaf-synth";
  manifest.info["seed"] = std::to_string(cfg.seed);
  manifest.info["image_size"] = std::to_string(cfg.image_size);
  manifest.info["train_frames"] = std::to_string(n_train);
  manifest.info["test_frames"] = std::to_string(n_test);
  manifest.info["train_night"] = std::to_string(night[0]);
  manifest.info["test_night"] = std::to_string(night[1]);
  write_manifest(layout.manifest(), manifest);
  return manifest;
}

}  // namespace iaf::synth
