#include "iaf/config.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "iaf/fileutil.hpp"

namespace iaf {

RunConfig::RunConfig() {
  // 64x64 frames with 20-50 px pedestrians: the training and evaluation
  // height cutoffs shrink with the image.
  detector.sample.min_height = 24.0;
  eval.min_height = 28.0;
  detector_train.lr = 0.005;
}

namespace {

struct Field {
  std::string key;
  std::string type;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void type_error(const std::string& key, const std::string& type, const std::string& value) {
  throw ConfigError("key '" + key + "' expects " + type + ", got '" + value + "'");
}

double to_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const std::exception&) {
    type_error(key, "a real number", v);
  }
}

unsigned long long to_unsigned(const std::string& key, const std::string& v) {
  long long n = 0;
  try {
    n = parse_int(v);
  } catch (const std::exception&) {
    type_error(key, "a non-negative integer", v);
  }
  if (n < 0) type_error(key, "a non-negative integer", v);
  return static_cast<unsigned long long>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  type_error(key, "true or false", v);
}

std::vector<double> to_reals(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    const std::string tok(trim(std::string_view(v).substr(start, comma == std::string::npos ? comma : comma - start)));
    try {
      out.push_back(parse_double(tok));
    } catch (const std::exception&) {
      type_error(key, "a comma-separated list of reals", v);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string from_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

// `ref` is a generic lambda returning a reference into the config, usable on
// both const and mutable instances.
template <typename Ref>
Field real(std::string key, Ref ref) {
  return {key, "real", [ref](const RunConfig& c) { return format_double(ref(c)); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = to_real(key, v); }};
}

template <typename Ref>
Field count(std::string key, Ref ref) {
  return {key, "integer", [ref](const RunConfig& c) { return std::to_string(ref(c)); },
          [ref, key](RunConfig& c, const std::string& v) {
            ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(to_unsigned(key, v));
          }};
}

template <typename Ref>
Field flag(std::string key, Ref ref) {
  return {key, "boolean", [ref](const RunConfig& c) { return std::string(ref(c) ? "true" : "false"); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = to_bool(key, v); }};
}

template <typename Ref>
Field reals(std::string key, Ref ref) {
  return {key, "real list", [ref](const RunConfig& c) { return from_reals(ref(c)); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = to_reals(key, v); }};
}

#define IAF_REF(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // scene
    f.push_back(count("scene.image_size", IAF_REF(scene.image_size)));
    f.push_back(real("scene.pedestrians_mean", IAF_REF(scene.pedestrians_mean)));
    f.push_back(count("scene.min_height", IAF_REF(scene.min_height)));
    f.push_back(count("scene.max_height", IAF_REF(scene.max_height)));
    f.push_back(real("scene.night_fraction", IAF_REF(scene.night_fraction)));
    f.push_back(real("scene.color_noise", IAF_REF(scene.color_noise)));
    f.push_back(real("scene.thermal_noise", IAF_REF(scene.thermal_noise)));
    f.push_back(real("scene.day_key_min", IAF_REF(scene.day_key_min)));
    f.push_back(real("scene.day_key_max", IAF_REF(scene.day_key_max)));
    f.push_back(real("scene.night_key_min", IAF_REF(scene.night_key_min)));
    f.push_back(real("scene.night_key_max", IAF_REF(scene.night_key_max)));
    f.push_back(real("scene.thermal_background_min", IAF_REF(scene.thermal_background_min)));
    f.push_back(real("scene.thermal_background_max", IAF_REF(scene.thermal_background_max)));
    f.push_back(real("scene.color_contrast_min", IAF_REF(scene.color_contrast_min)));
    f.push_back(real("scene.color_contrast_max", IAF_REF(scene.color_contrast_max)));
    f.push_back(real("scene.color_dark_prob", IAF_REF(scene.color_dark_prob)));
    f.push_back(real("scene.thermal_contrast_min", IAF_REF(scene.thermal_contrast_min)));
    f.push_back(real("scene.thermal_contrast_max", IAF_REF(scene.thermal_contrast_max)));
    f.push_back(real("scene.color_distractors_mean", IAF_REF(scene.color_distractors_mean)));
    f.push_back(real("scene.thermal_distractors_mean", IAF_REF(scene.thermal_distractors_mean)));
    f.push_back(real("scene.ignore_region_prob", IAF_REF(scene.ignore_region_prob)));
    f.push_back(real("scene.occlusion_prob", IAF_REF(scene.occlusion_prob)));
    f.push_back(count("scene.seed", IAF_REF(scene.seed)));
    f.push_back(count("data.train_frames", IAF_REF(train_frames)));
    f.push_back(count("data.test_frames", IAF_REF(test_frames)));
    // illumination network
    f.push_back(real("ian.lr", IAF_REF(ian.lr)));
    f.push_back(count("ian.batch_size", IAF_REF(ian.batch_size)));
    f.push_back(count("ian.epochs", IAF_REF(ian.epochs)));
    f.push_back(count("ian.seed", IAF_REF(ian.seed)));
    // detector structure
    f.push_back({"detector.arch", "architecture",
                 [](const RunConfig& c) { return detector::to_string(c.detector.arch); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.detector.arch = detector::architecture_from_string(v);
                   } catch (const std::invalid_argument&) {
                     type_error("detector.arch", "one of input, early, halfway, late, score1, score2", v);
                   }
                 }});
    f.push_back(count("detector.image_size", IAF_REF(detector.image_size)));
    f.push_back({"detector.channels", "integer list",
                 [](const RunConfig& c) {
                   const auto& ch = c.detector.channels;
                   return std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2]);
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto r = to_reals("detector.channels", v);
                   if (r.size() != 3) type_error("detector.channels", "three comma-separated integers", v);
                   for (std::size_t i = 0; i < 3; ++i) {
                     if (r[i] < 1 || r[i] != std::floor(r[i])) {
                       type_error("detector.channels", "three comma-separated integers", v);
                     }
                     c.detector.channels[i] = static_cast<std::size_t>(r[i]);
                   }
                 }});
    f.push_back(count("detector.rpn_channels", IAF_REF(detector.rpn_channels)));
    f.push_back(count("detector.fc_units", IAF_REF(detector.fc_units)));
    f.push_back(count("detector.roi_size", IAF_REF(detector.roi_size)));
    f.push_back(reals("detector.anchor_heights", IAF_REF(detector.anchors.heights)));
    f.push_back(reals("detector.anchor_ratios", IAF_REF(detector.anchors.ratios)));
    f.push_back(count("detector.anchors_per_image", IAF_REF(detector.sample.anchors_per_image)));
    f.push_back(real("detector.positive_fraction", IAF_REF(detector.sample.positive_fraction)));
    f.push_back(real("detector.positive_iou", IAF_REF(detector.sample.positive_iou)));
    f.push_back(real("detector.negative_iou", IAF_REF(detector.sample.negative_iou)));
    f.push_back(flag("detector.exclude_ignore", IAF_REF(detector.sample.exclude_ignore)));
    f.push_back(real("detector.ignore_ioa", IAF_REF(detector.sample.ignore_ioa)));
    f.push_back(flag("detector.include_occluded", IAF_REF(detector.sample.include_occluded)));
    f.push_back(real("detector.min_height", IAF_REF(detector.sample.min_height)));
    f.push_back(count("detector.rois_per_image", IAF_REF(detector.roi_sample.rois_per_image)));
    f.push_back(real("detector.foreground_fraction", IAF_REF(detector.roi_sample.foreground_fraction)));
    f.push_back(real("detector.foreground_iou", IAF_REF(detector.roi_sample.foreground_iou)));
    f.push_back(real("detector.background_iou", IAF_REF(detector.roi_sample.background_iou)));
    f.push_back(flag("detector.add_ground_truth_rois", IAF_REF(detector.roi_sample.add_ground_truth)));
    f.push_back(real("detector.proposal_nms", IAF_REF(detector.proposals.nms_threshold)));
    f.push_back(count("detector.proposal_top_k", IAF_REF(detector.proposals.top_k)));
    f.push_back(real("detector.proposal_min_size", IAF_REF(detector.proposals.min_size)));
    // detector training
    f.push_back(real("train.lr", IAF_REF(detector_train.lr)));
    f.push_back(real("train.momentum", IAF_REF(detector_train.momentum)));
    f.push_back(real("train.weight_decay", IAF_REF(detector_train.weight_decay)));
    f.push_back(count("train.epochs", IAF_REF(detector_train.epochs)));
    f.push_back(count("train.lr_drop_epoch", IAF_REF(detector_train.lr_drop_epoch)));
    f.push_back(real("train.lr_drop_factor", IAF_REF(detector_train.lr_drop_factor)));
    f.push_back({"train.loss_weights", "real list",
                 [](const RunConfig& c) {
                   const auto& l = c.detector_train.weights.lambda;
                   return from_reals({l.begin(), l.end()});
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto r = to_reals("train.loss_weights", v);
                   if (r.size() != 7 || std::any_of(r.begin(), r.end(), [](double x) { return x < 0.0; })) {
                     type_error("train.loss_weights", "seven comma-separated non-negative reals", v);
                   }
                   std::copy(r.begin(), r.end(), c.detector_train.weights.lambda.begin());
                 }});
    f.push_back(count("train.seed", IAF_REF(detector_train.seed)));
    // gate optimization
    f.push_back(real("gate.alpha_init", [](auto& c) -> auto& { return c.gate_alpha_init; }));
    f.push_back(real("gate.beta_init", [](auto& c) -> auto& { return c.gate_beta_init; }));
    f.push_back(real("gate.lr", IAF_REF(gate.lr)));
    f.push_back(count("gate.epochs", IAF_REF(gate.epochs)));
    f.push_back(count("gate.lr_drop_epoch", IAF_REF(gate.lr_drop_epoch)));
    f.push_back(real("gate.lr_drop_factor", IAF_REF(gate.lr_drop_factor)));
    f.push_back(real("gate.momentum", IAF_REF(gate.momentum)));
    f.push_back(flag("gate.include_box_loss", IAF_REF(gate.include_box_loss)));
    f.push_back(count("gate.seed", IAF_REF(gate.seed)));
    // detection post-processing
    f.push_back(real("detect.score_threshold", IAF_REF(finalize.score_threshold)));
    f.push_back(real("detect.nms_threshold", IAF_REF(finalize.nms_threshold)));
    f.push_back(count("detect.max_detections", IAF_REF(finalize.max_detections)));
    // evaluation
    f.push_back(real("eval.min_height", IAF_REF(eval.min_height)));
    f.push_back({"eval.max_occlusion", "occlusion level",
                 [](const RunConfig& c) {
                   if (c.eval.allowed_occlusion.count(Occlusion::Heavy)) return std::string("heavy");
                   if (c.eval.allowed_occlusion.count(Occlusion::Partial)) return std::string("partial");
                   return std::string("none");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "none") {
                     c.eval.allowed_occlusion = {Occlusion::None};
                   } else if (v == "partial") {
                     c.eval.allowed_occlusion = {Occlusion::None, Occlusion::Partial};
                   } else if (v == "heavy") {
                     c.eval.allowed_occlusion = {Occlusion::None, Occlusion::Partial, Occlusion::Heavy};
                   } else {
                     type_error("eval.max_occlusion", "none, partial or heavy", v);
                   }
                 }});
    f.push_back(real("eval.match_iou", IAF_REF(eval.match_iou)));
    f.push_back(real("eval.ignore_ioa", IAF_REF(eval.ignore_ioa)));
    return f;
  }();
  return table;
}

#undef IAF_REF

void validate(const RunConfig& c) {
  try {
    c.scene.validate();
    c.detector.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.ian.batch_size == 0) throw ConfigError("key 'ian.batch_size' must be positive");
  if (!(c.gate_alpha_init > 0.0) || !(c.gate_beta_init > 0.0)) {
    throw ConfigError("keys 'gate.alpha_init' and 'gate.beta_init' must be positive");
  }
  if (c.detector.image_size != c.scene.image_size) {
    throw ConfigError("detector.image_size (" + std::to_string(c.detector.image_size) +
                      ") must equal scene.image_size (" + std::to_string(c.scene.image_size) + ")");
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (std::string_view raw : split_lines(text, source)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path), path.string()); }

void write_config(const std::filesystem::path& path, const RunConfig& cfg) {
  write_file_atomic(path, serialize_config(cfg));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace iaf
