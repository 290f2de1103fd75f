#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>

#include <json.hpp>

#include "iaf/fileutil.hpp"
#include "iaf/fusion.hpp"
#include "iaf/illumination.hpp"
#include "iaf/synth.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;

namespace iaf::cli {

namespace {

using Clock = std::chrono::steady_clock;

RunManifest start_manifest(const std::string& command, const RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config = serialize_config(cfg);
  m.tool_version = kToolVersion;
  return m;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

fs::path require_flag(const std::optional<fs::path>& p, const std::string& what, const std::string& flag) {
  if (!p) throw std::runtime_error("missing prerequisite: " + what + " (pass " + flag + ")");
  require_artifact(*p, what);
  return *p;
}

fusion::FinalizeConfig finalize_for(const RunConfig& cfg, const ImagePair& pair) {
  fusion::FinalizeConfig fin = cfg.finalize;
  fin.image_width = static_cast<double>(pair.color.width());
  fin.image_height = static_cast<double>(pair.color.height());
  return fin;
}

void check_image_size(const Split& split, const detector::DetectorConfig& dcfg) {
  for (const auto& s : split.samples) {
    if (s.pair.color.width() != dcfg.image_size || s.pair.color.height() != dcfg.image_size) {
      throw std::runtime_error("frame size " + std::to_string(s.pair.color.width()) + "x" +
                               std::to_string(s.pair.color.height()) + " does not match detector.image_size " +
                               std::to_string(dcfg.image_size));
    }
  }
}

struct Weighting {
  fusion::WeightingMode mode = fusion::WeightingMode::Average;
  std::optional<double> forced;
};

std::vector<DetectionRecord> detect_split(const detector::DetectorModel& model, const Split& split,
                                          const Weighting& w, const illumination::IanModel* ian,
                                          const fusion::GateParams& gate, const RunConfig& cfg) {
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    const ImagePair& pair = split.samples[i].pair;
    const auto fin = finalize_for(cfg, pair);
    std::vector<ScoredBox> dets;
    if (w.forced) {
      const auto fwd = model.forward(pair);
      dets = fusion::finalize_detections(fusion::fuse(fwd.streams[0], fwd.streams[1], {*w.forced}), fin);
    } else {
      const double iv = ian ? ian->infer(pair.color) : 0.5;
      dets = detector::detect(model, pair, w.mode, iv, gate, fin);
    }
    for (const ScoredBox& d : dets) out.push_back({split.frames[i].id, d.box, d.score});
  }
  return out;
}

std::vector<eval::Frame> eval_frames(const Split& split, const std::vector<DetectionRecord>& dets,
                                     const Manifest& manifest, const eval::EvalConfig& ecfg) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < split.frames.size(); ++i) index[split.frames[i].id] = i;
  std::vector<eval::Frame> frames(split.frames.size());
  for (const DetectionRecord& d : dets) {
    if (!manifest.contains(d.frame_id)) {
      throw std::runtime_error("detection for frame '" + d.frame_id + "' which is not in the manifest");
    }
    const auto it = index.find(d.frame_id);
    if (it != index.end()) frames[it->second].dets.push_back({d.box, d.score});
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto& f = frames[i];
    std::stable_sort(f.dets.begin(), f.dets.end(),
                     [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    f.gts = eval::apply_reasonable(split.samples[i].annotations, ecfg);
    f.condition = split.frames[i].condition;
  }
  return frames;
}

nlohmann::ordered_json lamr_json(const eval::ConditionBreakdown& b) {
  nlohmann::ordered_json j;
  const auto put = [&](const char* key, const std::optional<eval::EvalResult>& r) {
    j[key] = r ? nlohmann::ordered_json(r->lamr) : nlohmann::ordered_json(nullptr);
  };
  put("all", b.all);
  put("day", b.day);
  put("night", b.night);
  return j;
}

/// Writes `<prefix>all.csv` etc. for every evaluated condition.
void write_curves(const eval::ConditionBreakdown& b, const fs::path& dir, const std::string& prefix,
                  std::vector<fs::path>& written) {
  const std::pair<const char*, const std::optional<eval::EvalResult>*> parts[] = {
      {"all", &b.all}, {"day", &b.day}, {"night", &b.night}};
  for (const auto& [name, r] : parts) {
    if (!*r) continue;
    const fs::path p = dir / (prefix + name + ".csv");
    write_file_atomic(p, eval::curve_csv((*r)->curve));
    written.push_back(p);
  }
}

eval::ConditionBreakdown evaluate_or_throw(const std::vector<eval::Frame>& frames, const eval::EvalConfig& ecfg) {
  auto b = eval::evaluate_by_condition(frames, ecfg);
  if (!b.all) throw std::runtime_error("no evaluable ground truth in the selected split");
  return b;
}

}  // namespace

fs::path resolve_output_dir(const std::optional<fs::path>& out) {
  if (out) return *out;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return fs::path(env);
  throw UsageError(std::string("no output directory: pass --out or set ") + kOutputDirEnv);
}

RunConfig resolve_config(const std::optional<fs::path>& path) {
  if (!path) return RunConfig{};
  require_artifact(*path, "config file");
  return load_config(*path);
}

void require_artifact(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + what + ": " + path.string());
}

Split load_split(const fs::path& data_dir, const std::string& set) {
  Split s;
  s.layout.root = data_dir;
  require_artifact(s.layout.manifest(), "dataset manifest");
  const Manifest m = read_manifest(s.layout.manifest());
  s.frames = m.frames_in(set);
  if (s.frames.empty()) throw std::runtime_error("dataset has no '" + set + "' frames: " + data_dir.string());
  for (const FrameRecord& f : s.frames) {
    s.samples.push_back({load_pair(s.layout, f), read_annotations(s.layout.annotations(f))});
  }
  return s;
}

// ------------------------------------------------------------------ synth

std::vector<fs::path> run_synth(const SynthArgs& a) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  RunConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.scene.seed = *a.seed;

  synth::generate_dataset(cfg.scene, cfg.train_frames, cfg.test_frames, out);
  const DatasetLayout layout{out};
  std::cout << "synth: " << cfg.train_frames << " train + " << cfg.test_frames << " test frames -> "
            << out.string() << "\n";

  RunManifest m = start_manifest("synth", cfg);
  m.seed = cfg.scene.seed;
  if (a.config) m.inputs["config"] = a.config->string();
  m.outputs = {layout.manifest().string()};
  return {layout.manifest(), finish_manifest(m, out, start)};
}

// --------------------------------------------------------------- training

std::vector<fs::path> run_train_ian(const TrainArgs& a) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  RunConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.ian.seed = *a.seed;
  const Split split = load_split(a.data, "train");

  std::vector<illumination::LabeledImage> data;
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    data.push_back({split.samples[i].pair.color, split.frames[i].condition});
  }
  const auto res = illumination::ian_train(data, cfg.ian);

  const fs::path ckpt = out / "ian.ckpt";
  const fs::path log = out / "ian_loss.csv";
  illumination::save_ian(ckpt, res.model);
  std::string csv = "epoch,step,loss\n";
  for (const auto& s : res.steps) {
    csv += std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + format_double(s.loss) + "\n";
  }
  write_file_atomic(log, csv);

  std::size_t correct = 0;
  for (const auto& d : data) {
    const bool day = res.model.infer(d.color) > 0.5;
    correct += day == (d.condition == Condition::Day);
  }
  std::cout << "train-ian: " << res.steps.size() << " steps, final loss " << fixed4(res.epoch_losses.back())
            << ", train accuracy " << fixed4(static_cast<double>(correct) / static_cast<double>(data.size()))
            << "\n";

  RunManifest m = start_manifest("train-ian", cfg);
  m.seed = cfg.ian.seed;
  m.inputs["data"] = a.data.string();
  m.outputs = {ckpt.string(), log.string()};
  return {ckpt, log, finish_manifest(m, out, start)};
}

std::vector<fs::path> run_train_detector(const TrainArgs& a) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  RunConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.detector_train.seed = *a.seed;
  if (a.arch) cfg.detector.arch = detector::architecture_from_string(*a.arch);
  const Split split = load_split(a.data, "train");
  check_image_size(split, cfg.detector);

  const auto res = detector::train_detector(split.samples, cfg.detector_train, cfg.detector);

  const fs::path ckpt = out / "detector.ckpt";
  const fs::path log = out / "detector_loss.csv";
  detector::save_detector(ckpt, res.model);
  std::string csv = "epoch,step,lr,total";
  for (const char* n : detector::kLossTermNames) csv += std::string(",") + n;
  csv += "\n";
  for (const auto& s : res.steps) {
    csv += std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + format_double(s.lr) + "," +
           format_double(s.loss.total);
    for (double t : s.loss.terms) csv += "," + format_double(t);
    csv += "\n";
  }
  write_file_atomic(log, csv);
  std::cout << "train-detector: " << detector::to_string(cfg.detector.arch) << ", " << res.steps.size()
            << " steps, last epoch mean loss " << fixed4(res.epoch_means.back().total) << "\n";

  RunManifest m = start_manifest("train-detector", cfg);
  m.seed = cfg.detector_train.seed;
  m.inputs["data"] = a.data.string();
  m.outputs = {ckpt.string(), log.string()};
  return {ckpt, log, finish_manifest(m, out, start)};
}

std::vector<fs::path> run_optimize_gate(const GateArgs& a) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  RunConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.gate.seed = *a.seed;
  const fs::path model_path = require_flag(a.model, "detector checkpoint", "--model");
  const fs::path ian_path = require_flag(a.ian, "IAN checkpoint", "--ian");

  const auto model = detector::load_detector(model_path);
  if (!model.trained()) throw std::runtime_error("detector checkpoint is untrained: " + model_path.string());
  const auto ian = illumination::load_ian(ian_path);
  const Split split = load_split(a.data, "train");
  check_image_size(split, model.config());

  const auto samples = detector::collect_gate_samples(model, ian, split.samples, cfg.gate.seed);
  const auto res =
      fusion::optimize_gate(samples, fusion::GateParams(cfg.gate_alpha_init, cfg.gate_beta_init), cfg.gate);

  const fs::path gate = out / "gate.txt";
  const fs::path log = out / "gate_loss.csv";
  fusion::write_gate(gate, res.params);
  std::string csv = "epoch,step,lr,loss\n";
  for (const auto& s : res.steps) {
    csv += std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + format_double(s.lr) + "," +
           format_double(s.loss) + "\n";
  }
  write_file_atomic(log, csv);
  std::cout << "optimize-gate: alpha " << format_double(res.params.alpha()) << ", beta "
            << format_double(res.params.beta()) << ", loss " << fixed4(res.epoch_losses.front()) << " -> "
            << fixed4(res.epoch_losses.back()) << "\n";

  RunManifest m = start_manifest("optimize-gate", cfg);
  m.seed = cfg.gate.seed;
  m.inputs = {{"data", a.data.string()}, {"model", model_path.string()}, {"ian", ian_path.string()}};
  m.outputs = {gate.string(), log.string()};
  return {gate, log, finish_manifest(m, out, start)};
}

// ----------------------------------------------------------------- detect

std::vector<fs::path> run_detect(const DetectArgs& a) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  const RunConfig cfg = resolve_config(a.config);

  Weighting w;
  try {
    w.mode = fusion::weighting_from_string(a.weighting);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.force_weight) {
    if (w.mode != fusion::WeightingMode::IlluminationAware) throw UsageError("--force-weight needs --weighting ia");
    if (!(*a.force_weight >= 0.0 && *a.force_weight <= 1.0)) throw UsageError("--force-weight must be in [0, 1]");
    w.forced = *a.force_weight;
  }

  const fs::path model_path = require_flag(a.model, "detector checkpoint", "--model");
  const auto model = detector::load_detector(model_path);
  if (a.arch && detector::architecture_from_string(*a.arch) != model.architecture()) {
    throw std::runtime_error("architecture mismatch: --arch " + *a.arch + " but the checkpoint holds a " +
                             detector::to_string(model.architecture()) + " model");
  }
  if (w.mode != fusion::WeightingMode::Average && model.architecture() != detector::FusionArchitecture::ScoreFusionII) {
    throw std::runtime_error("weighting '" + a.weighting + "' needs a score2 model, got " +
                             detector::to_string(model.architecture()));
  }

  std::optional<illumination::IanModel> ian;
  fusion::GateParams gate;
  RunManifest m = start_manifest("detect", cfg);
  m.inputs = {{"data", a.data.string()}, {"model", model_path.string()}, {"weighting", a.weighting},
              {"set", a.set}};
  if (w.mode != fusion::WeightingMode::Average && !w.forced) {
    const fs::path ian_path = require_flag(a.ian, "IAN checkpoint", "--ian");
    ian = illumination::load_ian(ian_path);
    m.inputs["ian"] = ian_path.string();
  }
  if (w.mode == fusion::WeightingMode::IlluminationAware && !w.forced) {
    const fs::path gate_path = require_flag(a.gate, "gate parameters", "--gate");
    gate = fusion::read_gate(gate_path);
    m.inputs["gate"] = gate_path.string();
  }
  if (w.forced) m.inputs["force_weight"] = format_double(*w.forced);

  const Split split = load_split(a.data, a.set);
  check_image_size(split, model.config());
  const auto dets = detect_split(model, split, w, ian ? &*ian : nullptr, gate, cfg);

  const fs::path file = out / "detections.txt";
  write_detections(file, dets);
  std::cout << "detect: " << dets.size() << " detections on " << split.frames.size() << " frames -> "
            << file.string() << "\n";
  m.outputs = {file.string()};
  return {file, finish_manifest(m, out, start)};
}

// ------------------------------------------------------------------- eval

std::vector<fs::path> run_eval(const EvalArgs& a) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  const RunConfig cfg = resolve_config(a.config);
  if (!a.self_check && !a.detections) throw UsageError("eval needs --detections (or --self-check)");

  const Split split = load_split(a.data, a.set);
  const Manifest manifest = read_manifest(split.layout.manifest());
  RunManifest m = start_manifest("eval", cfg);
  m.inputs = {{"data", a.data.string()}, {"set", a.set}};

  std::vector<DetectionRecord> dets;
  if (a.self_check) {
    // Ground truth scored as perfect detections: must give the floor lamr.
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
      for (const auto& g : eval::apply_reasonable(split.samples[i].annotations, cfg.eval)) {
        if (!g.ignore) dets.push_back({split.frames[i].id, g.bbox, 1.0});
      }
    }
    m.inputs["self_check"] = "true";
  } else {
    require_artifact(*a.detections, "detection file");
    dets = read_detections(*a.detections);
    m.inputs["detections"] = a.detections->string();
  }

  const auto frames = eval_frames(split, dets, manifest, cfg.eval);
  const auto b = evaluate_or_throw(frames, cfg.eval);

  std::vector<fs::path> written;
  write_curves(b, out, "curve_", written);
  const fs::path summary = out / "lamr.json";
  write_file_atomic(summary, lamr_json(b).dump(2) + "\n");
  written.push_back(summary);

  const auto show = [](const char* name, const std::optional<eval::EvalResult>& r) {
    std::cout << "  " << name << ": " << (r ? format_double(r->lamr) : std::string("n/a")) << "\n";
  };
  std::cout << "eval (" << a.set << ", " << split.frames.size() << " frames) log-average miss rate\n";
  show("all", b.all);
  show("day", b.day);
  show("night", b.night);
  if (a.self_check) {
    if (!(b.all->lamr < 1e-9)) {
      throw std::runtime_error("self-check failed: perfect detections give lamr " + format_double(b.all->lamr));
    }
    std::cout << "self-check ok\n";
  }

  for (const auto& p : written) m.outputs.push_back(p.string());
  written.push_back(finish_manifest(m, out, start));
  return written;
}

// ---------------------------------------------------------------- compare

std::vector<CompareRow> rank_rows(std::vector<CompareRow> rows) {
  const auto key = [](const CompareRow& r) { return r.result.all ? r.result.all->lamr : 1.0; };
  std::stable_sort(rows.begin(), rows.end(), [&](const CompareRow& a, const CompareRow& b) { return key(a) < key(b); });
  return rows;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  const auto cell = [](const std::optional<eval::EvalResult>& r) { return r ? fixed4(r->lamr) : std::string("   n/a"); };
  std::string s = "rank  weighting  all     day     night\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-4zu  %-9s  %s  %s  %s\n", i + 1, rows[i].mode.c_str(),
                  cell(rows[i].result.all).c_str(), cell(rows[i].result.day).c_str(),
                  cell(rows[i].result.night).c_str());
    s += buf;
  }
  return s;
}

std::vector<fs::path> run_compare(const CompareArgs& a, std::string* table) {
  const auto start = Clock::now();
  const fs::path out = resolve_output_dir(a.out);
  const RunConfig cfg = resolve_config(a.config);
  const fs::path model_path = require_flag(a.model, "detector checkpoint", "--model");
  const fs::path ian_path = require_flag(a.ian, "IAN checkpoint", "--ian");
  const fs::path gate_path = require_flag(a.gate, "gate parameters", "--gate");

  const auto model = detector::load_detector(model_path);
  if (model.architecture() != detector::FusionArchitecture::ScoreFusionII) {
    throw std::runtime_error("compare needs a score2 model, got " + detector::to_string(model.architecture()));
  }
  const auto ian = illumination::load_ian(ian_path);
  const auto gate = fusion::read_gate(gate_path);
  const Split split = load_split(a.data, a.set);
  check_image_size(split, model.config());
  const Manifest manifest = read_manifest(split.layout.manifest());

  std::vector<fs::path> written;
  std::vector<CompareRow> rows;
  for (auto mode : {fusion::WeightingMode::Average, fusion::WeightingMode::Hard01,
                    fusion::WeightingMode::IlluminationAware}) {
    const std::string name = fusion::to_string(mode);
    const auto dets = detect_split(model, split, {mode, std::nullopt}, &ian, gate, cfg);
    const fs::path det_file = out / ("detections_" + name + ".txt");
    write_detections(det_file, dets);
    written.push_back(det_file);
    auto b = evaluate_or_throw(eval_frames(split, dets, manifest, cfg.eval), cfg.eval);
    write_curves(b, out, "curve_" + name + "_", written);
    rows.push_back({name, std::move(b)});
  }
  rows = rank_rows(std::move(rows));
  const std::string text = format_compare_table(rows);
  std::cout << text;
  if (table) *table = text;

  const fs::path table_file = out / "compare.txt";
  write_file_atomic(table_file, text);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    nlohmann::ordered_json r;
    r["rank"] = i + 1;
    r["weighting"] = rows[i].mode;
    r["lamr"] = lamr_json(rows[i].result);
    j.push_back(r);
  }
  const fs::path json_file = out / "compare.json";
  write_file_atomic(json_file, j.dump(2) + "\n");
  written.push_back(table_file);
  written.push_back(json_file);

  RunManifest m = start_manifest("compare", cfg);
  m.inputs = {{"data", a.data.string()}, {"model", model_path.string()}, {"ian", ian_path.string()},
              {"gate", gate_path.string()}, {"set", a.set}};
  for (const auto& p : written) m.outputs.push_back(p.string());
  written.push_back(finish_manifest(m, out, start));
  return written;
}

// ------------------------------------------------------------------- plot

std::string render_svg(const std::vector<std::vector<eval::CurvePoint>>& curves,
                       const std::vector<std::string>& labels) {
  constexpr double kW = 640, kH = 480, kLeft = 70, kRight = 160, kTop = 30, kBottom = 60;
  constexpr double kXMin = -2, kXMax = 1, kYMin = -2, kYMax = 0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const auto px = [&](double fppi) {
    const double l = fppi > 0 ? std::clamp(std::log10(fppi), kXMin, kXMax) : kXMin;
    return kLeft + (l - kXMin) / (kXMax - kXMin) * pw;
  };
  const auto py = [&](double mr) {
    const double l = mr > 0 ? std::clamp(std::log10(mr), kYMin, kYMax) : kYMin;
    return kTop + (kYMax - l) / (kYMax - kYMin) * ph;
  };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kW) + "\" height=\"" + num(kH) + "\" fill=\"white\"/>\n";
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  const char* xticks[] = {"0.01", "0.1", "1", "10"};
  for (int d = 0; d <= 3; ++d) {
    const double x = px(std::pow(10.0, kXMin + d));
    s += "<line x1=\"" + num(x) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(x) + "\" y2=\"" + num(kTop + ph) +
         "\" stroke=\"#ccc\"/>\n";
    s += "<text x=\"" + num(x) + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\" font-size=\"12\">" +
         xticks[d] + "</text>\n";
  }
  const char* yticks[] = {"0.01", "0.1", "1"};
  for (int d = 0; d <= 2; ++d) {
    const double y = py(std::pow(10.0, kYMin + d));
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" + num(y) +
         "\" stroke=\"#ccc\"/>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\" font-size=\"12\">" +
         yticks[d] + "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kH - 15) +
       "\" text-anchor=\"middle\" font-size=\"13\">false positives per image</text>\n";
  s += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " +
       num(kTop + ph / 2) + ")\">miss rate</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % std::size(kColors)];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curves[c].size(); ++i) {
      if (i) s += " ";
      s += num(px(curves[c][i].fppi)) + "," + num(py(curves[c][i].miss_rate));
    }
    s += "\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(c);
    s += "<text x=\"" + num(kLeft + pw + 10) + "\" y=\"" + num(ly) + "\" font-size=\"12\" fill=\"" + color + "\">" +
         (c < labels.size() ? labels[c] : "curve " + std::to_string(c + 1)) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<fs::path> run_plot(const PlotArgs& a) {
  const auto start = Clock::now();
  if (a.curves.empty()) throw UsageError("plot needs at least one --curve");
  if (!a.labels.empty() && a.labels.size() != a.curves.size()) {
    throw UsageError("plot: " + std::to_string(a.labels.size()) + " labels for " + std::to_string(a.curves.size()) +
                     " curves");
  }
  const fs::path out = resolve_output_dir(a.out);
  std::vector<std::vector<eval::CurvePoint>> curves;
  std::vector<std::string> labels = a.labels;
  RunManifest m;
  m.command = "plot";
  m.tool_version = kToolVersion;
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    require_artifact(a.curves[i], "curve file");
    curves.push_back(eval::parse_curve_csv(read_file(a.curves[i]), a.curves[i].string()));
    if (a.labels.empty()) labels.push_back(a.curves[i].stem().string());
    m.inputs["curve" + std::to_string(i + 1)] = a.curves[i].string();
  }
  const fs::path svg = out / a.name;
  write_file_atomic(svg, render_svg(curves, labels));
  std::cout << "plot: " << curves.size() << " curve(s) -> " << svg.string() << "\n";
  m.outputs = {svg.string()};
  return {svg, finish_manifest(m, out, start)};
}

}  // namespace iaf::cli
