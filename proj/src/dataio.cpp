#include "iaf/dataio.hpp"

#include <algorithm>

namespace iaf {

std::string to_string(Label label) {
  switch (label) {
    case Label::Person: return "person";
    case Label::PersonUncertain: return "person?";
    case Label::People: return "people";
    case Label::Cyclist: return "cyclist";
  }
  return "person";
}

Label label_from_string(const std::string& token) {
  if (token == "person") return Label::Person;
  if (token == "person?") return Label::PersonUncertain;
  if (token == "people") return Label::People;
  if (token == "cyclist") return Label::Cyclist;
  throw std::invalid_argument("unknown label '" + token + "'");
}

namespace {

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& msg) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + msg);
}

BBox parse_box(const std::vector<std::string_view>& tok, std::size_t first,
               const std::string& source, std::size_t line) {
  try {
    return BBox(parse_double(tok[first]), parse_double(tok[first + 1]),
                parse_double(tok[first + 2]), parse_double(tok[first + 3]));
  } catch (const std::invalid_argument& e) {
    fail(source, line, e.what());
  }
}

void append_box(std::string& out, const BBox& b) {
  out += format_double(b.x()) + ' ' + format_double(b.y()) + ' ' + format_double(b.w()) + ' ' +
         format_double(b.h());
}

}  // namespace

// ---------------------------------------------------------------- annotations

std::string serialize_annotations(const std::vector<GtEntry>& entries) {
  std::string out = std::string(kBbGtHeader) + "\n";
  for (const GtEntry& e : entries) {
    out += to_string(e.label) + ' ';
    append_box(out, e.bbox);
    out += ' ' + std::to_string(static_cast<int>(e.occlusion)) + ' ' + (e.ignore ? "1" : "0") + '\n';
  }
  return out;
}

std::vector<GtEntry> parse_annotations(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text, source);
  if (lines.empty() || trim(lines[0]) != kBbGtHeader) {
    fail(source, 1, std::string("expected header '") + kBbGtHeader + "'");
  }
  std::vector<GtEntry> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    const auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    if (tok.size() < 7) fail(source, ln, "expected 'label x y w h occluded ignore'");
    GtEntry e;
    try {
      e.label = label_from_string(std::string(tok[0]));
    } catch (const std::invalid_argument& ex) {
      fail(source, ln, ex.what());
    }
    e.bbox = parse_box(tok, 1, source, ln);
    long long occ = -1, ign = -1;
    try {
      occ = parse_int(tok[5]);
      ign = parse_int(tok[6]);
    } catch (const std::invalid_argument& ex) {
      fail(source, ln, ex.what());
    }
    if (occ < 0 || occ > 2) fail(source, ln, "occluded must be 0, 1 or 2");
    if (ign != 0 && ign != 1) fail(source, ln, "ignore must be 0 or 1");
    e.occlusion = static_cast<Occlusion>(occ);
    e.ignore = ign == 1;
    out.push_back(e);
  }
  return out;
}

std::vector<GtEntry> read_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_file(path), path.string());
}

void write_annotations(const std::filesystem::path& path, const std::vector<GtEntry>& entries) {
  write_file_atomic(path, serialize_annotations(entries));
}

// ---------------------------------------------------------------- detections

std::string serialize_detections(const std::vector<DetectionRecord>& dets) {
  std::string out;
  for (const DetectionRecord& d : dets) {
    out += d.frame_id + ' ';
    append_box(out, d.box);
    out += ' ' + format_double(d.score) + '\n';
  }
  return out;
}

std::vector<DetectionRecord> parse_detections(std::string_view text, const std::string& source) {
  std::vector<DetectionRecord> out;
  const auto lines = split_lines(text, source);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    if (tok.size() != 6) fail(source, i + 1, "expected 'frame_id x y w h score'");
    BBox box = parse_box(tok, 1, source, i + 1);
    double score = 0.0;
    try {
      score = parse_double(tok[5]);
    } catch (const std::invalid_argument& e) {
      fail(source, i + 1, e.what());
    }
    if (score < 0.0 || score > 1.0) fail(source, i + 1, "score must lie in [0,1]");
    out.push_back({std::string(tok[0]), box, score});
  }
  return out;
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  return parse_detections(read_file(path), path.string());
}

void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& dets) {
  write_file_atomic(path, serialize_detections(dets));
}

// ---------------------------------------------------------------- manifest

std::vector<FrameRecord> Manifest::frames_in(const std::string& set) const {
  std::vector<FrameRecord> out;
  std::copy_if(frames.begin(), frames.end(), std::back_inserter(out),
               [&](const FrameRecord& f) { return f.set == set; });
  return out;
}

bool Manifest::contains(const std::string& frame_id) const {
  return std::any_of(frames.begin(), frames.end(),
                     [&](const FrameRecord& f) { return f.id == frame_id; });
}

std::string serialize_manifest(const Manifest& m) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& [k, v] : m.info) out += "% " + k + "=" + v + "\n";
  for (const FrameRecord& f : m.frames) out += f.id + ' ' + f.set + ' ' + to_string(f.condition) + '\n';
  return out;
}

Manifest parse_manifest(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text, source);
  if (lines.empty() || trim(lines[0]) != kManifestHeader) {
    fail(source, 1, std::string("expected header '") + kManifestHeader + "'");
  }
  Manifest m;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() == '%') {
      line = trim(line.substr(1));
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(source, i + 1, "expected '% key=value'");
      m.info[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
      continue;
    }
    const auto tok = split_ws(line);
    if (tok.size() != 3) fail(source, i + 1, "expected 'frame_id set condition'");
    FrameRecord f{std::string(tok[0]), std::string(tok[1]), Condition::Unknown};
    try {
      f.condition = condition_from_string(std::string(tok[2]));
    } catch (const std::invalid_argument& e) {
      fail(source, i + 1, e.what());
    }
    if (m.contains(f.id)) fail(source, i + 1, "duplicate frame id '" + f.id + "'");
    m.frames.push_back(std::move(f));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.string());
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file_atomic(path, serialize_manifest(m));
}

ImagePair load_pair(const DatasetLayout& layout, const FrameRecord& f) {
  ImagePair pair{read_pnm(layout.color(f)), read_pnm(layout.thermal(f)), f.condition};
  pair.validate();
  return pair;
}

}  // namespace iaf
