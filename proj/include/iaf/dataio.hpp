#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "iaf/annotation.hpp"
#include "iaf/fileutil.hpp"
#include "iaf/imaging.hpp"

namespace iaf {

// Annotation files (bbGt v3 subset):
//   % bbGt version=3
//   label x y w h occluded ignore
// Extra trailing columns are ignored on read.

inline constexpr const char* kBbGtHeader = "% bbGt version=3";

std::string serialize_annotations(const std::vector<GtEntry>& entries);
std::vector<GtEntry> parse_annotations(std::string_view text, const std::string& source = "<memory>");
std::vector<GtEntry> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<GtEntry>& entries);

// Detection files: one "frame_id x y w h score" line per detection.

struct DetectionRecord {
  std::string frame_id;
  BBox box;
  double score;

  bool operator==(const DetectionRecord&) const = default;
};

std::string serialize_detections(const std::vector<DetectionRecord>& dets);
std::vector<DetectionRecord> parse_detections(std::string_view text, const std::string& source = "<memory>");
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& dets);

// Dataset manifest:
//   % iaf manifest version=1
//   % key=value ...            (bookkeeping, optional)
//   frame_id set condition

struct FrameRecord {
  std::string id;
  std::string set;
  Condition condition = Condition::Unknown;

  bool operator==(const FrameRecord&) const = default;
};

struct Manifest {
  std::map<std::string, std::string> info;
  std::vector<FrameRecord> frames;

  std::vector<FrameRecord> frames_in(const std::string& set) const;
  bool contains(const std::string& frame_id) const;
  bool operator==(const Manifest&) const = default;
};

inline constexpr const char* kManifestHeader = "% iaf manifest version=1";

std::string serialize_manifest(const Manifest& m);
Manifest parse_manifest(std::string_view text, const std::string& source = "<memory>");
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Dataset directory layout helpers.
struct DatasetLayout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.txt"; }
  std::filesystem::path color(const FrameRecord& f) const {
    return root / "images" / f.set / (f.id + "_color.ppm");
  }
  std::filesystem::path thermal(const FrameRecord& f) const {
    return root / "images" / f.set / (f.id + "_thermal.pgm");
  }
  std::filesystem::path annotations(const FrameRecord& f) const {
    return root / "annotations" / f.set / (f.id + ".txt");
  }
};

/// Loads one frame's image pair (condition taken from the manifest).
ImagePair load_pair(const DatasetLayout& layout, const FrameRecord& f);

}  // namespace iaf
