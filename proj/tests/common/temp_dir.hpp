#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <unistd.h>

#include "iaf/fileutil.hpp"

namespace test_util {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("iaf_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Relative path -> file contents for every regular file under `root`,
/// skipping names that end in `skip_suffix` when it is non-empty.
inline std::map<std::string, std::string> tree_bytes(const std::filesystem::path& root,
                                                     const std::string& skip_suffix = "") {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = std::filesystem::relative(e.path(), root).generic_string();
    if (!skip_suffix.empty() && rel.size() >= skip_suffix.size() &&
        rel.compare(rel.size() - skip_suffix.size(), skip_suffix.size(), skip_suffix) == 0) {
      continue;
    }
    out[rel] = iaf::read_file(e.path());
  }
  return out;
}

}  // namespace test_util
