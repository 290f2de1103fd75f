#pragma once

#include <string>

#include "iaf/boxes.hpp"

namespace iaf {

enum class Label { Person, PersonUncertain, People, Cyclist };
enum class Occlusion { None = 0, Partial = 1, Heavy = 2 };

/// "person", "person?", "people", "cyclist".
std::string to_string(Label label);
/// Throws std::invalid_argument on an unknown token.
Label label_from_string(const std::string& token);

/// One ground-truth annotation. `ignore` is the flag stored in the file;
/// evaluation ORs it with the reasonable-configuration filter.
struct GtEntry {
  Label label = Label::Person;
  BBox bbox{0, 0, 1, 1};
  Occlusion occlusion = Occlusion::None;
  bool ignore = false;

  bool operator==(const GtEntry&) const = default;
};

}  // namespace iaf
