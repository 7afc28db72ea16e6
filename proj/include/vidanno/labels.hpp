#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidanno/colormap.hpp"

namespace vidanno {

using LabelId = int;

struct Label {
  LabelId id = 0;
  std::string name;
  Rgb color;

  friend bool operator==(const Label&, const Label&) = default;
};

// Labels are append-only: the ID is the 1-based registration ordinal and the
// color is the colormap entry at that ID. Only names may change.
class LabelRegistry {
 public:
  static constexpr int kCapacity = kColormapSize - 1;

  const Label& create(const std::string& name) {
    if (name.empty()) fail(ErrorKind::Domain, "label name must be non-empty");
    if (find(name)) fail(ErrorKind::Conflict, "label name already registered: " + name);
    if (static_cast<int>(labels_.size()) >= kCapacity) {
      fail(ErrorKind::Capacity, "label capacity (255) exhausted");
    }
    const LabelId id = static_cast<LabelId>(labels_.size()) + 1;
    labels_.push_back(Label{id, name, colormap_entry(id)});
    return labels_.back();
  }

  const Label& rename(LabelId id, const std::string& new_name) {
    Label& label = mutable_get(id);
    if (new_name.empty()) fail(ErrorKind::Domain, "label name must be non-empty");
    if (const Label* other = find(new_name); other && other->id != id) {
      fail(ErrorKind::Conflict, "label name already registered: " + new_name);
    }
    label.name = new_name;
    return label;
  }

  const Label& get(LabelId id) const {
    if (!contains(id)) fail(ErrorKind::NotFound, "unknown label id " + std::to_string(id));
    return labels_[static_cast<std::size_t>(id - 1)];
  }

  bool contains(LabelId id) const noexcept {
    return id >= 1 && id <= static_cast<LabelId>(labels_.size());
  }

  const Label* find(const std::string& name) const noexcept {
    for (const auto& l : labels_) {
      if (l.name == name) return &l;
    }
    return nullptr;
  }

  std::span<const Label> all() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }

  friend bool operator==(const LabelRegistry&, const LabelRegistry&) = default;

 private:
  Label& mutable_get(LabelId id) {
    if (!contains(id)) fail(ErrorKind::NotFound, "unknown label id " + std::to_string(id));
    return labels_[static_cast<std::size_t>(id - 1)];
  }

  std::vector<Label> labels_;
};

}  // namespace vidanno
