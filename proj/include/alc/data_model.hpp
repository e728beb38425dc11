// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alc/geometry.hpp"

namespace alc {

using ImageId = std::int64_t;
using LabelId = std::int64_t;

/// Who produced a label. ModelP is trained on expert labels, ModelA on the
/// crowd/expert consensus subset.
enum class Source { Crowd, Expert, ModelP, ModelA };

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::Crowd: return "crowd";
    case Source::Expert: return "expert";
    case Source::ModelP: return "model-p";
    case Source::ModelA: return "model-a";
  }
  return "?";
}

inline Source source_from_string(std::string_view s) {
  if (s == "crowd") return Source::Crowd;
  if (s == "expert") return Source::Expert;
  if (s == "model-p") return Source::ModelP;
  if (s == "model-a") return Source::ModelA;
  throw std::invalid_argument("unknown label source '" + std::string(s) + "'");
}

inline bool is_human(Source s) { return s == Source::Crowd || s == Source::Expert; }

struct Label {
  Box box;
  ImageId image_id = 0;
  int category_id = 1;
  Source source = Source::Crowd;
  double confidence = 1.0;
  LabelId label_id = 0;
  std::string note;

  friend bool operator==(const Label&, const Label&) = default;
};

struct ImageInfo {
  ImageId id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct Category {
  int id = 1;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

/// Per-image label lists for one source plus the image table.
///
/// Invariants enforced on insertion: every label refers to a known image,
/// label ids are unique, confidences lie in [0,1] and human labels carry
/// confidence exactly 1.
class AnnotationSet {
 public:
  explicit AnnotationSet(Source source = Source::Crowd) : source_(source) {}

  Source source() const noexcept { return source_; }

  void add_image(const ImageInfo& info) {
    if (info.width <= 0 || info.height <= 0)
      throw std::invalid_argument("image " + std::to_string(info.id) + " has non-positive size");
    images_[info.id] = info;
  }

  bool has_image(ImageId id) const { return images_.count(id) != 0; }

  const ImageInfo& image(ImageId id) const {
    auto it = images_.find(id);
    if (it == images_.end()) throw std::out_of_range("unknown image " + std::to_string(id));
    return it->second;
  }

  const std::map<ImageId, ImageInfo>& images() const noexcept { return images_; }

  std::vector<ImageId> image_ids() const {
    std::vector<ImageId> ids;
    ids.reserve(images_.size());
    for (const auto& [id, _] : images_) ids.push_back(id);
    return ids;
  }

  const std::vector<Category>& categories() const noexcept { return categories_; }
  void set_categories(std::vector<Category> cats) { categories_ = std::move(cats); }

  void add_label(Label label) {
    validate(label);
    if (!label_ids_.insert(label.label_id).second)
      throw std::invalid_argument("duplicate label id " + std::to_string(label.label_id));
    labels_[label.image_id].push_back(std::move(label));
  }

  /// Replaces every label on `image`.
  void set_labels(ImageId image, std::vector<Label> labels) {
    erase_labels(image);
    for (auto& l : labels) {
      if (l.image_id != image)
        throw std::invalid_argument("label " + std::to_string(l.label_id) + " belongs to image " +
                                    std::to_string(l.image_id));
      add_label(std::move(l));
    }
  }

  void erase_labels(ImageId image) {
    auto it = labels_.find(image);
    if (it == labels_.end()) return;
    for (const auto& l : it->second) label_ids_.erase(l.label_id);
    labels_.erase(it);
  }

  std::span<const Label> labels(ImageId image) const {
    auto it = labels_.find(image);
    if (it == labels_.end()) return {};
    return it->second;
  }

  bool has_label(LabelId id) const { return label_ids_.count(id) != 0; }

  std::size_t label_count() const noexcept { return label_ids_.size(); }

  std::vector<Label> all_labels() const {
    std::vector<Label> out;
    out.reserve(label_count());
    for (const auto& [_, ls] : labels_) out.insert(out.end(), ls.begin(), ls.end());
    return out;
  }

  /// One past the largest label id in use (1 for an empty set).
  LabelId next_label_id() const { return label_ids_.empty() ? 1 : *label_ids_.rbegin() + 1; }

  /// Copy holding only the given images (labels and table entries).
  AnnotationSet restricted_to(std::span<const ImageId> ids) const {
    AnnotationSet out(source_);
    out.categories_ = categories_;
    for (auto id : ids) {
      out.add_image(image(id));
      for (const auto& l : labels(id)) out.add_label(l);
    }
    return out;
  }

  friend bool operator==(const AnnotationSet& a, const AnnotationSet& b) {
    if (a.source_ != b.source_ || a.images_ != b.images_ || a.categories_ != b.categories_)
      return false;
    for (const auto& [id, _] : a.images_) {
      auto la = a.labels(id), lb = b.labels(id);
      if (!std::equal(la.begin(), la.end(), lb.begin(), lb.end())) return false;
    }
    return a.label_count() == b.label_count();
  }

 private:
  void validate(const Label& l) const {
    if (!has_image(l.image_id))
      throw std::invalid_argument("label " + std::to_string(l.label_id) + " refers to unknown image " +
                                  std::to_string(l.image_id));
    if (!(l.confidence >= 0.0 && l.confidence <= 1.0))
      throw std::invalid_argument("label " + std::to_string(l.label_id) + " confidence out of [0,1]");
    if (is_human(l.source) && l.confidence != 1.0)
      throw std::invalid_argument("human label " + std::to_string(l.label_id) +
                                  " must have confidence 1");
  }

  Source source_;
  std::map<ImageId, ImageInfo> images_;
  std::map<ImageId, std::vector<Label>> labels_;
  std::set<LabelId> label_ids_;
  std::vector<Category> categories_{{1, "EDD"}};
};

}  // namespace alc
