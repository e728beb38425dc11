// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "alc/data_model.hpp"
#include "alc/json_io.hpp"

namespace alc {

namespace detail {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field '" + key + "' has wrong type");
  }
}

inline Label parse_annotation(const json& a, std::size_t index, Source source) {
  const std::string where = "annotations[" + std::to_string(index) + "]";
  if (!a.is_object()) throw SchemaError(where + ": not an object");
  const auto id = field<LabelId>(a, "id", where);
  const std::string tag = where + " (id " + std::to_string(id) + ")";
  const auto bbox = field<std::vector<double>>(a, "bbox", tag);
  if (bbox.size() != 4) throw SchemaError(tag + ": bbox must have 4 numbers");
  if (!(bbox[2] > 0.0) || !(bbox[3] > 0.0))
    throw SchemaError("annotation id " + std::to_string(id) +
                      ": bbox has non-positive width or height");
  double score = 1.0;
  if (auto it = a.find("score"); it != a.end()) {
    if (!it->is_number()) throw SchemaError(tag + ": field 'score' has wrong type");
    score = it->get<double>();
    if (!(score >= 0.0 && score <= 1.0))
      throw SchemaError("annotation id " + std::to_string(id) + ": score " + std::to_string(score) +
                        " outside [0,1]");
  }
  Label l{Box(bbox[0], bbox[1], bbox[2], bbox[3]),
          field<ImageId>(a, "image_id", tag),
          a.contains("category_id") ? field<int>(a, "category_id", tag) : 1,
          source,
          is_human(source) ? 1.0 : score,
          id,
          a.contains("note") ? field<std::string>(a, "note", tag) : std::string{}};
  return l;
}

}  // namespace detail

/// Builds an AnnotationSet from a COCO-style document. All annotations take
/// `source`; the optional "score" extension becomes the confidence of model
/// labels.
inline AnnotationSet parse_coco(const json& doc, Source source, const std::string& context = "coco") {
  if (!doc.is_object()) throw SchemaError(context + ": top level must be an object");
  AnnotationSet set(source);
  try {
    if (auto it = doc.find("categories"); it != doc.end() && !it->empty()) {
      std::vector<Category> cats;
      for (std::size_t i = 0; i < it->size(); ++i) {
        const std::string where = context + ": categories[" + std::to_string(i) + "]";
        cats.push_back({detail::field<int>((*it)[i], "id", where),
                        (*it)[i].value("name", std::string{})});
      }
      set.set_categories(std::move(cats));
    }
    const auto& images = doc.at("images");
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::string where = context + ": images[" + std::to_string(i) + "]";
      const auto& im = images[i];
      ImageInfo info{detail::field<ImageId>(im, "id", where),
                     im.value("file_name", std::string{}),
                     detail::field<int>(im, "width", where), detail::field<int>(im, "height", where)};
      if (info.width <= 0 || info.height <= 0)
        throw SchemaError(where + ": width and height must be positive");
      set.add_image(info);
    }
    const auto& anns = doc.at("annotations");
    for (std::size_t i = 0; i < anns.size(); ++i) {
      Label l = detail::parse_annotation(anns[i], i, source);
      if (!set.has_image(l.image_id))
        throw SchemaError(context + ": annotation id " + std::to_string(l.label_id) +
                          " refers to unknown image " + std::to_string(l.image_id));
      if (set.has_label(l.label_id))
        throw SchemaError(context + ": duplicate annotation id " + std::to_string(l.label_id));
      set.add_label(std::move(l));
    }
  } catch (const json::out_of_range& e) {
    throw SchemaError(context + ": missing top-level array (" + e.what() + ")");
  } catch (const json::type_error& e) {
    throw SchemaError(context + ": " + e.what());
  }
  return set;
}

inline AnnotationSet load_coco(const std::filesystem::path& path, Source source) {
  return parse_coco(read_json(path), source, path.string());
}

inline json label_to_json(const Label& l) {
  json a = {{"id", l.label_id},
            {"image_id", l.image_id},
            {"category_id", l.category_id},
            {"bbox", {l.box.x(), l.box.y(), l.box.w(), l.box.h()}},
            {"area", l.box.area()},
            {"iscrowd", 0},
            {"score", l.confidence}};
  if (!l.note.empty()) a["note"] = l.note;
  return a;
}

inline json to_coco_json(const AnnotationSet& set) {
  json images = json::array(), anns = json::array(), cats = json::array();
  for (const auto& [id, info] : set.images()) {
    images.push_back({{"id", id}, {"file_name", info.file_name}, {"width", info.width},
                      {"height", info.height}});
    for (const auto& l : set.labels(id)) anns.push_back(label_to_json(l));
  }
  for (const auto& c : set.categories()) cats.push_back({{"id", c.id}, {"name", c.name}});
  return {{"images", images}, {"annotations", anns}, {"categories", cats}};
}

inline void save_coco(const AnnotationSet& set, const std::filesystem::path& path) {
  write_json(path, to_coco_json(set));
}

}  // namespace alc
