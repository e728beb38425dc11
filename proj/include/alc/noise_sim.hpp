// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "alc/data_model.hpp"
#include "alc/geometry.hpp"
#include "alc/json_io.hpp"
#include "alc/rng.hpp"

namespace alc {

// ---------------------------------------------------------------------------
// Synthetic ground truth

struct CorpusSpec {
  int images = 300;
  int width = 512;
  int height = 512;
  int min_instances = 1;
  int max_instances = 8;
  double min_size = 16.0;
  double max_size = 96.0;
  double min_aspect = 0.6;
  double max_aspect = 1.6;
  /// Probability that a new instance is placed next to an existing one.
  double cluster_prob = 0.35;
  ImageId first_image_id = 1;
  LabelId first_label_id = 1;
  std::uint64_t seed = 0;
};

/// Non-overlapping boxes on blank images; log-uniform sizes.
inline AnnotationSet make_synthetic_corpus(const CorpusSpec& spec) {
  AnnotationSet gt(Source::Expert);
  LabelId next_id = spec.first_label_id;
  for (int i = 0; i < spec.images; ++i) {
    const ImageId img = spec.first_image_id + i;
    gt.add_image({img, "img_" + std::to_string(img) + ".png", spec.width, spec.height});
    Rng rng(derive_seed(spec.seed, {0xC0, static_cast<std::uint64_t>(img)}));
    const auto count = rng.uniform_int(spec.min_instances, spec.max_instances);
    std::vector<Box> placed;
    for (std::int64_t n = 0; n < count; ++n) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const double size =
            std::exp(rng.uniform(std::log(spec.min_size), std::log(spec.max_size)));
        const double aspect = rng.uniform(spec.min_aspect, spec.max_aspect);
        const double w = std::min(size * std::sqrt(aspect), spec.width - 2.0);
        const double h = std::min(size / std::sqrt(aspect), spec.height - 2.0);
        double x, y;
        if (!placed.empty() && rng.bernoulli(spec.cluster_prob)) {
          const Box& anchor = placed[rng.uniform_int(0, static_cast<std::int64_t>(placed.size()) - 1)];
          x = anchor.cx() + rng.uniform(-1.5, 1.5) * (anchor.w() + w) * 0.5 - w * 0.5;
          y = anchor.cy() + rng.uniform(-1.5, 1.5) * (anchor.h() + h) * 0.5 - h * 0.5;
        } else {
          x = rng.uniform(0.0, spec.width - w);
          y = rng.uniform(0.0, spec.height - h);
        }
        if (x < 0 || y < 0 || x + w > spec.width || y + h > spec.height) continue;
        Box b(x, y, w, h);
        const bool clear = std::none_of(placed.begin(), placed.end(),
                                        [&](const Box& o) { return intersection_area(b, o) > 0.0; });
        if (!clear) continue;
        placed.push_back(b);
        gt.add_label({b, img, 1, Source::Expert, 1.0, next_id++, {}});
        break;
      }
    }
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Difficulty

using DifficultyMap = std::map<LabelId, double>;

/// Beta(2,2) draw per instance plus a size-rank term (smaller = harder),
/// clamped to [0,1]. Each draw is keyed by label id, so the map does not
/// depend on iteration order.
inline DifficultyMap assign_difficulty(const AnnotationSet& truth, std::uint64_t seed,
                                       double size_weight = 0.3) {
  auto labels = truth.all_labels();
  std::sort(labels.begin(), labels.end(), [](const Label& a, const Label& b) {
    if (a.box.area() != b.box.area()) return a.box.area() < b.box.area();
    return a.label_id < b.label_id;
  });
  DifficultyMap out;
  const double denom = labels.size() > 1 ? static_cast<double>(labels.size() - 1) : 1.0;
  for (std::size_t rank = 0; rank < labels.size(); ++rank) {
    Rng rng(derive_seed(seed, {0xD1FF, static_cast<std::uint64_t>(labels[rank].label_id)}));
    const double d = rng.beta22() + size_weight * (0.5 - static_cast<double>(rank) / denom);
    out[labels[rank].label_id] = std::clamp(d, 0.0, 1.0);
  }
  return out;
}

inline double difficulty_of(const DifficultyMap& map, LabelId id, double fallback = 0.5) {
  auto it = map.find(id);
  return it == map.end() ? fallback : it->second;
}

inline json difficulty_to_json(const DifficultyMap& map) {
  json arr = json::array();
  for (const auto& [id, d] : map) arr.push_back({{"label_id", id}, {"difficulty", d}});
  return arr;
}

inline DifficultyMap difficulty_from_json(const json& arr) {
  DifficultyMap out;
  try {
    for (const auto& e : arr) out[e.at("label_id").get<LabelId>()] = e.at("difficulty").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("difficulty map: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Crowd corruption

enum class NoiseType { Clean, Bkg, Miss, Loc, Bib };

inline std::string_view to_string(NoiseType t) {
  switch (t) {
    case NoiseType::Clean: return "clean";
    case NoiseType::Bkg: return "bkg";
    case NoiseType::Miss: return "miss";
    case NoiseType::Loc: return "loc";
    case NoiseType::Bib: return "bib";
  }
  return "?";
}

struct NoiseSpec {
  double bkg_rate = 0.0;
  double miss_rate = 0.0;
  double loc_rate = 0.0;
  double bib_rate = 0.0;
  double loc_jitter_sigma = 0.3;
  /// Per-instance rates are scaled by (coupling_offset + difficulty).
  double coupling_offset = 0.5;
  std::uint64_t seed = 0;

  /// Rates loosely proportioned to the noisy-training TIDE profile of the
  /// reference study; an approximation, not measured values.
  static NoiseSpec paper_like(std::uint64_t seed) {
    NoiseSpec s;
    s.miss_rate = 0.15;
    s.loc_rate = 0.17;
    s.bkg_rate = 0.05;
    s.bib_rate = 0.03;
    s.seed = seed;
    return s;
  }

  void validate() const {
    for (double r : {bkg_rate, miss_rate, loc_rate, bib_rate})
      if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("noise rates must lie in [0,1]");
    if (!(loc_jitter_sigma > 0.0)) throw std::invalid_argument("loc_jitter_sigma must be positive");
  }
};

/// One ledger row. `label_id` names the emitted crowd label (absent for Miss);
/// `truth_ids` lists the ground-truth instances behind it.
struct NoiseRecord {
  std::optional<LabelId> label_id;
  NoiseType type;
  std::vector<LabelId> truth_ids;
};

struct NoiseResult {
  AnnotationSet crowd{Source::Crowd};
  std::vector<NoiseRecord> ledger;
  int bkg_skipped = 0;

  std::size_t count(NoiseType t) const {
    return std::count_if(ledger.begin(), ledger.end(), [t](const NoiseRecord& r) { return r.type == t; });
  }
};

inline json noise_ledger_to_json(const std::vector<NoiseRecord>& ledger) {
  json arr = json::array();
  for (const auto& r : ledger)
    arr.push_back({{"label_id", r.label_id ? json(*r.label_id) : json(nullptr)},
                   {"noise_type", to_string(r.type)},
                   {"truth_ids", r.truth_ids}});
  return arr;
}

namespace detail {

/// Jittered copy whose IoU with `b` falls in the localization-error band
/// [0.1, 0.5); retries the Gaussian draw, then falls back to a horizontal
/// shift with IoU 0.3.
inline Box loc_jitter(const Box& b, double sigma, const ImageInfo& img, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double w = b.w() * std::exp(rng.normal(0.0, sigma));
    const double h = b.h() * std::exp(rng.normal(0.0, sigma));
    const double cx = b.cx() + rng.normal(0.0, sigma * b.w());
    const double cy = b.cy() + rng.normal(0.0, sigma * b.h());
    const double x0 = std::max(0.0, cx - w / 2), y0 = std::max(0.0, cy - h / 2);
    const double x1 = std::min<double>(img.width, cx + w / 2), y1 = std::min<double>(img.height, cy + h / 2);
    if (x1 - x0 < 1.0 || y1 - y0 < 1.0) continue;
    Box j = Box::from_corners(x0, y0, x1, y1);
    const double o = iou(j, b);
    if (o >= 0.1 && o < 0.5) return j;
  }
  const double shift = b.w() * 0.7 / 1.3;
  const double x = b.x() + shift + b.w() <= img.width ? b.x() + shift : b.x() - shift;
  return Box(x, b.y(), b.w(), b.h());
}

}  // namespace detail

/// Corrupts ground truth into a crowd-style label set.
///
/// Per image, in order: Miss deletes truths; Bib merges a surviving label with
/// its nearest surviving neighbour (gap under one box width) into their hull;
/// Loc displaces surviving single labels into the [0.1, 0.5) IoU band; Bkg
/// adds ceil(bkg_rate * N) spurious boxes over the whole set, each with IoU
/// < 0.1 to every truth of its image. Output label ids are assigned
/// sequentially in emission order.
inline NoiseResult corrupt(const AnnotationSet& truth, const NoiseSpec& spec,
                           const DifficultyMap& difficulty) {
  spec.validate();
  NoiseResult res;
  res.crowd.set_categories(truth.categories());
  for (const auto& [id, info] : truth.images()) res.crowd.add_image(info);

  auto scaled = [&](double rate, LabelId id) {
    return std::clamp(rate * (spec.coupling_offset + difficulty_of(difficulty, id)), 0.0, 1.0);
  };

  const auto image_ids = truth.image_ids();
  std::map<ImageId, int> bkg_per_image;
  const auto n_truth = truth.label_count();
  if (spec.bkg_rate > 0.0 && !image_ids.empty()) {
    const auto n_bkg = static_cast<std::int64_t>(std::ceil(spec.bkg_rate * static_cast<double>(n_truth)));
    Rng rng(derive_seed(spec.seed, {0xB6}));
    for (std::int64_t i = 0; i < n_bkg; ++i)
      ++bkg_per_image[image_ids[rng.uniform_int(0, static_cast<std::int64_t>(image_ids.size()) - 1)]];
  }
  std::vector<std::pair<double, double>> sizes;
  for (const auto& l : truth.all_labels()) sizes.emplace_back(l.box.w(), l.box.h());

  LabelId next_id = 1;
  for (auto img : image_ids) {
    const auto& info = truth.image(img);
    const auto truths = truth.labels(img);
    Rng rng(derive_seed(spec.seed, {0x1A, static_cast<std::uint64_t>(img)}));

    std::vector<bool> alive(truths.size(), true);
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (rng.bernoulli(scaled(spec.miss_rate, truths[i].label_id))) {
        alive[i] = false;
        res.ledger.push_back({std::nullopt, NoiseType::Miss, {truths[i].label_id}});
      }
    }

    std::vector<bool> merged(truths.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> bib_pairs;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (!alive[i] || merged[i] || !rng.bernoulli(spec.bib_rate)) continue;
      std::optional<std::size_t> partner;
      double best_gap = truths[i].box.w();
      for (std::size_t j = 0; j < truths.size(); ++j) {
        if (j == i || !alive[j] || merged[j]) continue;
        const double g = gap(truths[i].box, truths[j].box);
        if (g < best_gap) {
          best_gap = g;
          partner = j;
        }
      }
      if (!partner) continue;
      merged[i] = merged[*partner] = true;
      bib_pairs.emplace_back(i, *partner);
    }

    std::vector<Label> out;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (!alive[i] || merged[i]) continue;
      Label l = truths[i];
      l.source = Source::Crowd;
      l.confidence = 1.0;
      l.note.clear();
      NoiseType type = NoiseType::Clean;
      if (rng.bernoulli(scaled(spec.loc_rate, truths[i].label_id))) {
        l.box = detail::loc_jitter(truths[i].box, spec.loc_jitter_sigma, info, rng);
        type = NoiseType::Loc;
      }
      l.label_id = next_id++;
      res.ledger.push_back({l.label_id, type, {truths[i].label_id}});
      out.push_back(std::move(l));
    }
    for (auto [a, b] : bib_pairs) {
      Label l{hull(truths[a].box, truths[b].box), img, truths[a].category_id, Source::Crowd, 1.0,
              next_id++, {}};
      res.ledger.push_back({l.label_id, NoiseType::Bib, {truths[a].label_id, truths[b].label_id}});
      out.push_back(std::move(l));
    }
    const int n_bkg = bkg_per_image.count(img) ? bkg_per_image[img] : 0;
    for (int n = 0; n < n_bkg; ++n) {
      bool placed = false;
      for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        auto [w, h] = sizes.empty() ? std::pair{32.0, 32.0}
                                    : sizes[rng.uniform_int(0, static_cast<std::int64_t>(sizes.size()) - 1)];
        w = std::min(w, info.width - 1.0);
        h = std::min(h, info.height - 1.0);
        Box b(rng.uniform(0.0, info.width - w), rng.uniform(0.0, info.height - h), w, h);
        const bool clear = std::all_of(truths.begin(), truths.end(),
                                       [&](const Label& t) { return iou(b, t.box) < 0.1; });
        if (!clear) continue;
        const int cat = truths.empty() ? 1 : truths.front().category_id;
        Label l{b, img, cat, Source::Crowd, 1.0, next_id++, {}};
        res.ledger.push_back({l.label_id, NoiseType::Bkg, {}});
        out.push_back(std::move(l));
        placed = true;
      }
      if (!placed) ++res.bkg_skipped;
    }
    for (auto& l : out) res.crowd.add_label(std::move(l));
  }
  return res;
}

}  // namespace alc
