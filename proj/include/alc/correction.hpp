// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "alc/budget.hpp"
#include "alc/data_model.hpp"
#include "alc/error.hpp"
#include "alc/geometry.hpp"
#include "alc/json_io.hpp"
#include "alc/lsm.hpp"

// Instance-level noise-graded correction of the crowd labels left after the
// active loop: gray/pink labels are fixed automatically from ModelP
// predictions, box-in-box greens are dropped, and the remaining red/green
// labels go to an expert review queue.

namespace alc {

/// Where Bib witnesses come from: the model predictions (default) or the
/// labels of the gray, pink and red regions.
enum class WitnessMode { Predictions, Regions };

struct BibRemoval {
  ScoredLabel green;
  Label witness;
};

struct BibResult {
  std::vector<ScoredLabel> retained;
  std::vector<BibRemoval> removed;
};

/// Removes a green label when some witness box b* has more than `gamma` of
/// its own area inside the green box. The witness with the largest covered
/// fraction is recorded.
inline BibResult bib_filter(std::span<const ScoredLabel> greens, std::span<const Label> witnesses, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  BibResult out;
  for (const auto& g : greens) {
    const Label* best = nullptr;
    double best_frac = gamma;
    for (const auto& w : witnesses) {
      if (w.image_id != g.label.image_id) continue;
      const double f = overlap_fraction(g.label.box, w.box);
      if (f > best_frac || (best && f == best_frac && w.label_id < best->label_id)) {
        best = &w;
        best_frac = f;
      }
    }
    if (best)
      out.removed.push_back({g, *best});
    else
      out.retained.push_back(g);
  }
  return out;
}

inline std::vector<Label> bib_witnesses(const RegionPartition& part, std::span<const Label> model_p,
                                        std::span<const Label> model_a, WitnessMode mode) {
  std::vector<Label> out;
  if (mode == WitnessMode::Predictions) {
    out.assign(model_p.begin(), model_p.end());
    out.insert(out.end(), model_a.begin(), model_a.end());
    return out;
  }
  for (const auto& c : part.gray)
    for (const auto& m : c.members)
      if (m) out.push_back(*m);
  out.insert(out.end(), part.pink.begin(), part.pink.end());
  for (const auto& r : part.red) out.push_back(r.label);
  return out;
}

// ---------------------------------------------------------------------------
// Review items

enum class ReviewStatus { Pending, Accepted, Edited, Rejected, AddedMissing };

inline std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::Pending: return "pending";
    case ReviewStatus::Accepted: return "accepted";
    case ReviewStatus::Edited: return "edited";
    case ReviewStatus::Rejected: return "rejected";
    case ReviewStatus::AddedMissing: return "added-missing";
  }
  return "?";
}

inline ReviewStatus review_status_from_string(std::string_view s) {
  for (auto st : {ReviewStatus::Pending, ReviewStatus::Accepted, ReviewStatus::Edited, ReviewStatus::Rejected,
                  ReviewStatus::AddedMissing})
    if (to_string(st) == s) return st;
  throw SchemaError("unknown review status '" + std::string(s) + "'");
}

struct ReviewItem {
  std::int64_t item_id = 0;
  ImageId image_id = 0;
  Label flagged{Box(0, 0, 1, 1), 0, 1, Source::Crowd, 1.0, 0, {}};
  std::vector<Label> suggestions;  // confidence descending
  Region region = Region::Green;
  ReviewStatus status = ReviewStatus::Pending;
  std::optional<Box> resolution;
  std::optional<LabelId> accepted_suggestion;

  bool resolved() const { return status != ReviewStatus::Pending; }
};

/// One item per red and green label. Suggestions are all predictions with
/// IoU > suggestion_iou to the flagged box. Items are ordered by image, then
/// top-left position of the flagged box; ids are numbered from `first_id`.
inline std::vector<ReviewItem> build_review_queue(std::span<const ScoredLabel> red,
                                                  std::span<const ScoredLabel> greens,
                                                  std::span<const Label> model_p, std::span<const Label> model_a,
                                                  std::int64_t first_id = 1, double suggestion_iou = 0.1) {
  std::vector<ReviewItem> items;
  auto make = [&](const Label& flagged, Region region) {
    ReviewItem it;
    it.image_id = flagged.image_id;
    it.flagged = flagged;
    it.region = region;
    for (auto preds : {model_p, model_a})
      for (const auto& p : preds)
        if (p.image_id == flagged.image_id && p.label_id != flagged.label_id &&
            iou(p.box, flagged.box) > suggestion_iou)
          it.suggestions.push_back(p);
    std::stable_sort(it.suggestions.begin(), it.suggestions.end(), [](const Label& a, const Label& b) {
      return a.confidence != b.confidence ? a.confidence > b.confidence : a.label_id < b.label_id;
    });
    items.push_back(std::move(it));
  };
  for (const auto& r : red) make(r.label, Region::Red);
  for (const auto& g : greens) make(g.label, Region::Green);
  std::stable_sort(items.begin(), items.end(), [](const ReviewItem& a, const ReviewItem& b) {
    const auto ka = std::make_tuple(a.image_id, a.flagged.box.y(), a.flagged.box.x(), a.flagged.label_id);
    const auto kb = std::make_tuple(b.image_id, b.flagged.box.y(), b.flagged.box.x(), b.flagged.label_id);
    return ka < kb;
  });
  for (auto& it : items) it.item_id = first_id++;
  return items;
}

inline json box_to_json(const Box& b) { return json::array({b.x(), b.y(), b.w(), b.h()}); }

inline Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw SchemaError("box must be [x, y, w, h]");
  try {
    return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("invalid box: ") + e.what());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid box: ") + e.what());
  }
}

inline json label_summary(const Label& l) {
  json j = {{"label_id", l.label_id}, {"source", to_string(l.source)}, {"box", box_to_json(l.box)},
            {"category_id", l.category_id}, {"confidence", l.confidence}};
  if (!l.note.empty()) j["note"] = l.note;
  return j;
}

inline Label label_from_summary(const json& j, ImageId image) {
  try {
    return {box_from_json(j.at("box")), image, j.value("category_id", 1),
            source_from_string(j.at("source").get<std::string>()), j.value("confidence", 1.0),
            j.at("label_id").get<LabelId>(), j.value("note", std::string{})};
  } catch (const json::exception& e) {
    throw SchemaError(std::string("label: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("label: ") + e.what());
  }
}

inline json to_json(const ReviewItem& it) {
  json sugg = json::array();
  for (const auto& s : it.suggestions) sugg.push_back(label_summary(s));
  json j = {{"item_id", it.item_id}, {"image_id", it.image_id}, {"region", to_string(it.region)},
            {"flagged", label_summary(it.flagged)}, {"suggestions", sugg}, {"status", to_string(it.status)}};
  j["resolution"] = it.resolution ? box_to_json(*it.resolution) : json(nullptr);
  j["accepted_suggestion"] = it.accepted_suggestion ? json(*it.accepted_suggestion) : json(nullptr);
  return j;
}

inline ReviewItem review_item_from_json(const json& j) {
  try {
    ReviewItem it;
    it.item_id = j.at("item_id").get<std::int64_t>();
    it.image_id = j.at("image_id").get<ImageId>();
    const auto region = j.at("region").get<std::string>();
    if (region == "red")
      it.region = Region::Red;
    else if (region == "green")
      it.region = Region::Green;
    else
      throw SchemaError("review item region must be red or green");
    it.flagged = label_from_summary(j.at("flagged"), it.image_id);
    for (const auto& s : j.at("suggestions")) it.suggestions.push_back(label_from_summary(s, it.image_id));
    it.status = review_status_from_string(j.value("status", std::string("pending")));
    if (j.contains("resolution") && !j["resolution"].is_null()) it.resolution = box_from_json(j["resolution"]);
    if (j.contains("accepted_suggestion") && !j["accepted_suggestion"].is_null())
      it.accepted_suggestion = j["accepted_suggestion"].get<LabelId>();
    return it;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("review item: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Auto-correction

namespace notes {
inline constexpr const char* kAutoCorrected = "auto-corrected";
inline constexpr const char* kAutoAdded = "auto-added";
inline constexpr const char* kReviewAccepted = "review-accepted";
inline constexpr const char* kReviewEdited = "review-edited";
inline constexpr const char* kReviewAdded = "review-added";
}  // namespace notes

/// Crowd labels of one image after automatic correction. Gray clusters with a
/// ModelP member take the ModelP box (replacing the crowd box, or adding it
/// when no crowd label is in the cluster); pink labels are added. Red and
/// green labels are left alone. New labels get ids from `next_id`.
inline std::vector<Label> auto_correct_image(std::span<const Label> crowd, const RegionPartition& part,
                                             LabelId& next_id) {
  std::vector<Label> out(crowd.begin(), crowd.end());
  auto add = [&](const Label& from) {
    Label l = from;
    l.source = Source::Crowd;
    l.confidence = 1.0;
    l.label_id = next_id++;
    l.note = notes::kAutoAdded;
    out.push_back(std::move(l));
  };
  for (const auto& c : part.gray) {
    if (!c.model_p()) continue;
    if (c.crowd()) {
      for (auto& l : out)
        if (l.label_id == c.crowd()->label_id) {
          l.box = c.model_p()->box;
          l.note = notes::kAutoCorrected;
        }
    } else {
      add(*c.model_p());
    }
  }
  for (const auto& p : part.pink) add(p);
  return out;
}

inline AnnotationSet auto_correct(const AnnotationSet& crowd, const std::map<ImageId, RegionPartition>& partitions) {
  AnnotationSet out(Source::Crowd);
  out.set_categories(crowd.categories());
  LabelId next_id = crowd.next_label_id();
  for (const auto& [img, info] : crowd.images()) {
    out.add_image(info);
    auto it = partitions.find(img);
    if (it == partitions.end()) {
      for (const auto& l : crowd.labels(img)) out.add_label(l);
      continue;
    }
    for (auto& l : auto_correct_image(crowd.labels(img), it->second, next_id)) out.add_label(std::move(l));
  }
  return out;
}

/// Merges review outcomes into the auto-corrected set. Flagged green labels
/// are always taken out; accepted, edited and added boxes are inserted as
/// new labels. Charges one expert review per item when `ledger` is given.
inline AnnotationSet apply_decisions(const AnnotationSet& corrected, std::span<const ReviewItem> queue,
                                     BudgetLedger* ledger = nullptr) {
  std::vector<std::int64_t> pending;
  for (const auto& it : queue)
    if (!it.resolved()) pending.push_back(it.item_id);
  if (!pending.empty()) {
    std::string ids;
    for (auto id : pending) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    throw StateError("unresolved review items: " + ids);
  }
  AnnotationSet out = corrected;
  LabelId next_id = out.next_label_id();
  std::map<ImageId, std::vector<Label>> per_image;
  for (const auto& [img, _] : out.images()) {
    auto ls = out.labels(img);
    per_image[img].assign(ls.begin(), ls.end());
  }
  for (const auto& it : queue) {
    auto& labels = per_image[it.image_id];
    if (it.region == Region::Green)
      std::erase_if(labels, [&](const Label& l) { return l.label_id == it.flagged.label_id; });
    if (it.status == ReviewStatus::Rejected) continue;
    if (!it.resolution)
      throw StateError("review item " + std::to_string(it.item_id) + " has no resolution box");
    const char* note = it.status == ReviewStatus::Accepted ? notes::kReviewAccepted
                       : it.status == ReviewStatus::Edited ? notes::kReviewEdited
                                                           : notes::kReviewAdded;
    labels.push_back({*it.resolution, it.image_id, it.flagged.category_id, Source::Crowd, 1.0, next_id++, note});
  }
  for (auto& [img, labels] : per_image) out.set_labels(img, std::move(labels));
  if (ledger)
    for (const auto& it : queue) ledger->charge(Actor::Expert, Action::ReviewCorrect, it.image_id, 1);
  return out;
}

/// Closed-loop reviewer backed by ground truth. For each item in queue order:
/// if the flagged box matches (IoU >= 0.5) a truth not yet covered, it is
/// edited onto that truth; otherwise the uncovered truth it overlaps most is
/// added; otherwise the item is rejected. A truth counts as covered once some
/// unflagged corrected label or an earlier decision matches it.
inline void resolve_with_truth(std::vector<ReviewItem>& queue, const AnnotationSet& corrected,
                               const AnnotationSet& truth) {
  std::set<LabelId> flagged_ids;
  for (const auto& it : queue)
    if (it.region == Region::Green) flagged_ids.insert(it.flagged.label_id);
  std::map<ImageId, std::vector<bool>> covered;
  auto covered_for = [&](ImageId img) -> std::vector<bool>& {
    auto found = covered.find(img);
    if (found != covered.end()) return found->second;
    const auto truths = truth.has_image(img) ? truth.labels(img) : std::span<const Label>{};
    std::vector<bool> cov(truths.size(), false);
    for (const auto& l : corrected.labels(img)) {
      if (flagged_ids.count(l.label_id)) continue;
      for (std::size_t t = 0; t < truths.size(); ++t)
        if (!cov[t] && truths[t].category_id == l.category_id && iou(l.box, truths[t].box) >= 0.5) {
          cov[t] = true;
          break;
        }
    }
    return covered.emplace(img, std::move(cov)).first->second;
  };
  for (auto& it : queue) {
    if (it.resolved()) continue;
    auto& cov = covered_for(it.image_id);
    const auto truths = truth.has_image(it.image_id) ? truth.labels(it.image_id) : std::span<const Label>{};
    long best = -1;
    double best_iou = 0.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (cov[t] || truths[t].category_id != it.flagged.category_id) continue;
      const double o = iou(it.flagged.box, truths[t].box);
      if (o > best_iou) best_iou = o, best = static_cast<long>(t);
    }
    if (best < 0) {
      it.status = ReviewStatus::Rejected;
      it.resolution.reset();
      continue;
    }
    cov[best] = true;
    it.resolution = truths[best].box;
    it.status = best_iou >= 0.5 ? ReviewStatus::Edited : ReviewStatus::AddedMissing;
  }
}

// ---------------------------------------------------------------------------
// Step 2 orchestration

struct CorrectionConfig {
  double gamma = 0.8;
  bool bib_module = true;
  WitnessMode witness = WitnessMode::Predictions;
  double iou_threshold = 0.5;
  bool dual_model = true;
  double suggestion_iou = 0.1;
};

struct CorrectionReport {
  std::size_t gray = 0, pink = 0, red = 0, green = 0;
  std::size_t auto_corrected = 0, auto_added = 0, untouched_gray = 0;
  std::size_t bib_removed = 0;
  std::size_t queue_with_bib = 0, queue_without_bib = 0;
  std::size_t crowd_labels = 0;
  std::map<std::string, std::size_t> decisions;
};

inline json to_json(const CorrectionReport& r) {
  return {{"regions", {{"gray", r.gray}, {"pink", r.pink}, {"red", r.red}, {"green", r.green}}},
          {"auto_corrected", r.auto_corrected}, {"auto_added", r.auto_added},
          {"untouched_gray", r.untouched_gray}, {"bib_removed", r.bib_removed},
          {"queue_with_bib", r.queue_with_bib}, {"queue_without_bib", r.queue_without_bib},
          {"crowd_labels", r.crowd_labels}, {"decisions", r.decisions}};
}

struct CorrectionPlan {
  std::map<ImageId, RegionPartition> partitions;
  std::vector<BibRemoval> bib_removed;
  AnnotationSet corrected{Source::Crowd};  // auto-corrected, bib-removed greens dropped
  std::vector<ReviewItem> queue;
  CorrectionReport report;
};

/// Runs LSM, the Bib filter, auto-correction and queue construction over
/// every image of `crowd`. `model_a` is ignored in single-model mode.
inline CorrectionPlan plan_correction(const AnnotationSet& crowd, const AnnotationSet& model_p,
                                      const AnnotationSet& model_a, const CorrectionConfig& cfg) {
  CorrectionPlan plan;
  auto& rep = plan.report;
  std::vector<ScoredLabel> all_red, all_greens;
  std::vector<Label> all_p, all_a;
  std::set<LabelId> removed_ids;
  for (const auto& [img, _] : crowd.images()) {
    const auto c = crowd.labels(img);
    const auto p = model_p.has_image(img) ? model_p.labels(img) : std::span<const Label>{};
    const auto a = cfg.dual_model && model_a.has_image(img) ? model_a.labels(img) : std::span<const Label>{};
    auto part = lsm_partition(c, p, a, cfg.iou_threshold);
    rep.crowd_labels += c.size();
    rep.gray += part.gray.size();
    rep.pink += part.pink.size();
    rep.red += part.red.size();
    rep.green += part.green.size();
    for (const auto& cl : part.gray) {
      if (cl.model_p())
        (cl.crowd() ? rep.auto_corrected : rep.auto_added) += 1;
      else if (cl.crowd())
        ++rep.untouched_gray;
    }
    rep.auto_added += part.pink.size();
    std::vector<ScoredLabel> greens = part.green;
    if (cfg.bib_module) {
      auto bib = bib_filter(part.green, bib_witnesses(part, p, a, cfg.witness), cfg.gamma);
      for (const auto& r : bib.removed) removed_ids.insert(r.green.label.label_id);
      plan.bib_removed.insert(plan.bib_removed.end(), bib.removed.begin(), bib.removed.end());
      greens = std::move(bib.retained);
    }
    all_red.insert(all_red.end(), part.red.begin(), part.red.end());
    all_greens.insert(all_greens.end(), greens.begin(), greens.end());
    all_p.insert(all_p.end(), p.begin(), p.end());
    all_a.insert(all_a.end(), a.begin(), a.end());
    plan.partitions.emplace(img, std::move(part));
  }
  rep.bib_removed = plan.bib_removed.size();
  rep.queue_without_bib = rep.red + rep.green;
  plan.corrected = auto_correct(crowd, plan.partitions);
  if (!removed_ids.empty()) {
    AnnotationSet trimmed = plan.corrected;
    for (const auto& [img, _] : plan.corrected.images()) {
      std::vector<Label> keep;
      for (const auto& l : plan.corrected.labels(img))
        if (!removed_ids.count(l.label_id)) keep.push_back(l);
      trimmed.set_labels(img, std::move(keep));
    }
    plan.corrected = std::move(trimmed);
  }
  plan.queue = build_review_queue(all_red, all_greens, all_p, all_a, 1, cfg.suggestion_iou);
  rep.queue_with_bib = plan.queue.size();
  return plan;
}

inline void record_decisions(CorrectionReport& rep, std::span<const ReviewItem> queue) {
  rep.decisions.clear();
  for (const auto& it : queue) ++rep.decisions[std::string(to_string(it.status))];
}

}  // namespace alc
