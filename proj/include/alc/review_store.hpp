// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "alc/budget.hpp"
#include "alc/coco_io.hpp"
#include "alc/correction.hpp"
#include "alc/error.hpp"
#include "alc/json_io.hpp"
#include "alc/lsm.hpp"

// Durable review queue: a fixed queue file written once, plus an append-only
// decision log replayed on open. Later decisions for an item supersede
// earlier ones; the log keeps all of them.

namespace alc {

struct AcceptSuggestion {
  LabelId suggestion_id;
};
struct EditBox {
  Box box;
};
struct RejectItem {};
struct AddMissingBox {
  Box box;
};

using DecisionAction = std::variant<AcceptSuggestion, EditBox, RejectItem, AddMissingBox>;

struct DecisionRecord {
  std::int64_t item_id = 0;
  DecisionAction action = RejectItem{};
  std::string reviewer;
  std::string timestamp;
};

inline json to_json(const DecisionRecord& d) {
  json j = {{"item_id", d.item_id}, {"reviewer", d.reviewer}, {"timestamp", d.timestamp}};
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AcceptSuggestion>) {
          j["action"] = "accept";
          j["suggestion_id"] = a.suggestion_id;
        } else if constexpr (std::is_same_v<T, EditBox>) {
          j["action"] = "edit";
          j["box"] = box_to_json(a.box);
        } else if constexpr (std::is_same_v<T, RejectItem>) {
          j["action"] = "reject";
        } else {
          j["action"] = "add-missing";
          j["box"] = box_to_json(a.box);
        }
      },
      d.action);
  return j;
}

/// Parses a decision body. `item_id` may come from the URL instead.
inline DecisionRecord decision_from_json(const json& j, std::optional<std::int64_t> item_id = std::nullopt) {
  if (!j.is_object()) throw SchemaError("decision must be a JSON object");
  DecisionRecord d;
  try {
    if (item_id)
      d.item_id = *item_id;
    else
      d.item_id = j.at("item_id").get<std::int64_t>();
    d.reviewer = j.value("reviewer", std::string{});
    d.timestamp = j.value("timestamp", std::string{});
    const auto action = j.at("action").get<std::string>();
    if (action == "accept")
      d.action = AcceptSuggestion{j.at("suggestion_id").get<LabelId>()};
    else if (action == "edit")
      d.action = EditBox{box_from_json(j.at("box"))};
    else if (action == "reject")
      d.action = RejectItem{};
    else if (action == "add-missing")
      d.action = AddMissingBox{box_from_json(j.at("box"))};
    else
      throw SchemaError("unknown decision action '" + action + "'");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("decision: ") + e.what());
  }
  return d;
}

/// Lookup failure for an item or image the store does not know.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Applies a decision to an item. Throws SchemaError for a suggestion id the
/// item does not offer.
inline void apply_decision(ReviewItem& it, const DecisionRecord& d) {
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, AcceptSuggestion>) {
          auto s = std::find_if(it.suggestions.begin(), it.suggestions.end(),
                                [&](const Label& l) { return l.label_id == a.suggestion_id; });
          if (s == it.suggestions.end())
            throw SchemaError("item " + std::to_string(it.item_id) + " has no suggestion " +
                              std::to_string(a.suggestion_id));
          it.status = ReviewStatus::Accepted;
          it.resolution = s->box;
          it.accepted_suggestion = a.suggestion_id;
        } else if constexpr (std::is_same_v<T, EditBox>) {
          it.status = ReviewStatus::Edited;
          it.resolution = a.box;
          it.accepted_suggestion.reset();
        } else if constexpr (std::is_same_v<T, RejectItem>) {
          it.status = ReviewStatus::Rejected;
          it.resolution.reset();
          it.accepted_suggestion.reset();
        } else {
          it.status = ReviewStatus::AddedMissing;
          it.resolution = a.box;
          it.accepted_suggestion.reset();
        }
      },
      d.action);
}

namespace detail {

/// Appends one line and fsyncs before returning.
inline void append_durable(const std::filesystem::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  const std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw IoError("write to " + path.string() + " failed: " + std::strerror(err));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw IoError("fsync of " + path.string() + " failed: " + std::strerror(err));
  }
  ::close(fd);
}

}  // namespace detail

struct ReviewProgress {
  std::size_t pending = 0;
  std::size_t resolved = 0;
  std::map<std::string, std::size_t> by_region;  // pending items per region
  std::map<std::string, std::size_t> by_status;
  double projected_cost = 0.0;
};

inline json to_json(const ReviewProgress& p) {
  return {{"pending", p.pending}, {"resolved", p.resolved}, {"by_region", p.by_region},
          {"by_status", p.by_status}, {"projected_cost", p.projected_cost}};
}

struct QueuePage {
  std::vector<ReviewItem> items;
  std::size_t total = 0;  // matching items before paging
  std::size_t offset = 0;
};

/// Files of a review workspace directory.
struct ReviewPaths {
  std::filesystem::path dir;
  std::filesystem::path queue() const { return dir / "queue.jsonl"; }
  std::filesystem::path decisions() const { return dir / "decisions.jsonl"; }
  std::filesystem::path corrected() const { return dir / "corrected.json"; }
  std::filesystem::path crowd() const { return dir / "crowd.json"; }
  std::filesystem::path model_p() const { return dir / "model_p.json"; }
  std::filesystem::path model_a() const { return dir / "model_a.json"; }
  std::filesystem::path meta() const { return dir / "meta.json"; }
};

/// Writes everything serve-review and apply-review need: the pending queue,
/// an empty decision log, the auto-corrected set and the Step 2 inputs used
/// for overlays.
inline void write_review_workspace(const std::filesystem::path& dir, const std::vector<ReviewItem>& queue,
                                   const AnnotationSet& corrected, const AnnotationSet& crowd,
                                   const AnnotationSet& model_p, const AnnotationSet& model_a,
                                   const CostModel& costs, double iou_threshold) {
  const ReviewPaths paths{dir};
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& it : queue) lines += to_json(it).dump() + "\n";
  write_text(paths.queue(), lines);
  write_text(paths.decisions(), "");
  save_coco(corrected, paths.corrected());
  save_coco(crowd, paths.crowd());
  save_coco(model_p, paths.model_p());
  save_coco(model_a, paths.model_a());
  write_json(paths.meta(), {{"costs",
                             {{"crowd_per_instance", costs.crowd_per_instance},
                              {"expert_per_instance", costs.expert_per_instance},
                              {"expert_review_per_instance", costs.expert_review_per_instance}}},
                            {"iou_threshold", iou_threshold}});
}

/// Region colours used by overlays.
inline std::string_view region_color(Region r) {
  switch (r) {
    case Region::Gray: return "#9e9e9e";
    case Region::Pink: return "#ff69b4";
    case Region::Red: return "#e53935";
    case Region::Green: return "#43a047";
  }
  return "#000000";
}

class ReviewStore {
 public:
  /// Opens a workspace and replays its decision log. A torn final line
  /// (crash mid-append, never acknowledged) is ignored.
  explicit ReviewStore(std::filesystem::path dir) : paths_{std::move(dir)} {
    if (!std::filesystem::exists(paths_.queue()))
      throw IoError("no review queue at " + paths_.queue().string());
    {
      std::istringstream in(read_text(paths_.queue()));
      std::string line;
      std::size_t n = 0;
      while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto it = review_item_from_json(parse_json_text(line, paths_.queue().string() + ":" + std::to_string(n)));
        index_[it.item_id] = items_.size();
        items_.push_back(std::move(it));
      }
    }
    if (std::filesystem::exists(paths_.meta())) {
      const auto meta = read_json(paths_.meta());
      if (meta.contains("costs")) {
        const auto& c = meta["costs"];
        costs_ = {c.value("crowd_per_instance", 1.0), c.value("expert_per_instance", 10.0),
                  c.value("expert_review_per_instance", 5.0)};
      }
      iou_threshold_ = meta.value("iou_threshold", 0.5);
    }
    if (std::filesystem::exists(paths_.decisions())) {
      const auto text = read_text(paths_.decisions());
      std::size_t start = 0, n = 0;
      while (start < text.size()) {
        const auto end = text.find('\n', start);
        if (end == std::string::npos) break;  // torn tail
        ++n;
        const auto line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const auto rec = decision_from_json(parse_json_text(line, paths_.decisions().string() + ":" + std::to_string(n)));
        auto found = index_.find(rec.item_id);
        if (found == index_.end())
          throw SchemaError(paths_.decisions().string() + ":" + std::to_string(n) + ": unknown item " +
                            std::to_string(rec.item_id));
        apply_decision(items_[found->second], rec);
        ++replayed_;
      }
    }
  }

  const ReviewPaths& paths() const { return paths_; }
  std::size_t replayed() const { return replayed_; }
  const CostModel& costs() const { return costs_; }

  QueuePage queue(std::optional<ReviewStatus> status = std::nullopt, std::optional<ImageId> image = std::nullopt,
                  std::size_t offset = 0, std::size_t limit = 50) const {
    std::shared_lock lock(mu_);
    QueuePage page;
    page.offset = offset;
    for (const auto& it : items_) {
      if (status && it.status != *status) continue;
      if (image && it.image_id != *image) continue;
      if (page.total >= offset && page.items.size() < limit) page.items.push_back(it);
      ++page.total;
    }
    return page;
  }

  ReviewItem item(std::int64_t id) const {
    std::shared_lock lock(mu_);
    auto found = index_.find(id);
    if (found == index_.end()) throw NotFound("no review item " + std::to_string(id));
    return items_[found->second];
  }

  std::vector<ReviewItem> items() const {
    std::shared_lock lock(mu_);
    return items_;
  }

  /// Validates, logs durably, then updates the in-memory item.
  ReviewItem decide(const DecisionRecord& d) {
    std::unique_lock lock(mu_);
    auto found = index_.find(d.item_id);
    if (found == index_.end()) throw NotFound("no review item " + std::to_string(d.item_id));
    ReviewItem updated = items_[found->second];
    apply_decision(updated, d);
    detail::append_durable(paths_.decisions(), to_json(d).dump());
    items_[found->second] = updated;
    return updated;
  }

  ReviewProgress progress() const {
    std::shared_lock lock(mu_);
    ReviewProgress p;
    for (const auto& it : items_) {
      ++p.by_status[std::string(to_string(it.status))];
      if (it.resolved()) {
        ++p.resolved;
      } else {
        ++p.pending;
        ++p.by_region[std::string(to_string(it.region))];
      }
    }
    p.projected_cost = static_cast<double>(p.pending) * costs_.expert_review_per_instance;
    return p;
  }

  /// Labels, predictions and LSM regions of one image for drawing.
  json overlay(ImageId image) const {
    load_context();
    if (!crowd_->has_image(image)) throw NotFound("no image " + std::to_string(image) + " in the review set");
    const auto c = crowd_->labels(image);
    const auto p = model_p_->has_image(image) ? model_p_->labels(image) : std::span<const Label>{};
    const auto a = model_a_->has_image(image) ? model_a_->labels(image) : std::span<const Label>{};
    const auto part = lsm_partition(c, p, a, iou_threshold_);
    json labels = json::array();
    auto add = [&](const Label& l, Region r, std::optional<double> score) {
      json j = label_summary(l);
      j["region"] = to_string(r);
      j["color"] = region_color(r);
      j["score"] = score ? json(*score) : json(nullptr);
      labels.push_back(std::move(j));
    };
    for (const auto& cl : part.gray)
      for (const auto& m : cl.members)
        if (m) add(*m, Region::Gray, std::nullopt);
    for (const auto& l : part.pink) add(l, Region::Pink, std::nullopt);
    for (const auto& s : part.red) add(s.label, Region::Red, s.score);
    for (const auto& s : part.green) add(s.label, Region::Green, s.score);
    std::stable_sort(labels.begin(), labels.end(), [](const json& x, const json& y) {
      return x["label_id"].get<LabelId>() < y["label_id"].get<LabelId>();
    });
    json items = json::array();
    {
      std::shared_lock lock(mu_);
      for (const auto& it : items_)
        if (it.image_id == image) items.push_back(it.item_id);
    }
    const auto& info = crowd_->image(image);
    return {{"image_id", image},
            {"file_name", info.file_name},
            {"width", info.width},
            {"height", info.height},
            {"labels", labels},
            {"items", items},
            {"counts", {{"crowd", c.size()}, {"model_p", p.size()}, {"model_a", a.size()}}}};
  }

  /// File name recorded for an image in the review set.
  std::string image_file(ImageId image) const {
    load_context();
    if (!crowd_->has_image(image)) throw NotFound("no image " + std::to_string(image) + " in the review set");
    return crowd_->image(image).file_name;
  }

  /// The cleaned set for the reviewed images. Throws StateError while any
  /// item is pending.
  AnnotationSet finalize(BudgetLedger* ledger = nullptr) const {
    const auto snapshot = items();
    return apply_decisions(load_coco(paths_.corrected(), Source::Crowd), snapshot, ledger);
  }

 private:
  void load_context() const {
    std::call_once(context_once_, [this] {
      crowd_ = load_coco(paths_.crowd(), Source::Crowd);
      model_p_ = load_coco(paths_.model_p(), Source::ModelP);
      model_a_ = load_coco(paths_.model_a(), Source::ModelA);
    });
  }

  ReviewPaths paths_;
  std::vector<ReviewItem> items_;
  std::map<std::int64_t, std::size_t> index_;
  CostModel costs_;
  double iou_threshold_ = 0.5;
  std::size_t replayed_ = 0;
  mutable std::shared_mutex mu_;
  mutable std::once_flag context_once_;
  mutable std::optional<AnnotationSet> crowd_, model_p_, model_a_;
};

}  // namespace alc
