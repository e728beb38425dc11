// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alc/data_model.hpp"
#include "alc/json_io.hpp"

namespace alc {

enum class Actor { Crowd, Expert };
enum class Action { Annotate, ReviewCorrect };

inline std::string_view to_string(Actor a) { return a == Actor::Crowd ? "crowd" : "expert"; }
inline std::string_view to_string(Action a) {
  return a == Action::Annotate ? "annotate" : "review-correct";
}

/// Per-instance annotation prices. Crowd to expert is 1:10; the review
/// rate is a free parameter.
struct CostModel {
  double crowd_per_instance = 1.0;
  double expert_per_instance = 10.0;
  double expert_review_per_instance = 5.0;

  double rate(Actor actor, Action action) const {
    if (actor == Actor::Expert)
      return action == Action::Annotate ? expert_per_instance : expert_review_per_instance;
    return crowd_per_instance;
  }
};

struct LedgerEntry {
  Actor actor;
  Action action;
  ImageId image_id;
  std::int64_t instances;
  double cost;
};

class BudgetLedger {
 public:
  BudgetLedger() = default;
  explicit BudgetLedger(CostModel model) : model_(model) {
    if (model.crowd_per_instance < 0 || model.expert_per_instance <= 0 ||
        model.expert_review_per_instance < 0)
      throw std::invalid_argument("cost rates must be non-negative (expert rate positive)");
  }

  const CostModel& model() const noexcept { return model_; }
  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }

  const LedgerEntry& charge(Actor actor, Action action, ImageId image, std::int64_t instances) {
    if (instances < 0) throw std::invalid_argument("instance count must be non-negative");
    entries_.push_back(
        {actor, action, image, instances, static_cast<double>(instances) * model_.rate(actor, action)});
    return entries_.back();
  }

  /// Sum of all charges. Costs are added in sorted order so the result does
  /// not depend on the order charges were made.
  double total() const {
    std::vector<double> costs;
    costs.reserve(entries_.size());
    for (const auto& e : entries_) costs.push_back(e.cost);
    return sorted_sum(std::move(costs));
  }

  double total(Actor actor, Action action) const {
    std::vector<double> costs;
    for (const auto& e : entries_)
      if (e.actor == actor && e.action == action) costs.push_back(e.cost);
    return sorted_sum(std::move(costs));
  }

  /// Sidecar format: array of {actor, action, image_id, instances, cost}.
  json to_json() const {
    json arr = json::array();
    for (const auto& e : entries_)
      arr.push_back({{"actor", to_string(e.actor)}, {"action", to_string(e.action)},
                     {"image_id", e.image_id}, {"instances", e.instances}, {"cost", e.cost}});
    return arr;
  }

  static BudgetLedger from_json(const json& arr, CostModel model) {
    if (!arr.is_array()) throw SchemaError("ledger: expected an array");
    BudgetLedger ledger(model);
    for (const auto& e : arr) {
      try {
        const auto actor = e.at("actor").get<std::string>() == "crowd" ? Actor::Crowd : Actor::Expert;
        const auto action =
            e.at("action").get<std::string>() == "annotate" ? Action::Annotate : Action::ReviewCorrect;
        const double cost = e.at("cost").get<double>();
        if (cost < 0) throw SchemaError("ledger: negative cost entry");
        ledger.entries_.push_back({actor, action, e.at("image_id").get<ImageId>(),
                                   e.at("instances").get<std::int64_t>(), cost});
      } catch (const json::exception& ex) {
        throw SchemaError(std::string("ledger: malformed entry: ") + ex.what());
      }
    }
    return ledger;
  }

 private:
  static double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double t = 0.0;
    for (double c : v) t += c;
    return t;
  }

  CostModel model_;
  std::vector<LedgerEntry> entries_;
};

/// Value-returning form of BudgetLedger::charge.
inline BudgetLedger charge(BudgetLedger ledger, Actor actor, Action action, ImageId image,
                           std::int64_t instances) {
  ledger.charge(actor, action, image, instances);
  return ledger;
}

}  // namespace alc
