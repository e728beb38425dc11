// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "alc/budget.hpp"
#include "alc/data_model.hpp"
#include "alc/geometry.hpp"
#include "alc/json_io.hpp"

namespace alc {

/// Scored box handed to the evaluator.
struct Detection {
  ImageId image_id;
  int category_id;
  Box box;
  double score;
  LabelId id;
};

inline std::vector<Detection> to_detections(std::span<const Label> labels) {
  std::vector<Detection> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back({l.image_id, l.category_id, l.box, l.confidence, l.label_id});
  return out;
}

inline std::vector<Detection> to_detections(const AnnotationSet& set) {
  const auto labels = set.all_labels();
  return to_detections(labels);
}

/// Labels treated as predictions: all scored 1, so ranking falls back to
/// label id.
inline std::vector<Detection> labels_as_predictions(const AnnotationSet& set) {
  auto dets = to_detections(set);
  for (auto& d : dets) d.score = 1.0;
  return dets;
}

namespace detail {

constexpr double kForegroundIou = 0.5;
constexpr double kBackgroundIou = 0.1;

struct TruthIndex {
  std::vector<Label> truths;
  std::map<std::pair<ImageId, int>, std::vector<std::size_t>> by_key;
  std::map<int, std::size_t> per_category;

  explicit TruthIndex(const AnnotationSet& truth) : truths(truth.all_labels()) {
    for (std::size_t i = 0; i < truths.size(); ++i) {
      by_key[{truths[i].image_id, truths[i].category_id}].push_back(i);
      ++per_category[truths[i].category_id];
    }
  }

  std::span<const std::size_t> candidates(const Detection& d) const {
    auto it = by_key.find({d.image_id, d.category_id});
    if (it == by_key.end()) return {};
    return it->second;
  }
};

inline void rank(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

/// Greedy matching in rank order; returns the matched truth per detection
/// (-1 for false positives). `dets` must already be ranked.
inline std::vector<long> greedy_match(const std::vector<Detection>& dets, const TruthIndex& idx,
                                      std::vector<bool>& truth_used) {
  truth_used.assign(idx.truths.size(), false);
  std::vector<long> out(dets.size(), -1);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = kForegroundIou;
    long pick = -1;
    for (auto t : idx.candidates(dets[i])) {
      if (truth_used[t]) continue;
      const double o = iou(dets[i].box, idx.truths[t].box);
      if (o >= best && (pick < 0 || o > best)) {
        best = o;
        pick = static_cast<long>(t);
      }
    }
    if (pick >= 0) {
      truth_used[pick] = true;
      out[i] = pick;
    }
  }
  return out;
}

/// 101-point interpolated AP of one category given ranked TP flags.
inline double interpolated_ap(const std::vector<bool>& tp, std::size_t positives) {
  const std::size_t n = tp.size();
  std::vector<double> recall(n), precision(n);
  std::size_t ctp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ctp += tp[i] ? 1 : 0;
    recall[i] = static_cast<double>(ctp) / static_cast<double>(positives);
    precision[i] = static_cast<double>(ctp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) sum += precision[it - recall.begin()];
  }
  return sum / 101.0;
}

}  // namespace detail

/// AP at IoU 0.5 in percent, averaged over the categories present in the
/// truth; std::nullopt when the truth is empty.
inline std::optional<double> ap50(std::vector<Detection> dets, const AnnotationSet& truth) {
  const detail::TruthIndex idx(truth);
  if (idx.truths.empty()) return std::nullopt;
  detail::rank(dets);
  std::vector<bool> used;
  const auto match = detail::greedy_match(dets, idx, used);
  double total = 0.0;
  for (const auto& [cat, positives] : idx.per_category) {
    std::vector<bool> tp;
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].category_id == cat) tp.push_back(match[i] >= 0);
    total += detail::interpolated_ap(tp, positives);
  }
  return 100.0 * total / static_cast<double>(idx.per_category.size());
}

inline std::optional<double> ap50(const AnnotationSet& predictions, const AnnotationSet& truth) {
  return ap50(to_detections(predictions), truth);
}

enum class ErrorKind { Bkg, Loc, Dupe };

struct ErrorBreakdown {
  std::vector<Detection> ranked;
  std::vector<long> match;                 // per ranked detection
  std::vector<std::optional<ErrorKind>> kind;  // per ranked detection, empty for TP
  std::vector<long> loc_target;            // per ranked detection, -1 unless Loc
  std::vector<std::size_t> missed;         // truths never matched nor targeted
  std::size_t true_positives = 0;
  std::size_t bkg = 0, loc = 0, dupe = 0;
};

/// Classifies every false positive as Bkg (IoU < 0.1 with every truth), Loc
/// (best unmatched truth overlaps in [0.1, 0.5)) or a duplicate of an already
/// matched truth; duplicates that touch no other truth count as Bkg.
inline ErrorBreakdown classify_errors(std::vector<Detection> dets, const AnnotationSet& truth) {
  const detail::TruthIndex idx(truth);
  detail::rank(dets);
  ErrorBreakdown eb;
  std::vector<bool> used;
  eb.match = detail::greedy_match(dets, idx, used);
  eb.kind.assign(dets.size(), std::nullopt);
  eb.loc_target.assign(dets.size(), -1);
  std::vector<bool> targeted(idx.truths.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (eb.match[i] >= 0) {
      ++eb.true_positives;
      continue;
    }
    double best_any = 0.0, best_free = 0.0;
    long best_any_t = -1, free_t = -1;
    for (auto t : idx.candidates(dets[i])) {
      const double o = iou(dets[i].box, idx.truths[t].box);
      if (o > best_any) best_any = o, best_any_t = static_cast<long>(t);
      if (!used[t] && o > best_free) best_free = o, free_t = static_cast<long>(t);
    }
    if (best_any < detail::kBackgroundIou) {
      eb.kind[i] = ErrorKind::Bkg;
    } else if (best_free >= detail::kBackgroundIou) {
      eb.kind[i] = ErrorKind::Loc;
      eb.loc_target[i] = free_t;
      targeted[free_t] = true;
    } else {
      bool touches_other = false;
      for (auto t : idx.candidates(dets[i]))
        if (static_cast<long>(t) != best_any_t && iou(dets[i].box, idx.truths[t].box) >= detail::kBackgroundIou)
          touches_other = true;
      eb.kind[i] = touches_other ? ErrorKind::Dupe : ErrorKind::Bkg;
    }
    const auto k = *eb.kind[i];
    (k == ErrorKind::Bkg ? eb.bkg : k == ErrorKind::Loc ? eb.loc : eb.dupe) += 1;
  }
  for (std::size_t t = 0; t < idx.truths.size(); ++t)
    if (!used[t] && !targeted[t]) eb.missed.push_back(t);
  eb.ranked = std::move(dets);
  return eb;
}

/// dAP per error class in AP points. Duplicates are folded into Loc.
struct TideReport {
  double bkg_dap = 0.0;
  double miss_dap = 0.0;
  double loc_dap = 0.0;
};

inline std::optional<TideReport> tide_decompose(const std::vector<Detection>& dets, const AnnotationSet& truth) {
  const auto base = ap50(dets, truth);
  if (!base) return std::nullopt;
  const auto eb = classify_errors(dets, truth);
  const auto truths = truth.all_labels();

  std::vector<Detection> loc_fixed, bkg_fixed, miss_fixed = eb.ranked;
  for (std::size_t i = 0; i < eb.ranked.size(); ++i) {
    const auto& k = eb.kind[i];
    if (!k || *k != ErrorKind::Bkg) bkg_fixed.push_back(eb.ranked[i]);
    if (k && *k == ErrorKind::Dupe) continue;
    Detection d = eb.ranked[i];
    if (k && *k == ErrorKind::Loc) d.box = truths[eb.loc_target[i]].box;
    loc_fixed.push_back(d);
  }
  LabelId synthetic = std::numeric_limits<LabelId>::min();
  for (auto t : eb.missed)
    miss_fixed.push_back({truths[t].image_id, truths[t].category_id, truths[t].box,
                          std::numeric_limits<double>::infinity(), synthetic++});
  return TideReport{*ap50(bkg_fixed, truth) - *base, *ap50(miss_fixed, truth) - *base,
                    *ap50(loc_fixed, truth) - *base};
}

struct LabelQuality {
  std::optional<double> precision;  // undefined for an empty candidate set
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0, candidates = 0, truths = 0;
  std::size_t bkg = 0, loc = 0, dupe = 0, miss = 0;
};

/// Dataset-level quality of a label set against truth at IoU 0.5, with error
/// counts from the same classifier as tide_decompose.
inline std::optional<LabelQuality> label_quality(const AnnotationSet& candidate, const AnnotationSet& truth) {
  if (truth.label_count() == 0) return std::nullopt;
  const auto eb = classify_errors(labels_as_predictions(candidate), truth);
  LabelQuality q;
  q.candidates = eb.ranked.size();
  q.truths = truth.label_count();
  q.matched = eb.true_positives;
  q.recall = static_cast<double>(q.matched) / static_cast<double>(q.truths);
  if (q.candidates > 0) q.precision = static_cast<double>(q.matched) / static_cast<double>(q.candidates);
  if (q.precision && *q.precision + q.recall > 0.0)
    q.f1 = 2.0 * *q.precision * q.recall / (*q.precision + q.recall);
  q.bkg = eb.bkg;
  q.loc = eb.loc;
  q.dupe = eb.dupe;
  q.miss = q.truths - q.matched;
  return q;
}

/// Ledger total as a percentage of annotating every truth instance with experts.
inline double budget_percent(const BudgetLedger& ledger, std::size_t truth_instances) {
  if (truth_instances == 0) throw std::invalid_argument("budget_percent needs a positive instance count");
  return 100.0 * ledger.total() /
         (ledger.model().expert_per_instance * static_cast<double>(truth_instances));
}

inline double budget_percent(const BudgetLedger& ledger, const AnnotationSet& truth) {
  return budget_percent(ledger, truth.label_count());
}

struct EvalReport {
  std::string method;
  std::optional<double> ap50;
  std::optional<TideReport> tide;
  std::optional<LabelQuality> label_quality;
  std::optional<double> budget_percent;
};

inline json to_json(const LabelQuality& q) {
  return {{"precision", q.precision ? json(*q.precision) : json(nullptr)},
          {"recall", q.recall}, {"f1", q.f1}, {"matched", q.matched}, {"candidates", q.candidates},
          {"truths", q.truths},
          {"errors", {{"bkg", q.bkg}, {"loc", q.loc}, {"dupe", q.dupe}, {"miss", q.miss}}}};
}

inline json to_json(const EvalReport& r) {
  json j = {{"method", r.method}, {"tide_variant", "dAP"}};
  j["ap50"] = r.ap50 ? json(*r.ap50) : json(nullptr);
  j["tide"] = r.tide ? json{{"bkg_dap", r.tide->bkg_dap}, {"miss_dap", r.tide->miss_dap},
                            {"loc_dap", r.tide->loc_dap}}
                     : json(nullptr);
  j["label_quality"] = r.label_quality ? to_json(*r.label_quality) : json(nullptr);
  j["budget_percent"] = r.budget_percent ? json(*r.budget_percent) : json(nullptr);
  return j;
}

inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.method = j.value("method", std::string{});
    if (j.contains("ap50") && !j["ap50"].is_null()) r.ap50 = j["ap50"].get<double>();
    if (j.contains("tide") && !j["tide"].is_null())
      r.tide = TideReport{j["tide"].at("bkg_dap").get<double>(), j["tide"].at("miss_dap").get<double>(),
                          j["tide"].at("loc_dap").get<double>()};
    if (j.contains("budget_percent") && !j["budget_percent"].is_null())
      r.budget_percent = j["budget_percent"].get<double>();
    if (j.contains("label_quality") && !j["label_quality"].is_null()) {
      const auto& q = j["label_quality"];
      LabelQuality lq;
      if (!q.at("precision").is_null()) lq.precision = q["precision"].get<double>();
      lq.recall = q.at("recall").get<double>();
      lq.f1 = q.at("f1").get<double>();
      lq.matched = q.at("matched").get<std::size_t>();
      lq.candidates = q.at("candidates").get<std::size_t>();
      lq.truths = q.at("truths").get<std::size_t>();
      r.label_quality = lq;
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("eval report: ") + e.what());
  }
  return r;
}

/// Plain-text table: Method | AP50 | Bkg | Miss | Loc | Budget.
inline std::string render_table(std::span<const EvalReport> rows) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.method.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %8s %8s %8s %8s %9s\n", static_cast<int>(width), "Method", "AP50",
                "Bkg", "Miss", "Loc", "Budget");
  out += line;
  out += std::string(width + 46, '-') + "\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s %8s %8s %8s %8s %9s\n", static_cast<int>(width), r.method.c_str(),
                  cell(r.ap50).c_str(), cell(r.tide ? std::optional(r.tide->bkg_dap) : std::nullopt).c_str(),
                  cell(r.tide ? std::optional(r.tide->miss_dap) : std::nullopt).c_str(),
                  cell(r.tide ? std::optional(r.tide->loc_dap) : std::nullopt).c_str(),
                  cell(r.budget_percent).c_str());
    out += line;
  }
  return out;
}

}  // namespace alc
