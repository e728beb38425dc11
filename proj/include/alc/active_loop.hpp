// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "alc/budget.hpp"
#include "alc/coco_io.hpp"
#include "alc/consensus.hpp"
#include "alc/data_model.hpp"
#include "alc/detector.hpp"
#include "alc/error.hpp"
#include "alc/json_io.hpp"
#include "alc/lsm.hpp"
#include "alc/rng.hpp"

namespace alc {

enum class LsmMode { Dual, Single };
enum class SelectionStrategy { Active, Random };

inline std::string_view to_string(LsmMode m) { return m == LsmMode::Dual ? "dual" : "single"; }
inline std::string_view to_string(SelectionStrategy s) { return s == SelectionStrategy::Active ? "active" : "random"; }

struct LoopConfig {
  std::size_t x0 = 40;
  std::size_t k = 40;
  std::size_t g = 4;
  double delta = 0.5;
  double iou_threshold = 0.5;
  LsmMode mode = LsmMode::Dual;
  SelectionStrategy strategy = SelectionStrategy::Active;
  std::uint64_t seed = 0;
  /// Stop early once the ledger total reaches this many cost units.
  std::optional<double> budget_cap;

  void validate() const {
    if (x0 == 0) throw ConfigError("initial sample size must be positive (models cannot train on nothing)");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ConfigError("iou threshold must lie in (0,1)");
  }
};

inline json to_json(const LoopConfig& c) {
  json j = {{"x0", c.x0}, {"k", c.k}, {"g", c.g}, {"delta", c.delta}, {"iou_threshold", c.iou_threshold},
            {"mode", to_string(c.mode)}, {"strategy", to_string(c.strategy)}, {"seed", c.seed}};
  j["budget_cap"] = c.budget_cap ? json(*c.budget_cap) : json(nullptr);
  return j;
}

inline LoopConfig loop_config_from_json(const json& j) {
  LoopConfig c;
  c.x0 = j.at("x0").get<std::size_t>();
  c.k = j.at("k").get<std::size_t>();
  c.g = j.at("g").get<std::size_t>();
  c.delta = j.at("delta").get<double>();
  c.iou_threshold = j.at("iou_threshold").get<double>();
  c.mode = j.at("mode").get<std::string>() == "single" ? LsmMode::Single : LsmMode::Dual;
  c.strategy = j.at("strategy").get<std::string>() == "random" ? SelectionStrategy::Random : SelectionStrategy::Active;
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("budget_cap") && !j["budget_cap"].is_null()) c.budget_cap = j["budget_cap"].get<double>();
  return c;
}

/// Source of expert annotations for an image.
class ExpertOracle {
 public:
  virtual ~ExpertOracle() = default;
  virtual std::vector<Label> annotate(ImageId image) = 0;
};

/// Closed-loop expert: returns the ground truth.
class TruthOracle : public ExpertOracle {
 public:
  explicit TruthOracle(const AnnotationSet& truth) : truth_(truth) {}

  std::vector<Label> annotate(ImageId image) override {
    std::vector<Label> out;
    for (auto l : truth_.labels(image)) {
      l.source = Source::Expert;
      l.confidence = 1.0;
      l.note.clear();
      out.push_back(std::move(l));
    }
    return out;
  }

 private:
  const AnnotationSet& truth_;
};

struct PipelineState {
  std::size_t iteration = 0;
  std::vector<ImageId> pool;                  // every selectable image, ascending
  std::vector<ImageId> selected;              // in selection order
  std::vector<std::vector<ImageId>> batches;  // batches[0] is the initial sample
  AnnotationSet dp{Source::Expert};           // expert labels on `selected`
  AnnotationSet dc{Source::Crowd};            // crowd labels, emptied on `selected`
  AnnotationSet da{Source::Expert};           // consensus labels
  BudgetLedger ledger;
  LoopConfig config;
  bool exhausted = false;

  std::vector<ImageId> remaining() const {
    std::set<ImageId> taken(selected.begin(), selected.end());
    std::vector<ImageId> out;
    for (auto id : pool)
      if (!taken.count(id)) out.push_back(id);
    return out;
  }
};

namespace detail {

inline void annotate_batch(PipelineState& st, const AnnotationSet& crowd_before, std::span<const ImageId> batch,
                           ExpertOracle& oracle) {
  for (auto img : batch) {
    st.dp.add_image(st.dc.image(img));
    auto labels = oracle.annotate(img);
    st.ledger.charge(Actor::Expert, Action::Annotate, img, static_cast<std::int64_t>(labels.size()));
    for (auto& l : labels) {
      l.image_id = img;
      st.dp.add_label(std::move(l));
    }
  }
  // Consensus needs the crowd labels of the batch before they are dropped.
  st.da = build_consensus_increment(st.dp, crowd_before, st.da, batch, st.config.delta);
  for (auto img : batch) st.dc.erase_labels(img);
  st.selected.insert(st.selected.end(), batch.begin(), batch.end());
  st.batches.emplace_back(batch.begin(), batch.end());
}

}  // namespace detail

/// Draws the initial expert sample uniformly without replacement, charges
/// the crowd for every image and the expert for the sample, and builds the
/// first consensus set.
inline PipelineState initialize(const AnnotationSet& crowd, ExpertOracle& oracle, const LoopConfig& cfg,
                                CostModel costs = {}) {
  cfg.validate();
  const auto pool = crowd.image_ids();
  if (cfg.x0 > pool.size())
    throw ConfigError("initial sample size " + std::to_string(cfg.x0) + " exceeds the " +
                      std::to_string(pool.size()) + " available images");
  PipelineState st;
  st.config = cfg;
  st.pool = pool;
  st.ledger = BudgetLedger(costs);
  st.dc = crowd;
  st.dp.set_categories(crowd.categories());
  st.da.set_categories(crowd.categories());
  for (auto img : pool)
    st.ledger.charge(Actor::Crowd, Action::Annotate, img, static_cast<std::int64_t>(crowd.labels(img).size()));
  std::vector<ImageId> order = pool;
  Rng rng(derive_seed(cfg.seed, {0x1417}));
  rng.shuffle(order.begin(), order.end());
  std::vector<ImageId> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.x0));
  std::sort(first.begin(), first.end());
  detail::annotate_batch(st, crowd, first, oracle);
  st.exhausted = st.remaining().empty();
  return st;
}

struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<ImageId> batch;
  std::vector<std::pair<ImageId, double>> scores;  // ranked, active strategy only
  json detectors;
};

inline std::uint64_t prediction_seed(const LoopConfig& cfg, std::size_t iteration, DetectorRole role) {
  return derive_seed(cfg.seed, {0x57E9, iteration, static_cast<std::uint64_t>(role)});
}

/// Scores every remaining image by LSM inconsistency (ModelA only in dual mode).
inline std::vector<std::pair<ImageId, double>> score_images(const AnnotationSet& crowd, const AnnotationSet& model_p,
                                                            const AnnotationSet* model_a,
                                                            std::span<const ImageId> images, double iou_threshold) {
  std::vector<std::pair<ImageId, double>> out;
  out.reserve(images.size());
  for (auto img : images) {
    const auto a = model_a ? model_a->labels(img) : std::span<const Label>{};
    out.emplace_back(img, image_score(lsm_partition(crowd.labels(img), model_p.labels(img), a, iou_threshold)));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  return out;
}

/// One round: fit both models, predict on the unselected images, score and
/// select the top-k, have the expert annotate them, drop their crowd labels
/// and grow the consensus set.
inline IterationRecord run_iteration(PipelineState& st, DetectorBackend& backend, ExpertOracle& oracle) {
  if (st.iteration >= st.config.g) throw StateError("active loop already completed its iterations");
  if (st.exhausted) throw StateError("no images left to select");
  IterationRecord rec;
  rec.iteration = st.iteration;
  const auto& cfg = st.config;
  const auto remaining = st.remaining();
  const bool dual = cfg.mode == LsmMode::Dual;

  auto mp = backend.fit(st.dp, DetectorRole::ModelP);
  std::unique_ptr<TrainedDetector> ma;
  if (dual) ma = backend.fit(st.da, DetectorRole::ModelA);
  rec.detectors = {{"model_p", mp->describe()}, {"model_a", ma ? ma->describe() : json(nullptr)}};

  std::vector<ImageId> batch;
  const std::size_t take = std::min(cfg.k, remaining.size());
  if (cfg.strategy == SelectionStrategy::Active) {
    if (take > 0) {
      const auto bp = mp->predict(remaining, prediction_seed(cfg, st.iteration, DetectorRole::ModelP));
      std::optional<AnnotationSet> ba;
      if (dual) ba = ma->predict(remaining, prediction_seed(cfg, st.iteration, DetectorRole::ModelA));
      rec.scores = score_images(st.dc, bp, ba ? &*ba : nullptr, remaining, cfg.iou_threshold);
      for (std::size_t i = 0; i < take; ++i) batch.push_back(rec.scores[i].first);
    }
  } else {
    std::vector<ImageId> order = remaining;
    Rng rng(derive_seed(cfg.seed, {0x7A4D, st.iteration}));
    rng.shuffle(order.begin(), order.end());
    batch.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(batch.begin(), batch.end());
  const AnnotationSet crowd_before = st.dc;
  detail::annotate_batch(st, crowd_before, batch, oracle);
  rec.batch = batch;
  ++st.iteration;
  if (cfg.k >= remaining.size()) st.exhausted = true;
  return rec;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%03zu", iteration);
  return dir / name;
}

inline void save_checkpoint(const PipelineState& st, const std::filesystem::path& dir) {
  json state = {{"iteration", st.iteration}, {"pool", st.pool}, {"selected", st.selected},
                {"batches", st.batches}, {"exhausted", st.exhausted}, {"config", to_json(st.config)},
                {"costs",
                 {{"crowd_per_instance", st.ledger.model().crowd_per_instance},
                  {"expert_per_instance", st.ledger.model().expert_per_instance},
                  {"expert_review_per_instance", st.ledger.model().expert_review_per_instance}}}};
  save_coco(st.dp, dir / "dp.json");
  save_coco(st.dc, dir / "dc.json");
  save_coco(st.da, dir / "da.json");
  write_json(dir / "ledger.json", st.ledger.to_json());
  write_json(dir / "state.json", state);  // written last: marks the checkpoint complete
}

inline PipelineState load_checkpoint(const std::filesystem::path& dir) {
  try {
    const auto state = read_json(dir / "state.json");
    PipelineState st;
    st.iteration = state.at("iteration").get<std::size_t>();
    st.pool = state.at("pool").get<std::vector<ImageId>>();
    st.selected = state.at("selected").get<std::vector<ImageId>>();
    st.batches = state.at("batches").get<std::vector<std::vector<ImageId>>>();
    st.exhausted = state.at("exhausted").get<bool>();
    st.config = loop_config_from_json(state.at("config"));
    const auto& c = state.at("costs");
    const CostModel costs{c.at("crowd_per_instance").get<double>(), c.at("expert_per_instance").get<double>(),
                          c.at("expert_review_per_instance").get<double>()};
    st.dp = load_coco(dir / "dp.json", Source::Expert);
    st.dc = load_coco(dir / "dc.json", Source::Crowd);
    st.da = load_coco(dir / "da.json", Source::Expert);
    st.ledger = BudgetLedger::from_json(read_json(dir / "ledger.json"), costs);
    std::set<ImageId> covered;
    for (const auto& b : st.batches) covered.insert(b.begin(), b.end());
    if (covered != std::set<ImageId>(st.selected.begin(), st.selected.end()) ||
        covered.size() != st.selected.size() || st.dp.images().size() != st.selected.size())
      throw StateError("checkpoint " + dir.string() + " is inconsistent (selected images vs batches)");
    return st;
  } catch (const StateError&) {
    throw;
  } catch (const Error& e) {
    throw StateError("corrupt checkpoint " + dir.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw StateError("corrupt checkpoint " + dir.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw StateError("corrupt checkpoint " + dir.string() + ": " + e.what());
  }
}

/// Newest complete checkpoint under `dir`, if any.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  std::optional<std::filesystem::path> best;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("iter_", 0) != 0 || !std::filesystem::exists(e.path() / "state.json")) continue;
    if (!best || name > best->filename().string()) best = e.path();
  }
  return best;
}

struct LoopResult {
  PipelineState state;
  std::unique_ptr<TrainedDetector> model_p;
  std::unique_ptr<TrainedDetector> model_a;  // null in single-model mode
  std::vector<IterationRecord> records;
};

/// Runs iterations until g is reached, the pool is exhausted or the budget cap
/// is hit, checkpointing after each one, then fits the final models.
/// `stop_after` (for tests and staged runs) halts after that many iterations
/// of this call without fitting final models.
inline LoopResult run_full(PipelineState st, DetectorBackend& backend, ExpertOracle& oracle,
                           const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
                           std::optional<std::size_t> stop_after = std::nullopt) {
  LoopResult res;
  if (checkpoint_dir && st.iteration == 0) save_checkpoint(st, checkpoint_path(*checkpoint_dir, 0));
  std::size_t done = 0;
  while (st.iteration < st.config.g && !st.exhausted) {
    if (st.config.budget_cap && st.ledger.total() >= *st.config.budget_cap) break;
    if (stop_after && done >= *stop_after) {
      res.state = std::move(st);
      return res;
    }
    res.records.push_back(run_iteration(st, backend, oracle));
    ++done;
    if (checkpoint_dir) save_checkpoint(st, checkpoint_path(*checkpoint_dir, st.iteration));
  }
  res.model_p = backend.fit(st.dp, DetectorRole::ModelP);
  if (st.config.mode == LsmMode::Dual) res.model_a = backend.fit(st.da, DetectorRole::ModelA);
  res.state = std::move(st);
  return res;
}

}  // namespace alc
