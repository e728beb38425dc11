// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alc/eval.hpp"
#include "alc/noise_sim.hpp"
#include "alc/pipeline.hpp"

// Closed-loop experiments on synthetic corpora: ground truth stands in for
// the expert, the reviewer and the simulated detector's backing signal.

namespace alc {

/// Union of two sets over disjoint images.
inline AnnotationSet merge_disjoint(const AnnotationSet& a, const AnnotationSet& b) {
  AnnotationSet out = a;
  for (const auto& [img, info] : b.images()) {
    if (out.has_image(img)) throw std::invalid_argument("merge_disjoint: image " + std::to_string(img) + " in both sets");
    out.add_image(info);
    for (const auto& l : b.labels(img)) out.add_label(l);
  }
  return out;
}

struct ExperimentSpec {
  int train_images = 300;
  int test_images = 100;
  std::uint64_t seed = 0;
  NoiseSpec noise = NoiseSpec::paper_like(0);
  SimParams sim;
};

struct ExperimentCorpus {
  AnnotationSet train_truth{Source::Expert};
  AnnotationSet test_truth{Source::Expert};
  DifficultyMap difficulty;
  NoiseResult noise;
  SimParams sim;
  std::uint64_t seed = 0;

  SimulatedBackend backend() const {
    return SimulatedBackend(merge_disjoint(train_truth, test_truth), difficulty, sim, true);
  }
};

inline ExperimentCorpus make_experiment_corpus(const ExperimentSpec& spec) {
  ExperimentCorpus c;
  c.seed = spec.seed;
  c.sim = spec.sim;
  CorpusSpec train;
  train.images = spec.train_images;
  train.seed = derive_seed(spec.seed, {0x7A1});
  c.train_truth = make_synthetic_corpus(train);
  CorpusSpec test = train;
  test.images = spec.test_images;
  test.first_image_id = 1'000'000;
  test.first_label_id = 10'000'000;
  test.seed = derive_seed(spec.seed, {0x7E5});
  c.test_truth = make_synthetic_corpus(test);
  c.difficulty = assign_difficulty(merge_disjoint(c.train_truth, c.test_truth), derive_seed(spec.seed, {0xD1}));
  NoiseSpec noise = spec.noise;
  noise.seed = derive_seed(spec.seed, {0x4015E});
  c.noise = corrupt(c.train_truth, noise, c.difficulty);
  return c;
}

inline std::uint64_t eval_seed(const ExperimentCorpus& c) { return derive_seed(c.seed, {0xE7A1}); }

/// AP50 and dAP of an already-trained detector on the held-out split.
inline EvalReport evaluate_detector(const TrainedDetector& det, const ExperimentCorpus& c, std::string method) {
  const auto ids = c.test_truth.image_ids();
  const auto preds = to_detections(det.predict(ids, eval_seed(c)));
  EvalReport r;
  r.method = std::move(method);
  r.ap50 = ap50(preds, c.test_truth);
  r.tide = tide_decompose(preds, c.test_truth);
  return r;
}

/// Trains a ModelP-role simulated detector on `train` and evaluates it.
inline EvalReport evaluate_training_set(const AnnotationSet& train, const ExperimentCorpus& c, std::string method) {
  auto backend = c.backend();
  const auto det = backend.fit(train, DetectorRole::ModelP);
  return evaluate_detector(*det, c, std::move(method));
}

struct ClosedLoopOutcome {
  PipelineRun run;
  LabelQuality crowd_quality;
  LabelQuality cleaned_quality;
  EvalReport noisy_training;
  EvalReport cleaning_model;
  EvalReport ours;
  EvalReport clean_training;
};

inline PipelineConfig scaled_paper_config(std::size_t train_images, std::uint64_t seed) {
  // 40 initial and 40 per round out of 747 images in the reference setup.
  PipelineConfig cfg;
  const auto step = std::max<std::size_t>(1, (train_images * 40 + 747 / 2) / 747);
  cfg.loop.x0 = step;
  cfg.loop.k = step;
  cfg.loop.g = 4;
  cfg.loop.seed = seed;
  return cfg;
}

inline ClosedLoopOutcome run_closed_loop(const ExperimentCorpus& c, const PipelineConfig& cfg) {
  ClosedLoopOutcome out;
  auto backend = c.backend();
  TruthOracle oracle(c.train_truth);
  out.run = run_pipeline(c.noise.crowd, oracle, backend, truth_reviewer(c.train_truth), cfg);
  out.crowd_quality = *label_quality(c.noise.crowd, c.train_truth);
  out.cleaned_quality = *label_quality(out.run.cleaned, c.train_truth);

  out.noisy_training = evaluate_training_set(c.noise.crowd, c, "Noisy Training");
  BudgetLedger crowd_only(cfg.costs);
  for (const auto& [img, _] : c.noise.crowd.images())
    crowd_only.charge(Actor::Crowd, Action::Annotate, img, static_cast<std::int64_t>(c.noise.crowd.labels(img).size()));
  out.noisy_training.budget_percent = budget_percent(crowd_only, c.train_truth);
  out.noisy_training.label_quality = out.crowd_quality;

  out.cleaning_model = evaluate_detector(*out.run.loop.model_p, c, "Cleaning Model");
  out.cleaning_model.budget_percent = budget_percent(out.run.loop.state.ledger, c.train_truth);

  out.ours = evaluate_training_set(out.run.cleaned, c,
                                   cfg.loop.strategy == SelectionStrategy::Active ? "Ours" : "Ours (Random)");
  out.ours.budget_percent = budget_percent(out.run.ledger, c.train_truth);
  out.ours.label_quality = out.cleaned_quality;

  out.clean_training = evaluate_training_set(c.train_truth, c, "Clean Training");
  BudgetLedger full(cfg.costs);
  for (const auto& [img, _] : c.train_truth.images())
    full.charge(Actor::Expert, Action::Annotate, img, static_cast<std::int64_t>(c.train_truth.labels(img).size()));
  out.clean_training.budget_percent = budget_percent(full, c.train_truth);
  return out;
}

}  // namespace alc
