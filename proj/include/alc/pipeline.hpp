// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "alc/active_loop.hpp"
#include "alc/correction.hpp"

namespace alc {

struct PipelineConfig {
  LoopConfig loop;
  CorrectionConfig correction;
  CostModel costs;
};

struct Step2 {
  AnnotationSet crowd{Source::Crowd};  // remaining crowd labels, X \ X^g
  AnnotationSet model_p{Source::ModelP};
  AnnotationSet model_a{Source::ModelA};
  CorrectionPlan plan;
};

inline std::uint64_t step2_seed(const LoopConfig& cfg, DetectorRole role) {
  return derive_seed(cfg.seed, {0x5E2, static_cast<std::uint64_t>(role)});
}

/// Predicts with the final models on the unselected images and plans the
/// correction of their crowd labels.
inline Step2 prepare_step2(const PipelineState& st, const TrainedDetector& model_p, const TrainedDetector* model_a,
                           CorrectionConfig cfg) {
  Step2 s;
  const auto remaining = st.remaining();
  s.crowd = st.dc.restricted_to(remaining);
  s.model_p = model_p.predict(remaining, step2_seed(st.config, DetectorRole::ModelP));
  cfg.dual_model = cfg.dual_model && model_a != nullptr && st.config.mode == LsmMode::Dual;
  cfg.iou_threshold = st.config.iou_threshold;
  if (cfg.dual_model) s.model_a = model_a->predict(remaining, step2_seed(st.config, DetectorRole::ModelA));
  s.plan = plan_correction(s.crowd, s.model_p, s.model_a, cfg);
  return s;
}

/// Expert labels on the selected images plus the cleaned crowd labels on the
/// rest, renumbered 1..N in image order.
inline AnnotationSet merge_cleaned(const AnnotationSet& expert, const AnnotationSet& cleaned_crowd) {
  AnnotationSet out(Source::Crowd);
  out.set_categories(cleaned_crowd.categories());
  std::map<ImageId, std::vector<Label>> per_image;
  for (const auto& [img, info] : cleaned_crowd.images()) {
    out.add_image(info);
    for (const auto& l : cleaned_crowd.labels(img)) per_image[img].push_back(l);
  }
  for (const auto& [img, info] : expert.images()) {
    if (!out.has_image(img)) out.add_image(info);
    for (auto l : expert.labels(img)) {
      l.note = "expert";
      per_image[img].push_back(std::move(l));
    }
  }
  LabelId next = 1;
  for (auto& [img, labels] : per_image)
    for (auto& l : labels) {
      l.source = Source::Crowd;
      l.confidence = 1.0;
      l.label_id = next++;
      out.add_label(std::move(l));
    }
  return out;
}

using Reviewer = std::function<void(std::vector<ReviewItem>&, const AnnotationSet& corrected)>;

inline Reviewer truth_reviewer(const AnnotationSet& truth) {
  return [&truth](std::vector<ReviewItem>& q, const AnnotationSet& corrected) {
    resolve_with_truth(q, corrected, truth);
  };
}

struct PipelineRun {
  LoopResult loop;
  Step2 step2;
  AnnotationSet b_clean{Source::Crowd};
  AnnotationSet cleaned{Source::Crowd};  // expert labels on X^g plus b_clean
  BudgetLedger ledger;                   // Step 1 charges plus review charges
};

/// Both steps end to end with a programmatic reviewer. With a checkpoint
/// directory, an existing checkpoint there is resumed.
inline PipelineRun run_pipeline(const AnnotationSet& crowd, ExpertOracle& oracle, DetectorBackend& backend,
                                const Reviewer& reviewer, const PipelineConfig& cfg,
                                const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt) {
  PipelineRun run;
  std::optional<std::filesystem::path> resume;
  if (checkpoint_dir) resume = latest_checkpoint(*checkpoint_dir);
  PipelineState st = resume ? load_checkpoint(*resume) : initialize(crowd, oracle, cfg.loop, cfg.costs);
  run.loop = run_full(std::move(st), backend, oracle, checkpoint_dir);
  run.step2 = prepare_step2(run.loop.state, *run.loop.model_p, run.loop.model_a.get(), cfg.correction);
  reviewer(run.step2.plan.queue, run.step2.plan.corrected);
  record_decisions(run.step2.plan.report, run.step2.plan.queue);
  run.ledger = run.loop.state.ledger;
  run.b_clean = apply_decisions(run.step2.plan.corrected, run.step2.plan.queue, &run.ledger);
  run.cleaned = merge_cleaned(run.loop.state.dp, run.b_clean);
  return run;
}

}  // namespace alc
