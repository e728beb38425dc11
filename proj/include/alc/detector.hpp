// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "alc/coco_io.hpp"
#include "alc/data_model.hpp"
#include "alc/error.hpp"
#include "alc/geometry.hpp"
#include "alc/noise_sim.hpp"
#include "alc/rng.hpp"

namespace alc {

enum class DetectorRole { ModelP, ModelA };

inline Source source_of(DetectorRole r) { return r == DetectorRole::ModelP ? Source::ModelP : Source::ModelA; }
inline std::string_view to_string(DetectorRole r) { return to_string(source_of(r)); }

/// All constants of the simulated detector in one place.
struct SimParams {
  double s_max = 0.95;
  double skill_floor = 0.05;
  double tau = 400.0;
  double fp_base_p = 0.25;
  double fp_base_a = 0.08;
  double jitter_base = 0.15;
  double logistic_slope = 8.0;
  /// ModelA drops instances whose difficulty exceeds skill + this margin.
  double a_suppress_margin = 0.1;
  double conf_noise = 0.1;
  double fp_conf_mean = 0.3;
  /// Effective-count model used when the trainer can see ground truth:
  /// each correct label is worth 1 + difficulty_weight * (difficulty - 0.5),
  /// each wrong or missing label costs noise_penalty.
  double noise_penalty = 0.5;
  double difficulty_weight = 1.0;

  double fp_base(DetectorRole r) const { return r == DetectorRole::ModelP ? fp_base_p : fp_base_a; }
};

struct DetectorSkill {
  double training_instances = 0.0;
  double skill = 0.0;
  DetectorRole role = DetectorRole::ModelP;
};

/// Saturating learning curve: floor + (s_max - floor) * (1 - exp(-n / tau)).
inline double skill_from_count(double n, const SimParams& p = {}) {
  n = std::max(0.0, n);
  return p.skill_floor + (p.s_max - p.skill_floor) * (1.0 - std::exp(-n / p.tau));
}

inline DetectorSkill fit_simulated(const AnnotationSet& train, DetectorRole role, const SimParams& p = {}) {
  const auto n = static_cast<double>(train.label_count());
  return {n, skill_from_count(n, p), role};
}

/// Training signal of a label set judged against ground truth: greedy
/// one-to-one IoU >= 0.5 matching per image, difficulty-weighted credit for
/// matched labels, a penalty for unmatched labels and for missed truths.
inline double effective_instance_count(const AnnotationSet& train, const AnnotationSet& truth,
                                       const DifficultyMap& difficulty, const SimParams& p = {}) {
  double credit = 0.0;
  std::int64_t wrong = 0;
  for (const auto& [img, _] : train.images()) {
    const auto labels = train.labels(img);
    const auto truths = truth.has_image(img) ? truth.labels(img) : std::span<const Label>{};
    struct Cand {
      std::size_t l, t;
      double iou;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = 0; j < truths.size(); ++j)
        if (labels[i].category_id == truths[j].category_id) {
          const double o = iou(labels[i].box, truths[j].box);
          if (o >= 0.5) cands.push_back({i, j, o});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.iou != b.iou ? a.iou > b.iou : std::pair(a.l, a.t) < std::pair(b.l, b.t);
    });
    std::vector<bool> lused(labels.size()), tused(truths.size());
    std::size_t matched = 0;
    for (const auto& c : cands) {
      if (lused[c.l] || tused[c.t]) continue;
      lused[c.l] = tused[c.t] = true;
      ++matched;
      credit += 1.0 + p.difficulty_weight * (difficulty_of(difficulty, truths[c.t].label_id) - 0.5);
    }
    wrong += static_cast<std::int64_t>(labels.size() - matched) +
             static_cast<std::int64_t>(truths.size() - matched);
  }
  return std::max(0.0, credit - p.noise_penalty * static_cast<double>(wrong));
}

inline DetectorSkill fit_simulated(const AnnotationSet& train, DetectorRole role, const SimParams& p,
                                   const AnnotationSet& truth, const DifficultyMap& difficulty) {
  const double n = effective_instance_count(train, truth, difficulty, p);
  return {n, skill_from_count(n, p), role};
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Oracle-backed prediction for one image.
///
/// Each truth is found with probability logistic(slope * (skill - difficulty))
/// (ModelA also drops truths harder than skill + margin); found boxes are
/// jittered by jitter_base * (1 - skill) of their size; each truth spawns a
/// false positive with probability fp_base * (1 - skill). True positives get
/// confidence around their detection probability, false positives around
/// fp_conf_mean.
inline std::vector<Label> predict_image(const DetectorSkill& skill, const ImageInfo& info,
                                        std::span<const Label> truths, const DifficultyMap& difficulty,
                                        std::uint64_t seed, const SimParams& p, LabelId& next_id) {
  Rng rng(derive_seed(seed, {0x9D, static_cast<std::uint64_t>(info.id)}));
  const double s = skill.skill;
  const Source src = source_of(skill.role);
  std::vector<Label> out;
  for (const auto& t : truths) {
    const double d = difficulty_of(difficulty, t.label_id);
    const double p_detect = logistic(p.logistic_slope * (s - d));
    const bool hit = rng.bernoulli(p_detect);
    const double jitter = p.jitter_base * (1.0 - s);
    const double dx = rng.normal(0.0, 1.0), dy = rng.normal(0.0, 1.0);
    const double dw = rng.normal(0.0, 1.0), dh = rng.normal(0.0, 1.0);
    const double cn = rng.normal(0.0, p.conf_noise);
    if (!hit) continue;
    if (skill.role == DetectorRole::ModelA && d > s + p.a_suppress_margin) continue;
    Box b = t.box;
    if (jitter > 0.0) {
      const double w = t.box.w() * std::exp(jitter * dw), h = t.box.h() * std::exp(jitter * dh);
      b = Box(t.box.cx() + jitter * t.box.w() * dx - w / 2, t.box.cy() + jitter * t.box.h() * dy - h / 2, w, h);
    }
    out.push_back({b, info.id, t.category_id, src, std::clamp(p_detect + cn, 0.01, 0.99), next_id++, {}});
  }
  const double fp_rate = p.fp_base(skill.role) * (1.0 - s);
  for (const auto& t : truths) {
    if (!rng.bernoulli(fp_rate)) continue;
    const double conf = std::clamp(p.fp_conf_mean + rng.normal(0.0, p.conf_noise), 0.01, 0.99);
    const double w = std::min(t.box.w(), info.width - 1.0), h = std::min(t.box.h(), info.height - 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
      Box b(rng.uniform(0.0, info.width - w), rng.uniform(0.0, info.height - h), w, h);
      if (std::all_of(truths.begin(), truths.end(), [&](const Label& o) { return iou(b, o.box) < 0.1; })) {
        out.push_back({b, info.id, t.category_id, src, conf, next_id++, {}});
        break;
      }
    }
  }
  return out;
}

/// Id range reserved for predictions of each role, so prediction ids never
/// collide with human label ids.
inline LabelId prediction_id_base(DetectorRole r) {
  return r == DetectorRole::ModelP ? 1'000'000'000 : 2'000'000'000;
}

inline AnnotationSet predict_simulated(const DetectorSkill& skill, std::span<const ImageId> images,
                                       const AnnotationSet& truth, const DifficultyMap& difficulty,
                                       std::uint64_t seed, const SimParams& p = {}) {
  AnnotationSet out(source_of(skill.role));
  out.set_categories(truth.categories());
  LabelId next_id = prediction_id_base(skill.role);
  for (auto img : images) {
    const auto& info = truth.image(img);
    out.add_image(info);
    for (auto& l : predict_image(skill, info, truth.labels(img), difficulty, seed, p, next_id))
      out.add_label(std::move(l));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detector contract used by the active loop.

class TrainedDetector {
 public:
  virtual ~TrainedDetector() = default;
  virtual DetectorRole role() const = 0;
  virtual AnnotationSet predict(std::span<const ImageId> images, std::uint64_t seed) const = 0;
  virtual json describe() const = 0;
};

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual std::unique_ptr<TrainedDetector> fit(const AnnotationSet& train, DetectorRole role) = 0;
};

class SimulatedDetector : public TrainedDetector {
 public:
  SimulatedDetector(DetectorSkill skill, std::shared_ptr<const AnnotationSet> truth,
                    std::shared_ptr<const DifficultyMap> difficulty, SimParams params)
      : skill_(skill), truth_(std::move(truth)), difficulty_(std::move(difficulty)), params_(params) {}

  DetectorRole role() const override { return skill_.role; }
  const DetectorSkill& skill() const { return skill_; }

  AnnotationSet predict(std::span<const ImageId> images, std::uint64_t seed) const override {
    return predict_simulated(skill_, images, *truth_, *difficulty_, seed, params_);
  }

  json describe() const override {
    return {{"kind", "simulated"}, {"role", to_string(skill_.role)}, {"skill", skill_.skill},
            {"training_instances", skill_.training_instances}};
  }

 private:
  DetectorSkill skill_;
  std::shared_ptr<const AnnotationSet> truth_;
  std::shared_ptr<const DifficultyMap> difficulty_;
  SimParams params_;
};

/// Simulated training. With `quality_aware` the skill follows the effective
/// (truth-checked) instance count instead of the raw label count.
class SimulatedBackend : public DetectorBackend {
 public:
  SimulatedBackend(AnnotationSet truth, DifficultyMap difficulty, SimParams params = {},
                   bool quality_aware = true)
      : truth_(std::make_shared<const AnnotationSet>(std::move(truth))),
        difficulty_(std::make_shared<const DifficultyMap>(std::move(difficulty))),
        params_(params),
        quality_aware_(quality_aware) {}

  std::unique_ptr<TrainedDetector> fit(const AnnotationSet& train, DetectorRole role) override {
    const auto skill = quality_aware_ ? fit_simulated(train, role, params_, *truth_, *difficulty_)
                                      : fit_simulated(train, role, params_);
    return std::make_unique<SimulatedDetector>(skill, truth_, difficulty_, params_);
  }

  const AnnotationSet& truth() const { return *truth_; }
  const DifficultyMap& difficulty() const { return *difficulty_; }
  const SimParams& params() const { return params_; }

 private:
  std::shared_ptr<const AnnotationSet> truth_;
  std::shared_ptr<const DifficultyMap> difficulty_;
  SimParams params_;
  bool quality_aware_;
};

// ---------------------------------------------------------------------------
// External detector adapter

namespace detail {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

inline std::string shell_quote(const std::string& s) { return "'" + replace_all(s, "'", "'\\''") + "'"; }

}  // namespace detail

/// Parses an external detector's output: a COCO document (only
/// "annotations" is read) or a bare array of result entries. Every entry needs
/// a "score" in [0,1] and an image from `images`.
inline AnnotationSet parse_predictions(const json& doc, const AnnotationSet& image_table,
                                       std::span<const ImageId> images, Source source,
                                       const std::string& context) {
  const json* anns = &doc;
  if (doc.is_object()) {
    auto it = doc.find("annotations");
    if (it == doc.end()) throw SchemaError(context + ": missing 'annotations'");
    anns = &*it;
  }
  if (!anns->is_array()) throw SchemaError(context + ": annotations must be an array");
  AnnotationSet out(source);
  out.set_categories(image_table.categories());
  std::set<ImageId> allowed(images.begin(), images.end());
  for (auto id : images) out.add_image(image_table.image(id));
  LabelId next_id = prediction_id_base(source == Source::ModelA ? DetectorRole::ModelA : DetectorRole::ModelP);
  for (std::size_t i = 0; i < anns->size(); ++i) {
    json a = (*anns)[i];
    if (!a.is_object()) throw SchemaError(context + ": annotations[" + std::to_string(i) + "] not an object");
    if (!a.contains("id")) a["id"] = static_cast<LabelId>(i);
    if (!a.contains("score"))
      throw SchemaError(context + ": annotation id " + a["id"].dump() + " has no score");
    Label l = detail::parse_annotation(a, i, source);
    if (!allowed.count(l.image_id))
      throw SchemaError(context + ": annotation id " + std::to_string(l.label_id) +
                        " refers to image " + std::to_string(l.image_id) + " outside the request");
    l.label_id = next_id++;
    out.add_label(std::move(l));
  }
  return out;
}

/// Runs a configured external command to train on `train` and predict on
/// `images`. The template may use {train_json}, {image_list}, {out_json} and
/// {role}; each is substituted with a shell-quoted path or name.
inline AnnotationSet external_detector_round_trip(const std::string& command_template,
                                                  const AnnotationSet& train,
                                                  const AnnotationSet& image_table,
                                                  std::span<const ImageId> images,
                                                  const std::filesystem::path& workdir, DetectorRole role) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(workdir, ec);
  if (ec) throw IoError("cannot create detector workdir " + workdir.string() + ": " + ec.message());
  const auto train_json = workdir / "train.json";
  const auto image_list = workdir / "images.txt";
  const auto out_json = workdir / "predictions.json";
  save_coco(train, train_json);
  {
    std::string lines;
    for (auto id : images) lines += std::to_string(id) + "\t" + image_table.image(id).file_name + "\n";
    write_text(image_list, lines);
  }
  fs::remove(out_json, ec);

  std::string cmd = command_template;
  cmd = detail::replace_all(cmd, "{train_json}", detail::shell_quote(train_json.string()));
  cmd = detail::replace_all(cmd, "{image_list}", detail::shell_quote(image_list.string()));
  cmd = detail::replace_all(cmd, "{out_json}", detail::shell_quote(out_json.string()));
  cmd = detail::replace_all(cmd, "{role}", std::string(to_string(role)));
  const int status = std::system(cmd.c_str());
  const int code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status));
  if (code != 0)
    throw DetectorCommandError("external detector exited with status " + std::to_string(code), code);
  if (!fs::exists(out_json))
    throw DetectorOutputMissing("external detector produced no " + out_json.string());
  return parse_predictions(read_json(out_json), image_table, images, source_of(role), out_json.string());
}

class ExternalDetector : public TrainedDetector {
 public:
  ExternalDetector(std::string command, AnnotationSet train, std::shared_ptr<const AnnotationSet> table,
                   std::filesystem::path workdir, DetectorRole role)
      : command_(std::move(command)), train_(std::move(train)), table_(std::move(table)),
        workdir_(std::move(workdir)), role_(role) {}

  DetectorRole role() const override { return role_; }

  AnnotationSet predict(std::span<const ImageId> images, std::uint64_t) const override {
    return external_detector_round_trip(command_, train_, *table_, images, workdir_, role_);
  }

  json describe() const override {
    return {{"kind", "external"}, {"role", to_string(role_)}, {"command", command_},
            {"training_instances", train_.label_count()}};
  }

 private:
  std::string command_;
  AnnotationSet train_;
  std::shared_ptr<const AnnotationSet> table_;
  std::filesystem::path workdir_;
  DetectorRole role_;
};

/// Defers training to prediction time: the external command does both.
class ExternalBackend : public DetectorBackend {
 public:
  ExternalBackend(std::string command, AnnotationSet image_table, std::filesystem::path workdir)
      : command_(std::move(command)),
        table_(std::make_shared<const AnnotationSet>(std::move(image_table))),
        workdir_(std::move(workdir)) {}

  std::unique_ptr<TrainedDetector> fit(const AnnotationSet& train, DetectorRole role) override {
    return std::make_unique<ExternalDetector>(command_, train, table_,
                                              workdir_ / std::string(to_string(role)), role);
  }

 private:
  std::string command_;
  std::shared_ptr<const AnnotationSet> table_;
  std::filesystem::path workdir_;
};

}  // namespace alc
