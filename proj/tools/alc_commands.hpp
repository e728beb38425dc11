// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fcntl.h>
#include <pthread.h>
#include <signal.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "alc/alc.hpp"

// Subcommand implementations. Each takes a plain options struct so tests can
// drive them without going through argument parsing.

namespace alc::cli {

namespace fs = std::filesystem;

/// Exclusive advisory lock on <dir>/.alc.lock, held for the object's lifetime.
class WorkdirLock {
 public:
  explicit WorkdirLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create workdir " + dir.string() + ": " + ec.message());
    const auto path = dir / ".alc.lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw StateError("workdir " + dir.string() + " is in use by another alc process");
    }
  }
  ~WorkdirLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  int fd_ = -1;
};

inline std::string fmt2(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// make-corpus

struct CorpusOptions {
  fs::path out;
  CorpusSpec spec;
};

inline int cmd_make_corpus(const CorpusOptions& o, std::ostream& log) {
  const auto truth = make_synthetic_corpus(o.spec);
  save_coco(truth, o.out);
  log << "wrote " << truth.images().size() << " images, " << truth.label_count() << " instances to "
      << o.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate-noise

struct NoiseOptions {
  fs::path truth;
  fs::path out;
  std::optional<fs::path> ledger_out;
  std::optional<fs::path> difficulty_in;
  std::optional<fs::path> difficulty_out;
  std::string profile = "paper-like";  // or "zero"
  std::optional<double> miss, loc, bkg, bib, loc_sigma, coupling;
  std::uint64_t seed = 0;
};

inline NoiseSpec noise_spec_from(const NoiseOptions& o) {
  NoiseSpec spec;
  if (o.profile == "paper-like")
    spec = NoiseSpec::paper_like(o.seed);
  else if (o.profile != "zero")
    throw ConfigError("unknown noise profile '" + o.profile + "' (expected paper-like or zero)");
  spec.seed = o.seed;
  if (o.miss) spec.miss_rate = *o.miss;
  if (o.loc) spec.loc_rate = *o.loc;
  if (o.bkg) spec.bkg_rate = *o.bkg;
  if (o.bib) spec.bib_rate = *o.bib;
  if (o.loc_sigma) spec.loc_jitter_sigma = *o.loc_sigma;
  if (o.coupling) spec.coupling_offset = *o.coupling;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline DifficultyMap load_or_assign_difficulty(const std::optional<fs::path>& path, const AnnotationSet& truth,
                                               std::uint64_t seed) {
  if (path) return difficulty_from_json(read_json(*path));
  return assign_difficulty(truth, derive_seed(seed, {0xD1}));
}

inline NoiseResult cmd_simulate_noise(const NoiseOptions& o, std::ostream& log) {
  const auto spec = noise_spec_from(o);
  const auto truth = load_coco(o.truth, Source::Expert);
  const auto difficulty = load_or_assign_difficulty(o.difficulty_in, truth, o.seed);
  auto res = corrupt(truth, spec, difficulty);
  save_coco(res.crowd, o.out);
  if (o.ledger_out) write_json(*o.ledger_out, noise_ledger_to_json(res.ledger));
  if (o.difficulty_out) write_json(*o.difficulty_out, difficulty_to_json(difficulty));
  log << "truth instances " << truth.label_count() << ", crowd labels " << res.crowd.label_count() << "\n";
  for (auto t : {NoiseType::Clean, NoiseType::Miss, NoiseType::Loc, NoiseType::Bib, NoiseType::Bkg})
    log << "  " << std::left << std::setw(6) << to_string(t) << res.count(t) << "\n";
  if (res.bkg_skipped > 0) log << "warning: " << res.bkg_skipped << " background boxes could not be placed\n";
  return res;
}

// ---------------------------------------------------------------------------
// run-pipeline

/// Expert labels read from a file; asking for an image it lacks is an error.
class FileOracle : public ExpertOracle {
 public:
  explicit FileOracle(AnnotationSet labels) : labels_(std::move(labels)) {}
  std::vector<Label> annotate(ImageId image) override {
    if (!labels_.has_image(image))
      throw StateError("expert label file has no image " + std::to_string(image));
    auto ls = labels_.labels(image);
    return {ls.begin(), ls.end()};
  }

 private:
  AnnotationSet labels_;
};

struct PipelineOptions {
  fs::path crowd;
  std::optional<fs::path> truth;       // closed loop: expert, reviewer and simulator oracle
  std::optional<fs::path> expert;      // interactive: expert labels served on request
  std::optional<fs::path> difficulty;  // simulator difficulty map
  fs::path workdir;
  PipelineConfig cfg;
  std::string detector = "sim";  // or external:<command template>
  bool interactive = false;
  std::optional<std::size_t> stop_after;
};

struct WorkdirFiles {
  fs::path dir;
  fs::path checkpoints() const { return dir / "checkpoints"; }
  fs::path cleaned() const { return dir / "cleaned.json"; }
  fs::path b_clean() const { return dir / "b_clean.json"; }
  fs::path expert() const { return dir / "expert.json"; }
  fs::path ledger() const { return dir / "ledger.json"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path decisions() const { return dir / "review_decisions.json"; }
  fs::path review() const { return dir / "review"; }
  fs::path detector() const { return dir / "detector"; }
};

inline json costs_to_json(const CostModel& c) {
  return {{"crowd_per_instance", c.crowd_per_instance},
          {"expert_per_instance", c.expert_per_instance},
          {"expert_review_per_instance", c.expert_review_per_instance}};
}

inline json correction_config_to_json(const CorrectionConfig& c) {
  return {{"gamma", c.gamma}, {"bib_module", c.bib_module},
          {"witness", c.witness == WitnessMode::Predictions ? "predictions" : "regions"},
          {"suggestion_iou", c.suggestion_iou}};
}

inline json budget_breakdown(const BudgetLedger& ledger) {
  json j = json::object();
  for (auto a : {Actor::Crowd, Actor::Expert})
    for (auto b : {Action::Annotate, Action::ReviewCorrect}) {
      const double t = ledger.total(a, b);
      if (t > 0.0) j[std::string(to_string(a)) + "/" + std::string(to_string(b))] = t;
    }
  return j;
}

/// Label-set report row: labels used as predictions against the truth.
inline EvalReport label_set_report(const std::string& method, const AnnotationSet& labels,
                                   const AnnotationSet& truth, const BudgetLedger& ledger) {
  EvalReport r;
  r.method = method;
  const auto dets = labels_as_predictions(labels);
  r.ap50 = ap50(dets, truth);
  r.tide = tide_decompose(dets, truth);
  r.label_quality = label_quality(labels, truth);
  r.budget_percent = budget_percent(ledger, truth);
  return r;
}

struct PipelineOutcome {
  bool completed = false;   // false when stopped early or handed to a reviewer
  json report;
};

inline PipelineOutcome cmd_run_pipeline(const PipelineOptions& o, std::ostream& log) {
  o.cfg.loop.validate();
  if (!(o.cfg.correction.gamma > 0.0 && o.cfg.correction.gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
  if (!o.truth && !o.interactive)
    throw ConfigError("closed-loop runs need --truth; use --interactive with --expert for human review");
  if (!o.truth && !o.expert) throw ConfigError("interactive runs need --expert or --truth as the expert source");

  WorkdirLock lock(o.workdir);
  const WorkdirFiles files{o.workdir};
  const auto crowd = load_coco(o.crowd, Source::Crowd);
  std::optional<AnnotationSet> truth;
  if (o.truth) truth = load_coco(*o.truth, Source::Expert);

  std::unique_ptr<DetectorBackend> backend;
  json detector_desc;
  if (o.detector == "sim") {
    if (!truth) throw ConfigError("the simulated detector needs --truth");
    backend = std::make_unique<SimulatedBackend>(*truth, load_or_assign_difficulty(o.difficulty, *truth, o.cfg.loop.seed));
    detector_desc = "sim";
  } else if (o.detector.rfind("external:", 0) == 0) {
    const auto command = o.detector.substr(9);
    if (command.empty()) throw ConfigError("external detector needs a command after 'external:'");
    backend = std::make_unique<ExternalBackend>(command, crowd, files.detector());
    detector_desc = {{"external", command}};
  } else {
    throw ConfigError("unknown detector '" + o.detector + "' (expected sim or external:<cmd>)");
  }

  std::unique_ptr<ExpertOracle> oracle;
  if (o.expert)
    oracle = std::make_unique<FileOracle>(load_coco(*o.expert, Source::Expert));
  else
    oracle = std::make_unique<TruthOracle>(*truth);

  const auto resume = latest_checkpoint(files.checkpoints());
  PipelineState st = resume ? load_checkpoint(*resume) : initialize(crowd, *oracle, o.cfg.loop, o.cfg.costs);
  if (resume) {
    if (to_json(st.config) != to_json(o.cfg.loop))
      throw StateError("checkpoint " + resume->string() + " was written with a different loop configuration");
    log << "resuming from " << resume->string() << " (iteration " << st.iteration << ")\n";
  }
  auto loop = run_full(std::move(st), *backend, *oracle, files.checkpoints(), o.stop_after);
  if (!loop.model_p) {
    log << "stopped after iteration " << loop.state.iteration << "; rerun to resume\n";
    return {};
  }
  auto step2 = prepare_step2(loop.state, *loop.model_p, loop.model_a.get(), o.cfg.correction);

  json report = {{"config",
                  {{"loop", to_json(o.cfg.loop)}, {"correction", correction_config_to_json(o.cfg.correction)},
                   {"costs", costs_to_json(o.cfg.costs)}, {"detector", detector_desc}}},
                 {"batches", loop.state.batches},
                 {"selected_images", loop.state.selected.size()},
                 {"total_images", loop.state.pool.size()},
                 {"final_models",
                  {{"model_p", loop.model_p->describe()},
                   {"model_a", loop.model_a ? loop.model_a->describe() : json(nullptr)}}},
                 {"tide_variant", "dAP"}};

  save_coco(loop.state.dp, files.expert());
  if (o.interactive) {
    write_review_workspace(files.review(), step2.plan.queue, step2.plan.corrected, step2.crowd, step2.model_p,
                           step2.model_a, o.cfg.costs, o.cfg.loop.iou_threshold);
    write_json(files.ledger(), loop.state.ledger.to_json());
    report["correction"] = to_json(step2.plan.report);
    report["budget"] = {{"total", loop.state.ledger.total()}, {"breakdown", budget_breakdown(loop.state.ledger)}};
    write_json(files.report(), report);
    log << step2.plan.queue.size() << " items await review in " << files.review().string()
        << "; run serve-review, then apply-review\n";
    return {false, report};
  }

  resolve_with_truth(step2.plan.queue, step2.plan.corrected, *truth);
  record_decisions(step2.plan.report, step2.plan.queue);
  auto ledger = loop.state.ledger;
  const auto b_clean = apply_decisions(step2.plan.corrected, step2.plan.queue, &ledger);
  const auto cleaned = merge_cleaned(loop.state.dp, b_clean);

  json queue = json::array();
  for (const auto& it : step2.plan.queue) queue.push_back(to_json(it));
  write_json(files.decisions(), queue);
  save_coco(b_clean, files.b_clean());
  save_coco(cleaned, files.cleaned());
  write_json(files.ledger(), ledger.to_json());

  BudgetLedger crowd_only(o.cfg.costs);
  for (const auto& [img, _] : crowd.images())
    crowd_only.charge(Actor::Crowd, Action::Annotate, img, static_cast<std::int64_t>(crowd.labels(img).size()));
  const EvalReport rows[] = {label_set_report("Crowd Labels", crowd, *truth, crowd_only),
                             label_set_report("Cleaned Labels", cleaned, *truth, ledger)};
  report["correction"] = to_json(step2.plan.report);
  report["methods"] = {to_json(rows[0]), to_json(rows[1])};
  report["budget"] = {{"total", ledger.total()},
                      {"percent", budget_percent(ledger, *truth)},
                      {"breakdown", budget_breakdown(ledger)}};
  write_json(files.report(), report);
  log << render_table(rows);
  return {true, report};
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  fs::path candidate;
  fs::path truth;
  bool labels_as_predictions = false;
  std::string method = "Candidate";
  std::optional<fs::path> ledger;  // adds a budget column
  std::optional<fs::path> out;
};

inline EvalReport evaluate_files(const EvaluateOptions& o) {
  const auto truth = load_coco(o.truth, Source::Expert);
  const auto cand = load_coco(o.candidate, o.labels_as_predictions ? Source::Crowd : Source::ModelP);
  EvalReport r;
  r.method = o.method;
  const auto dets = o.labels_as_predictions ? labels_as_predictions(cand) : to_detections(cand);
  r.ap50 = ap50(dets, truth);
  r.tide = tide_decompose(dets, truth);
  r.label_quality = label_quality(cand, truth);
  if (o.ledger) {
    const auto doc = read_json(*o.ledger);
    r.budget_percent = budget_percent(BudgetLedger::from_json(doc, CostModel{}), truth);
  }
  return r;
}

inline EvalReport cmd_evaluate(const EvaluateOptions& o, std::ostream& log) {
  auto r = evaluate_files(o);
  if (o.out) write_json(*o.out, to_json(r));
  const EvalReport rows[] = {r};
  log << render_table(rows);
  return r;
}

// ---------------------------------------------------------------------------
// serve-review

struct ServeOptions {
  fs::path workdir;
  fs::path images_dir = ".";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> token;
  std::optional<fs::path> static_dir;
};

/// Serves until SIGINT or SIGTERM. Decisions are fsynced as they arrive, so
/// shutdown has nothing further to flush.
inline int cmd_serve_review(const ServeOptions& o, std::ostream& log) {
  const WorkdirFiles files{o.workdir};
  WorkdirLock lock(o.workdir);
  ReviewStore store(files.review());
  ReviewService service(store, {o.images_dir, o.token, o.static_dir});

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  if (!service.bind(o.host, o.port))
    throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port) + " (port in use?)");
  const auto prog = store.progress();
  log << "serving " << prog.pending << " pending of " << prog.pending + prog.resolved << " items on http://" << o.host
      << ":" << o.port << "\n"
      << std::flush;

  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    signalled = true;
    service.stop();
  });
  service.listen_after_bind();
  // listen returned on its own (server error): wake the waiter.
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  const auto done = store.progress();
  log << "stopped; " << done.pending << " items still pending\n";
  return 0;
}

// ---------------------------------------------------------------------------
// apply-review

struct ApplyOptions {
  fs::path workdir;
  std::optional<fs::path> truth;
};

inline json cmd_apply_review(const ApplyOptions& o, std::ostream& log) {
  WorkdirLock lock(o.workdir);
  const WorkdirFiles files{o.workdir};
  ReviewStore store(files.review());
  auto ledger = BudgetLedger::from_json(read_json(files.ledger()), store.costs());
  const auto b_clean = store.finalize(&ledger);
  const auto expert = load_coco(files.expert(), Source::Expert);
  const auto cleaned = merge_cleaned(expert, b_clean);
  save_coco(b_clean, files.b_clean());
  save_coco(cleaned, files.cleaned());
  write_json(files.ledger(), ledger.to_json());

  json report = std::filesystem::exists(files.report()) ? read_json(files.report()) : json::object();
  auto items = store.items();
  CorrectionReport corr;
  if (report.contains("correction")) {
    record_decisions(corr, items);
    report["correction"]["decisions"] = corr.decisions;
  }
  report["budget"] = {{"total", ledger.total()}, {"breakdown", budget_breakdown(ledger)}};
  if (o.truth) {
    const auto truth = load_coco(*o.truth, Source::Expert);
    const EvalReport row = label_set_report("Cleaned Labels", cleaned, truth, ledger);
    report["methods"] = json::array({to_json(row)});
    report["budget"]["percent"] = *row.budget_percent;
    const EvalReport rows[] = {row};
    log << render_table(rows);
  }
  write_json(files.report(), report);
  log << "applied " << items.size() << " review decisions; cleaned set has " << cleaned.label_count() << " labels\n";
  return report;
}

// ---------------------------------------------------------------------------
// export-report

struct ExportOptions {
  fs::path report;
  std::string format = "table";  // table | json | markdown
  std::optional<fs::path> out;
};

inline std::string cmd_export_report(const ExportOptions& o) {
  const auto doc = read_json(o.report);
  std::vector<EvalReport> rows;
  const json methods = doc.contains("methods") ? doc["methods"] : (doc.contains("method") ? json::array({doc}) : json::array());
  for (const auto& m : methods) rows.push_back(eval_report_from_json(m));
  std::string text;
  if (o.format == "table") {
    text = render_table(rows);
  } else if (o.format == "json") {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(to_json(r));
    text = arr.dump(1) + "\n";
  } else if (o.format == "markdown") {
    auto cell = [](const std::optional<double>& v) { return v ? fmt2(*v) : std::string("-"); };
    text = "| Method | AP50 | Bkg | Miss | Loc | Budget |\n|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      const auto t = r.tide;
      text += "| " + r.method + " | " + cell(r.ap50) + " | " + cell(t ? std::optional(t->bkg_dap) : std::nullopt) +
              " | " + cell(t ? std::optional(t->miss_dap) : std::nullopt) + " | " +
              cell(t ? std::optional(t->loc_dap) : std::nullopt) + " | " + cell(r.budget_percent) + " |\n";
    }
  } else {
    throw ConfigError("unknown report format '" + o.format + "' (expected table, json or markdown)");
  }
  if (o.out) write_text(*o.out, text);
  return text;
}

}  // namespace alc::cli
