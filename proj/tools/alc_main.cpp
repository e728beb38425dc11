// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "CLI11.hpp"
#include "alc_commands.hpp"

namespace {

using namespace alc;
using namespace alc::cli;

void add_loop_flags(CLI::App* cmd, PipelineConfig& cfg, bool& random, std::string& mode) {
  cmd->add_option("--x0", cfg.loop.x0, "Initial expert sample size")->capture_default_str();
  cmd->add_option("--k", cfg.loop.k, "Images selected per iteration")->capture_default_str();
  cmd->add_option("--g", cfg.loop.g, "Active learning iterations")->capture_default_str();
  cmd->add_option("--delta", cfg.loop.delta, "Consensus coverage threshold")->capture_default_str();
  cmd->add_option("--iou-thr", cfg.loop.iou_threshold, "LSM matching IoU threshold")->capture_default_str();
  cmd->add_option("--mode", mode, "LSM mode")->check(CLI::IsMember({"dual", "single"}))->capture_default_str();
  cmd->add_flag("--random", random, "Select images uniformly at random instead of by LSM score");
  cmd->add_option("--budget-cap", cfg.loop.budget_cap, "Stop iterating once the ledger reaches this cost");
  cmd->add_option("--seed", cfg.loop.seed, "Master seed")->required();
  cmd->add_option("--gamma", cfg.correction.gamma, "Bib filter coverage threshold")->capture_default_str();
  cmd->add_flag("!--no-bib", cfg.correction.bib_module, "Disable the Bib filter");
  cmd->add_option("--cost-crowd", cfg.costs.crowd_per_instance, "Crowd cost per instance")->capture_default_str();
  cmd->add_option("--cost-expert", cfg.costs.expert_per_instance, "Expert cost per instance")->capture_default_str();
  cmd->add_option("--cost-review", cfg.costs.expert_review_per_instance, "Expert review cost per item")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active label cleaning for crowdsourced detection labels"};
  app.set_config("--config", "", "TOML or INI config file; command-line flags override it");
  app.require_subcommand(1);

  CorpusOptions corpus;
  auto* mk = app.add_subcommand("make-corpus", "Generate a synthetic ground-truth COCO file");
  mk->add_option("--out", corpus.out, "Output COCO path")->required();
  mk->add_option("--images", corpus.spec.images, "Image count")->capture_default_str();
  mk->add_option("--first-image-id", corpus.spec.first_image_id)->capture_default_str();
  mk->add_option("--first-label-id", corpus.spec.first_label_id)->capture_default_str();
  mk->add_option("--seed", corpus.spec.seed, "Seed")->required();

  NoiseOptions noise;
  auto* sn = app.add_subcommand("simulate-noise", "Corrupt ground truth into crowd-style labels");
  sn->add_option("--truth", noise.truth, "Ground-truth COCO")->required()->check(CLI::ExistingFile);
  sn->add_option("--out", noise.out, "Crowd COCO output")->required();
  sn->add_option("--ledger", noise.ledger_out, "Noise ledger JSON output");
  sn->add_option("--difficulty", noise.difficulty_in, "Difficulty map to use instead of a seeded one");
  sn->add_option("--difficulty-out", noise.difficulty_out, "Write the difficulty map used");
  sn->add_option("--profile", noise.profile, "Base rates: paper-like or zero")->capture_default_str();
  sn->add_option("--miss", noise.miss, "Miss rate");
  sn->add_option("--loc", noise.loc, "Loc rate");
  sn->add_option("--bkg", noise.bkg, "Bkg rate (spurious boxes per true instance)");
  sn->add_option("--bib", noise.bib, "Bib rate");
  sn->add_option("--loc-sigma", noise.loc_sigma, "Loc jitter, fraction of box size");
  sn->add_option("--coupling", noise.coupling, "Difficulty coupling offset");
  sn->add_option("--seed", noise.seed, "Seed")->required();

  PipelineOptions pipe;
  bool random = false;
  std::string mode = "dual";
  std::size_t stop_after = 0;
  auto* rp = app.add_subcommand("run-pipeline", "Active loop, correction and review in one run");
  rp->add_option("--crowd", pipe.crowd, "Crowd COCO")->required()->check(CLI::ExistingFile);
  rp->add_option("--truth", pipe.truth, "Ground truth (closed loop)")->check(CLI::ExistingFile);
  rp->add_option("--expert", pipe.expert, "Expert labels served on request (interactive)")->check(CLI::ExistingFile);
  rp->add_option("--difficulty", pipe.difficulty, "Difficulty map for the simulated detector");
  rp->add_option("--workdir", pipe.workdir, "Output and checkpoint directory")->required();
  rp->add_option("--detector", pipe.detector, "sim or external:<command template>")->capture_default_str();
  rp->add_flag("--interactive", pipe.interactive, "Stop after Step 2 planning and leave the queue for serve-review");
  rp->add_option("--stop-after", stop_after, "Stop after this many iterations (resume by rerunning)");
  add_loop_flags(rp, pipe.cfg, random, mode);

  EvaluateOptions ev;
  auto* evc = app.add_subcommand("evaluate", "AP50, dAP and label quality of a label or prediction file");
  evc->add_option("--candidate", ev.candidate, "Labels or predictions COCO")->required()->check(CLI::ExistingFile);
  evc->add_option("--truth", ev.truth, "Ground-truth COCO")->required()->check(CLI::ExistingFile);
  evc->add_flag("--labels-as-predictions", ev.labels_as_predictions, "Score every candidate box 1.0");
  evc->add_option("--method", ev.method, "Row name")->capture_default_str();
  evc->add_option("--ledger", ev.ledger, "Budget ledger JSON for the budget column");
  evc->add_option("--out", ev.out, "Write the report JSON here");

  ServeOptions serve;
  auto* sr = app.add_subcommand("serve-review", "HTTP review service over a pending queue");
  sr->add_option("--workdir", serve.workdir, "Pipeline workdir")->required();
  sr->add_option("--images-dir", serve.images_dir, "Directory holding the image files")->capture_default_str();
  sr->add_option("--host", serve.host)->capture_default_str();
  sr->add_option("--port", serve.port)->capture_default_str();
  sr->add_option("--token", serve.token, "Shared token required on /api requests");
  sr->add_option("--static-dir", serve.static_dir, "Built review UI to serve at /");

  ApplyOptions apply;
  auto* ar = app.add_subcommand("apply-review", "Fold review decisions into the cleaned dataset");
  ar->add_option("--workdir", apply.workdir, "Pipeline workdir")->required();
  ar->add_option("--truth", apply.truth, "Ground truth for label-quality reporting")->check(CLI::ExistingFile);

  ExportOptions ex;
  auto* er = app.add_subcommand("export-report", "Render a report as a table, markdown or JSON");
  er->add_option("--report", ex.report, "report.json")->required()->check(CLI::ExistingFile);
  er->add_option("--format", ex.format)->check(CLI::IsMember({"table", "json", "markdown"}))->capture_default_str();
  er->add_option("--out", ex.out, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code_for(ErrorFamily::Config);
  }

  try {
    if (*mk) return cmd_make_corpus(corpus, std::cout);
    if (*sn) {
      cmd_simulate_noise(noise, std::cout);
      return 0;
    }
    if (*rp) {
      pipe.cfg.loop.mode = mode == "single" ? LsmMode::Single : LsmMode::Dual;
      pipe.cfg.loop.strategy = random ? SelectionStrategy::Random : SelectionStrategy::Active;
      if (rp->count("--stop-after")) pipe.stop_after = stop_after;
      cmd_run_pipeline(pipe, std::cout);
      return 0;
    }
    if (*evc) {
      cmd_evaluate(ev, std::cout);
      return 0;
    }
    if (*sr) return cmd_serve_review(serve, std::cout);
    if (*ar) {
      cmd_apply_review(apply, std::cout);
      return 0;
    }
    if (*er) {
      const auto text = cmd_export_report(ex);
      if (!ex.out) std::cout << text;
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.family());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
