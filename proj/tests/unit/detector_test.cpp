#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "alc/coco_io.hpp"
#include "alc/detector.hpp"
#include "alc/eval.hpp"
#include "alc/noise_sim.hpp"
#include "fixtures.hpp"

using namespace alc;

namespace {

AnnotationSet corpus(int images, std::uint64_t seed) {
  CorpusSpec spec;
  spec.images = images;
  spec.seed = seed;
  return make_synthetic_corpus(spec);
}

std::vector<ImageId> ids(const AnnotationSet& s) {
  std::vector<ImageId> out;
  for (const auto& [id, _] : s.images()) out.push_back(id);
  return out;
}

AnnotationSet first_labels(const AnnotationSet& truth, std::size_t n) {
  AnnotationSet out(Source::Expert);
  out.set_categories(truth.categories());
  for (const auto& [id, info] : truth.images()) {
    out.add_image(info);
    for (const auto& l : truth.labels(id)) {
      if (out.label_count() >= n) break;
      out.add_label(l);
    }
  }
  return out;
}

std::size_t false_positives(const AnnotationSet& pred, const AnnotationSet& truth) {
  const auto q = label_quality(pred, truth);
  return q->candidates - q->matched;
}

}  // namespace

TEST(SkillCurve, KnownPoints) {
  // floor + (s_max - floor) * (1 - e^-1) at n = tau
  EXPECT_NEAR(skill_from_count(400.0), 0.05 + 0.9 * 0.6321205588285577, 1e-12);
  EXPECT_NEAR(skill_from_count(400.0), 0.6189, 1e-4);
  EXPECT_DOUBLE_EQ(skill_from_count(0.0), 0.05);
  EXPECT_DOUBLE_EQ(skill_from_count(-5.0), 0.05);
  EXPECT_NEAR(skill_from_count(1e9), 0.95, 1e-12);
}

TEST(SkillCurve, Monotone) {
  double prev = skill_from_count(0.0);
  for (int n = 1; n <= 5000; n += 7) {
    const double s = skill_from_count(n);
    ASSERT_GT(s, prev);
    ASSERT_LT(s, 0.95);
    prev = s;
  }
}

TEST(EffectiveCount, CleanTruthAtMidDifficultyCountsEachLabel) {
  const auto t = corpus(20, 1);
  DifficultyMap d;
  for (const auto& l : t.all_labels()) d[l.label_id] = 0.5;
  EXPECT_DOUBLE_EQ(effective_instance_count(t, t, d), static_cast<double>(t.label_count()));
}

TEST(EffectiveCount, NoiseLowersTheCount) {
  const auto t = corpus(50, 2);
  const auto d = assign_difficulty(t, 3);
  const auto spec = NoiseSpec::paper_like(4);
  const auto noisy = corrupt(t, spec, d).crowd;
  EXPECT_LT(effective_instance_count(noisy, t, d), effective_instance_count(t, t, d));
  EXPECT_GE(effective_instance_count(noisy, t, d), 0.0);
}

TEST(SimulatedDetector, PerfectLimitReproducesTruth) {
  const auto t = corpus(30, 5);
  DifficultyMap d;
  for (const auto& l : t.all_labels()) d[l.label_id] = 0.0;
  SimParams p;
  p.s_max = 1.0;
  p.skill_floor = 1.0;
  p.logistic_slope = 1e3;
  p.conf_noise = 0.0;
  SimulatedBackend backend(t, d, p, false);
  const auto det = backend.fit(t, DetectorRole::ModelP);
  const auto images = ids(t);
  const auto pred = det->predict(images, 9);
  EXPECT_EQ(pred.label_count(), t.label_count());
  for (auto img : images) {
    const auto a = pred.labels(img), b = t.labels(img);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].box, b[i].box);
  }
  EXPECT_DOUBLE_EQ(*ap50(pred, t), 100.0);
}

TEST(SimulatedDetector, MoreDataFewerFalsePositivesAndHigherAp) {
  const auto t = corpus(300, 6);
  const auto d = assign_difficulty(t, 7);
  SimulatedBackend backend(t, d, {}, false);
  const auto images = ids(t);
  const auto small = backend.fit(first_labels(t, 40), DetectorRole::ModelP)->predict(images, 11);
  const auto large = backend.fit(first_labels(t, 400), DetectorRole::ModelP)->predict(images, 11);
  EXPECT_LT(false_positives(large, t), false_positives(small, t));
  EXPECT_GT(*ap50(large, t), *ap50(small, t));
}

TEST(SimulatedDetector, TruePositivesOutscoreFalsePositives) {
  const auto t = corpus(300, 8);
  const auto d = assign_difficulty(t, 9);
  SimulatedBackend backend(t, d, {}, false);
  const auto images = ids(t);
  const auto pred = backend.fit(first_labels(t, 200), DetectorRole::ModelP)->predict(images, 12);
  const auto eb = classify_errors(to_detections(pred), t);
  double tp = 0, fp = 0;
  std::size_t ntp = 0, nfp = 0;
  for (std::size_t i = 0; i < eb.ranked.size(); ++i) {
    (eb.match[i] >= 0 ? tp : fp) += eb.ranked[i].score;
    ++(eb.match[i] >= 0 ? ntp : nfp);
  }
  ASSERT_GT(ntp, 0u);
  ASSERT_GT(nfp, 0u);
  EXPECT_GT(tp / ntp, fp / nfp);
}

TEST(SimulatedDetector, ModelARecallNotAboveModelP) {
  const auto t = corpus(300, 10);
  const auto d = assign_difficulty(t, 11);
  SimulatedBackend backend(t, d, {}, false);
  const auto images = ids(t);
  const auto train = first_labels(t, 300);
  const auto p = backend.fit(train, DetectorRole::ModelP)->predict(images, 13);
  const auto a = backend.fit(train, DetectorRole::ModelA)->predict(images, 13);
  EXPECT_LE(label_quality(a, t)->recall, label_quality(p, t)->recall);
  EXPECT_LT(false_positives(a, t), false_positives(p, t));
  for (const auto& l : a.all_labels()) EXPECT_EQ(l.source, Source::ModelA);
}

TEST(SimulatedDetector, DeterministicPerSeed) {
  const auto t = corpus(40, 12);
  const auto d = assign_difficulty(t, 1);
  SimulatedBackend backend(t, d);
  const auto det = backend.fit(first_labels(t, 100), DetectorRole::ModelP);
  const auto images = ids(t);
  EXPECT_EQ(to_coco_json(det->predict(images, 5)), to_coco_json(det->predict(images, 5)));
  EXPECT_NE(to_coco_json(det->predict(images, 5)), to_coco_json(det->predict(images, 6)));
}

// External adapter, driven by small shell commands.

namespace {

struct External : ::testing::Test {
  fx::TempDir dir;
  AnnotationSet table = [] {
    AnnotationSet t(Source::Expert);
    t.set_categories({{1, "object"}});
    const auto src = fx::images(Source::Expert, 3);
    for (const auto& [_, info] : src.images()) t.add_image(info);
    return t;
  }();
  std::vector<ImageId> images{1, 2};

  AnnotationSet run(const std::string& script) {
    write_text(dir / "emit.json", script);
    const std::string cmd = "cp " + detail::shell_quote((dir / "emit.json").string()) + " {out_json}";
    return external_detector_round_trip(cmd, table, table, images, dir / "work", DetectorRole::ModelP);
  }
};

}  // namespace

TEST_F(External, ReadsResultArray) {
  const auto out = run(R"([{"image_id":1,"category_id":1,"bbox":[1,2,3,4],"score":0.7},
                          {"image_id":2,"category_id":1,"bbox":[5,5,10,10],"score":0.2}])");
  ASSERT_EQ(out.label_count(), 2u);
  EXPECT_EQ(out.labels(1)[0].box, Box(1, 2, 3, 4));
  EXPECT_DOUBLE_EQ(out.labels(1)[0].confidence, 0.7);
  EXPECT_EQ(out.labels(1)[0].source, Source::ModelP);
  EXPECT_EQ(out.images().size(), 2u);
}

TEST_F(External, ReadsCocoDocument) {
  const auto out = run(R"({"annotations":[{"id":4,"image_id":2,"category_id":1,"bbox":[0,0,8,8],"score":1}]})");
  EXPECT_EQ(out.label_count(), 1u);
}

TEST_F(External, WritesInputsForTheCommand) {
  write_text(dir / "emit.json", "[]");
  const auto cmd = "test -s {train_json} && grep -q img_2.png {image_list} && test {role} = model-p && echo [] > {out_json}";
  EXPECT_EQ(external_detector_round_trip(cmd, table, table, images, dir / "w", DetectorRole::ModelP).label_count(),
            0u);
}

TEST_F(External, RejectsMalformedJson) { EXPECT_THROW(run("[{"), SchemaError); }

TEST_F(External, RejectsScoreOutOfRange) {
  EXPECT_THROW(run(R"([{"image_id":1,"category_id":1,"bbox":[1,2,3,4],"score":1.5}])"), SchemaError);
}

TEST_F(External, RejectsMissingScore) {
  EXPECT_THROW(run(R"([{"image_id":1,"category_id":1,"bbox":[1,2,3,4]}])"), SchemaError);
}

TEST_F(External, RejectsImageOutsideRequest) {
  EXPECT_THROW(run(R"([{"image_id":3,"category_id":1,"bbox":[1,2,3,4],"score":0.5}])"), SchemaError);
}

TEST_F(External, NonzeroExitIsDistinct) {
  try {
    external_detector_round_trip("exit 7", table, table, images, dir / "w", DetectorRole::ModelA);
    FAIL();
  } catch (const DetectorCommandError& e) {
    EXPECT_EQ(e.exit_code, 7);
    EXPECT_EQ(e.family(), ErrorFamily::Io);
  }
}

TEST_F(External, MissingOutputIsDistinct) {
  EXPECT_THROW(external_detector_round_trip("true", table, table, images, dir / "w", DetectorRole::ModelP),
               DetectorOutputMissing);
}

TEST_F(External, BackendPassesRoleThrough) {
  ExternalBackend backend("echo '[]' > {out_json}; echo {role} > {out_json}.role", table, dir / "b");
  const auto det = backend.fit(table, DetectorRole::ModelA);
  EXPECT_EQ(det->role(), DetectorRole::ModelA);
  EXPECT_EQ(det->predict(images, 0).label_count(), 0u);
  EXPECT_EQ(read_text(dir / "b" / "model-a" / "predictions.json.role"), "model-a\n");
}
