#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "alc/coco_io.hpp"
#include "alc/noise_sim.hpp"

using namespace alc;

namespace {

AnnotationSet corpus(int images, std::uint64_t seed) {
  CorpusSpec spec;
  spec.images = images;
  spec.seed = seed;
  return make_synthetic_corpus(spec);
}

DifficultyMap constant_difficulty(const AnnotationSet& truth, double d) {
  DifficultyMap m;
  for (const auto& l : truth.all_labels()) m[l.label_id] = d;
  return m;
}

}  // namespace

TEST(Corpus, BoxesInsideImagesAndDisjoint) {
  const auto t = corpus(100, 3);
  EXPECT_EQ(t.images().size(), 100u);
  for (const auto& [img, info] : t.images()) {
    const auto ls = t.labels(img);
    EXPECT_GE(ls.size(), 1u);
    for (std::size_t i = 0; i < ls.size(); ++i) {
      EXPECT_GE(ls[i].box.x(), 0.0);
      EXPECT_LE(ls[i].box.right(), info.width);
      for (std::size_t j = i + 1; j < ls.size(); ++j) EXPECT_EQ(intersection_area(ls[i].box, ls[j].box), 0.0);
    }
  }
  EXPECT_EQ(to_coco_json(t), to_coco_json(corpus(100, 3)));
}

TEST(Difficulty, DeterministicAndClamped) {
  const auto t = corpus(2000, 5);
  ASSERT_GE(t.label_count(), 8000u);
  const auto a = assign_difficulty(t, 17), b = assign_difficulty(t, 17), c = assign_difficulty(t, 18);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& [_, d] : a) {
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 1.0);
  }
  EXPECT_EQ(difficulty_from_json(difficulty_to_json(a)), a);
}

TEST(Difficulty, SmallBoxesAreHarder) {
  const auto t = corpus(500, 6);
  const auto d = assign_difficulty(t, 1);
  auto labels = t.all_labels();
  std::sort(labels.begin(), labels.end(), [](const Label& x, const Label& y) { return x.box.area() < y.box.area(); });
  const std::size_t decile = labels.size() / 10;
  double small = 0, large = 0;
  for (std::size_t i = 0; i < decile; ++i) {
    small += d.at(labels[i].label_id);
    large += d.at(labels[labels.size() - 1 - i].label_id);
  }
  EXPECT_GT(small / decile, large / decile);
}

TEST(Corrupt, ZeroSpecIsIdentity) {
  const auto t = corpus(50, 7);
  NoiseSpec spec;
  spec.seed = 1;
  const auto r = corrupt(t, spec, assign_difficulty(t, 1));
  EXPECT_EQ(r.crowd.label_count(), t.label_count());
  for (const auto& [img, _] : t.images()) {
    const auto a = t.labels(img), b = r.crowd.labels(img);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].box, b[i].box);
      EXPECT_EQ(a[i].label_id, b[i].label_id);
    }
  }
  for (const auto& rec : r.ledger) EXPECT_EQ(rec.type, NoiseType::Clean);
}

TEST(Corrupt, CertainMissEmptiesTheSet) {
  const auto t = corpus(30, 8);
  NoiseSpec spec;
  spec.miss_rate = 1.0;
  const auto r = corrupt(t, spec, constant_difficulty(t, 0.5));
  EXPECT_EQ(r.crowd.label_count(), 0u);
  EXPECT_EQ(r.count(NoiseType::Miss), t.label_count());
  EXPECT_EQ(r.ledger.size(), t.label_count());
}

TEST(Corrupt, MissCountIsBinomial) {
  // 1000 instances, p = 0.2 * (0.5 + 0.5) = 0.2.
  CorpusSpec cs;
  cs.images = 1000;
  cs.min_instances = cs.max_instances = 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cs.seed = seed;
    const auto t = make_synthetic_corpus(cs);
    ASSERT_EQ(t.label_count(), 1000u);
    NoiseSpec spec;
    spec.miss_rate = 0.2;
    spec.seed = seed;
    const auto r = corrupt(t, spec, constant_difficulty(t, 0.5));
    const double sd = std::sqrt(1000 * 0.2 * 0.8);
    EXPECT_NEAR(static_cast<double>(r.count(NoiseType::Miss)), 200.0, 3 * sd) << "seed " << seed;
  }
}

TEST(Corrupt, LedgerCoversEveryTruthAndEveryLabelOnce) {
  const auto t = corpus(200, 9);
  const auto r = corrupt(t, NoiseSpec::paper_like(4), assign_difficulty(t, 4));
  std::map<LabelId, int> truth_seen, label_seen;
  for (const auto& rec : r.ledger) {
    for (auto id : rec.truth_ids) ++truth_seen[id];
    if (rec.label_id) ++label_seen[*rec.label_id];
    EXPECT_EQ(rec.label_id.has_value(), rec.type != NoiseType::Miss);
  }
  for (const auto& l : t.all_labels()) EXPECT_EQ(truth_seen[l.label_id], 1) << l.label_id;
  EXPECT_EQ(truth_seen.size(), t.label_count());
  for (const auto& l : r.crowd.all_labels()) EXPECT_EQ(label_seen[l.label_id], 1);
  EXPECT_EQ(label_seen.size(), r.crowd.label_count());
  for (auto type : {NoiseType::Miss, NoiseType::Loc, NoiseType::Bib, NoiseType::Bkg}) EXPECT_GT(r.count(type), 0u);
}

TEST(Corrupt, PerTypeGeometry) {
  const auto t = corpus(300, 10);
  auto spec = NoiseSpec::paper_like(11);
  spec.bib_rate = 0.2;
  const auto r = corrupt(t, spec, assign_difficulty(t, 11));
  std::map<LabelId, Label> truth_by_id, crowd_by_id;
  for (const auto& l : t.all_labels()) truth_by_id.emplace(l.label_id, l);
  for (const auto& l : r.crowd.all_labels()) crowd_by_id.emplace(l.label_id, l);
  for (const auto& rec : r.ledger) {
    if (!rec.label_id) continue;
    const auto& l = crowd_by_id.at(*rec.label_id);
    switch (rec.type) {
      case NoiseType::Bkg:
        for (const auto& tl : t.labels(l.image_id)) ASSERT_LT(iou(l.box, tl.box), 0.1);
        break;
      case NoiseType::Loc: {
        const double o = iou(l.box, truth_by_id.at(rec.truth_ids.at(0)).box);
        ASSERT_GE(o, 0.1);
        ASSERT_LT(o, 0.5);
        break;
      }
      case NoiseType::Bib:
        ASSERT_EQ(rec.truth_ids.size(), 2u);
        for (auto id : rec.truth_ids) ASSERT_TRUE(l.box.contains(truth_by_id.at(id).box));
        break;
      case NoiseType::Clean:
        ASSERT_EQ(l.box, truth_by_id.at(rec.truth_ids.at(0)).box);
        break;
      case NoiseType::Miss:
        break;
    }
  }
  const auto n_bkg = static_cast<std::size_t>(std::ceil(spec.bkg_rate * static_cast<double>(t.label_count())));
  EXPECT_EQ(r.count(NoiseType::Bkg) + static_cast<std::size_t>(r.bkg_skipped), n_bkg);
}

TEST(Corrupt, DeterministicBytes) {
  const auto t = corpus(100, 12);
  const auto d = assign_difficulty(t, 2);
  const auto a = corrupt(t, NoiseSpec::paper_like(3), d);
  const auto b = corrupt(t, NoiseSpec::paper_like(3), d);
  EXPECT_EQ(to_coco_json(a.crowd).dump(), to_coco_json(b.crowd).dump());
  EXPECT_EQ(noise_ledger_to_json(a.ledger).dump(), noise_ledger_to_json(b.ledger).dump());
  const auto c = corrupt(t, NoiseSpec::paper_like(4), d);
  EXPECT_NE(to_coco_json(a.crowd).dump(), to_coco_json(c.crowd).dump());
}

TEST(Corrupt, RejectsInvalidRates) {
  const auto t = corpus(5, 1);
  NoiseSpec spec;
  spec.loc_rate = 1.5;
  EXPECT_THROW(corrupt(t, spec, {}), std::invalid_argument);
  spec.loc_rate = 0.1;
  spec.loc_jitter_sigma = 0.0;
  EXPECT_THROW(corrupt(t, spec, {}), std::invalid_argument);
}
