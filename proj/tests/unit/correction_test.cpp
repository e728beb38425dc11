#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "alc/correction.hpp"
#include "alc/rng.hpp"
#include "fixtures.hpp"

using namespace alc;
using fx::lab;

namespace {

ScoredLabel green(double x, double y, double w, double h, LabelId id, ImageId img = 1) {
  return {lab(x, y, w, h, id, Source::Crowd, 1.0, img), 0.5};
}

std::set<LabelId> removed_ids(const BibResult& r) {
  std::set<LabelId> out;
  for (const auto& x : r.removed) out.insert(x.green.label.label_id);
  return out;
}

ReviewItem item(std::int64_t id, const Label& flagged, Region region, ReviewStatus st,
                std::optional<Box> resolution = std::nullopt) {
  ReviewItem it;
  it.item_id = id;
  it.image_id = flagged.image_id;
  it.flagged = flagged;
  it.region = region;
  it.status = st;
  it.resolution = resolution;
  return it;
}

}  // namespace

TEST(BibFilter, StrictThreshold) {
  const std::vector<ScoredLabel> g{green(0, 0, 100, 100, 1)};
  // 8 of the witness's 10 columns lie inside: covered fraction exactly 0.8.
  const std::vector<Label> at{lab(92, 0, 10, 10, 50, Source::ModelP)};
  const std::vector<Label> above{lab(91.9, 0, 10, 10, 50, Source::ModelP)};
  EXPECT_EQ(bib_filter(g, at, 0.8).removed.size(), 0u);
  EXPECT_EQ(bib_filter(g, above, 0.8).removed.size(), 1u);
  EXPECT_EQ(bib_filter(g, at, 0.79).removed.size(), 1u);
}

TEST(BibFilter, OtherImagesAndWitnessChoice) {
  const std::vector<ScoredLabel> g{green(0, 0, 100, 100, 1)};
  const std::vector<Label> w{lab(10, 10, 10, 10, 60, Source::ModelP, 0.5, 2), lab(95, 0, 10, 10, 61),
                             lab(50, 50, 10, 10, 62), lab(20, 20, 10, 10, 59)};
  const auto r = bib_filter(g, w, 0.8);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0].witness.label_id, 59);  // full containment, lowest id
  EXPECT_THROW(bib_filter(g, w, 0.0), std::invalid_argument);
  EXPECT_THROW(bib_filter(g, w, 1.0), std::invalid_argument);
}

TEST(BibFilter, LargerGammaRemovesSubset) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredLabel> greens;
    std::vector<Label> wit;
    for (int i = 0; i < 10; ++i)
      greens.push_back(green(rng.uniform(0, 150), rng.uniform(0, 150), rng.uniform(10, 100), rng.uniform(10, 100), i));
    for (int i = 0; i < 15; ++i)
      wit.push_back(lab(rng.uniform(0, 200), rng.uniform(0, 200), rng.uniform(5, 40), rng.uniform(5, 40), 100 + i));
    std::set<LabelId> prev = removed_ids(bib_filter(greens, wit, 0.05));
    for (double gamma = 0.1; gamma < 0.999; gamma += 0.05) {
      const auto cur = removed_ids(bib_filter(greens, wit, gamma));
      ASSERT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      prev = cur;
    }
  }
}

TEST(BibWitnesses, RegionModeUsesNonGreenLabels) {
  const std::vector<Label> c{lab(0, 0, 10, 10, 1), lab(100, 100, 10, 10, 2)};
  const std::vector<Label> p{lab(0, 0, 10, 10, 11, Source::ModelP, 0.9), lab(50, 50, 5, 5, 12, Source::ModelP)};
  const std::vector<Label> a{lab(200, 0, 5, 5, 21, Source::ModelA, 0.4)};
  const auto part = lsm_partition(c, p, a);
  EXPECT_EQ(bib_witnesses(part, p, a, WitnessMode::Predictions).size(), 3u);
  const auto w = bib_witnesses(part, p, a, WitnessMode::Regions);
  std::set<LabelId> got;
  for (const auto& l : w) got.insert(l.label_id);
  EXPECT_EQ(got, (std::set<LabelId>{1, 11, 12, 21}));
}

TEST(AutoCorrect, GrayTakesModelPBoxAndPinkIsAdded) {
  auto crowd = fx::images(Source::Crowd, 1);
  crowd.add_label(lab(0, 0, 10, 10, 1));
  crowd.add_label(lab(100, 100, 10, 10, 2));
  const std::vector<Label> p{lab(1, 0, 10, 10, 11, Source::ModelP, 0.9), lab(50, 50, 20, 20, 12, Source::ModelP)};
  std::map<ImageId, RegionPartition> parts{{1, lsm_partition(crowd.labels(1), p, {})}};
  const auto out = auto_correct(crowd, parts);
  const auto ls = out.labels(1);
  ASSERT_EQ(ls.size(), 3u);
  EXPECT_EQ(ls[0].box, Box(1, 0, 10, 10));
  EXPECT_EQ(ls[0].note, notes::kAutoCorrected);
  EXPECT_EQ(ls[1].box, Box(100, 100, 10, 10));  // green untouched
  EXPECT_EQ(ls[2].box, Box(50, 50, 20, 20));
  EXPECT_EQ(ls[2].source, Source::Crowd);
  EXPECT_EQ(ls[2].label_id, 3);
  EXPECT_DOUBLE_EQ(ls[2].confidence, 1.0);
}

TEST(AutoCorrect, CrowdAndModelAClusterIsUntouched) {
  auto crowd = fx::images(Source::Crowd, 1);
  crowd.add_label(lab(0, 0, 10, 10, 1));
  const std::vector<Label> a{lab(1, 0, 10, 10, 21, Source::ModelA, 0.9)};
  std::map<ImageId, RegionPartition> parts{{1, lsm_partition(crowd.labels(1), {}, a)}};
  const auto out = auto_correct(crowd, parts);
  ASSERT_EQ(out.label_count(), 1u);
  EXPECT_EQ(out.labels(1)[0].box, Box(0, 0, 10, 10));
}

TEST(ReviewQueue, OrderAndSuggestions) {
  const std::vector<ScoredLabel> red{{lab(50, 5, 10, 10, 21, Source::ModelA, 0.6), 0.6}};
  const std::vector<ScoredLabel> greens{green(0, 40, 10, 10, 1), green(0, 0, 10, 10, 2, 2)};
  const std::vector<Label> p{lab(2, 40, 10, 10, 11, Source::ModelP, 0.3), lab(0, 41, 10, 10, 12, Source::ModelP, 0.8)};
  const auto q = build_review_queue(red, greens, p, {}, 5);
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q[0].flagged.label_id, 21);  // image 1, y = 5
  EXPECT_EQ(q[0].item_id, 5);
  EXPECT_EQ(q[1].flagged.label_id, 1);
  EXPECT_EQ(q[2].image_id, 2);
  ASSERT_EQ(q[1].suggestions.size(), 2u);
  EXPECT_EQ(q[1].suggestions[0].label_id, 12);
  EXPECT_EQ(q[0].region, Region::Red);
}

TEST(ReviewItemJson, RoundTrip) {
  auto it = item(7, lab(1, 2, 3, 4, 9), Region::Green, ReviewStatus::Edited, Box(1.5, 2, 3, 4));
  it.suggestions.push_back(lab(1, 2, 3, 5, 11, Source::ModelP, 0.7));
  it.accepted_suggestion = 11;
  const auto back = review_item_from_json(to_json(it));
  EXPECT_EQ(to_json(back), to_json(it));
  EXPECT_EQ(back.resolution, it.resolution);
  EXPECT_EQ(back.status, ReviewStatus::Edited);
  EXPECT_THROW(review_status_from_string("maybe"), SchemaError);
}

TEST(ApplyDecisions, ConservationAndNotes) {
  auto corrected = fx::images(Source::Crowd, 2);
  corrected.add_label(lab(0, 0, 10, 10, 1));
  corrected.add_label(lab(20, 20, 10, 10, 2));
  corrected.add_label(lab(40, 40, 10, 10, 3));
  corrected.add_label(lab(0, 0, 10, 10, 4, Source::Crowd, 1.0, 2));
  const std::vector<ReviewItem> q{
      item(1, corrected.labels(1)[0], Region::Green, ReviewStatus::Rejected),
      item(2, corrected.labels(1)[1], Region::Green, ReviewStatus::Edited, Box(21, 20, 10, 10)),
      item(3, lab(70, 70, 5, 5, 99, Source::ModelA, 0.5), Region::Red, ReviewStatus::Accepted, Box(70, 70, 5, 5)),
      item(4, lab(90, 90, 5, 5, 98, Source::ModelA, 0.5), Region::Red, ReviewStatus::Rejected),
      item(5, corrected.labels(2)[0], Region::Green, ReviewStatus::AddedMissing, Box(1, 1, 9, 9)),
  };
  BudgetLedger ledger;
  const auto out = apply_decisions(corrected, q, &ledger);
  // 4 labels - 3 flagged greens + 3 non-rejected resolutions
  EXPECT_EQ(out.label_count(), 4u);
  EXPECT_EQ(out.labels(1).size(), 3u);
  std::map<std::string, int> by_note;
  for (const auto& l : out.all_labels()) ++by_note[l.note];
  EXPECT_EQ(by_note[notes::kReviewEdited], 1);
  EXPECT_EQ(by_note[notes::kReviewAccepted], 1);
  EXPECT_EQ(by_note[notes::kReviewAdded], 1);
  EXPECT_EQ(ledger.total(Actor::Expert, Action::ReviewCorrect), 5 * ledger.model().expert_review_per_instance);
  for (const auto& l : out.all_labels()) EXPECT_NE(l.label_id, 1);
}

TEST(ApplyDecisions, PendingItemsAreAStateError) {
  auto corrected = fx::images(Source::Crowd, 1);
  corrected.add_label(lab(0, 0, 10, 10, 1));
  const std::vector<ReviewItem> q{item(3, corrected.labels(1)[0], Region::Green, ReviewStatus::Pending),
                                  item(4, corrected.labels(1)[0], Region::Green, ReviewStatus::Pending)};
  try {
    apply_decisions(corrected, q);
    FAIL();
  } catch (const StateError& e) {
    EXPECT_NE(std::string(e.what()).find("3, 4"), std::string::npos);
  }
  const std::vector<ReviewItem> bad{item(1, corrected.labels(1)[0], Region::Green, ReviewStatus::Edited)};
  EXPECT_THROW(apply_decisions(corrected, bad), StateError);
}

TEST(ResolveWithTruth, EditAddRejectAndCoverage) {
  auto truth = fx::images(Source::Expert, 1);
  truth.add_label(lab(0, 0, 10, 10, 1, Source::Expert));
  truth.add_label(lab(50, 50, 10, 10, 2, Source::Expert));
  truth.add_label(lab(100, 100, 10, 10, 3, Source::Expert));
  auto corrected = fx::images(Source::Crowd, 1);
  corrected.add_label(lab(1, 0, 10, 10, 10));     // green, matches truth 1
  corrected.add_label(lab(100, 100, 10, 10, 11));  // unflagged, covers truth 3
  corrected.add_label(lab(200, 200, 10, 10, 12));  // green, no truth
  std::vector<ReviewItem> q{
      item(1, corrected.labels(1)[0], Region::Green, ReviewStatus::Pending),
      item(2, lab(55, 55, 10, 10, 90, Source::ModelA, 0.4), Region::Red, ReviewStatus::Pending),
      item(3, lab(101, 100, 10, 10, 91, Source::ModelA, 0.4), Region::Red, ReviewStatus::Pending),
      item(4, corrected.labels(1)[2], Region::Green, ReviewStatus::Pending),
  };
  resolve_with_truth(q, corrected, truth);
  EXPECT_EQ(q[0].status, ReviewStatus::Edited);
  EXPECT_EQ(*q[0].resolution, Box(0, 0, 10, 10));
  EXPECT_EQ(q[1].status, ReviewStatus::AddedMissing);  // IoU 25/175
  EXPECT_EQ(*q[1].resolution, Box(50, 50, 10, 10));
  EXPECT_EQ(q[2].status, ReviewStatus::Rejected);  // truth 3 already covered
  EXPECT_EQ(q[3].status, ReviewStatus::Rejected);
  const auto out = apply_decisions(corrected, q);
  EXPECT_EQ(out.label_count(), 3u);
}

TEST(PlanCorrection, ReportCountsAndBib) {
  auto crowd = fx::images(Source::Crowd, 1);
  crowd.add_label(lab(0, 0, 20, 20, 1));       // gray with P
  crowd.add_label(lab(100, 100, 50, 50, 2));   // green containing a P box: Bib
  crowd.add_label(lab(200, 0, 20, 20, 3));     // green, kept
  auto p = fx::images(Source::ModelP, 1);
  p.add_label(lab(1, 0, 20, 20, 11, Source::ModelP, 0.9));
  p.add_label(lab(110, 110, 10, 10, 12, Source::ModelP, 0.8));  // pink
  auto a = fx::images(Source::ModelA, 1);
  a.add_label(lab(0, 200, 20, 20, 21, Source::ModelA, 0.7));  // red

  CorrectionConfig cfg;
  const auto plan = plan_correction(crowd, p, a, cfg);
  const auto& r = plan.report;
  EXPECT_EQ(r.gray, 1u);
  EXPECT_EQ(r.pink, 1u);
  EXPECT_EQ(r.red, 1u);
  EXPECT_EQ(r.green, 2u);
  EXPECT_EQ(r.auto_corrected, 1u);
  EXPECT_EQ(r.auto_added, 1u);
  EXPECT_EQ(r.bib_removed, 1u);
  EXPECT_EQ(r.queue_without_bib, 3u);
  EXPECT_EQ(r.queue_with_bib, 2u);
  EXPECT_EQ(plan.corrected.label_count(), 3u);  // gray, kept green, pink
  EXPECT_EQ(to_json(r)["regions"]["green"], 2);

  cfg.bib_module = false;
  EXPECT_EQ(plan_correction(crowd, p, a, cfg).queue.size(), 3u);
  cfg.bib_module = true;
  cfg.dual_model = false;
  const auto single = plan_correction(crowd, p, a, cfg);
  EXPECT_EQ(single.report.red, 0u);
  EXPECT_EQ(single.queue.size(), 1u);
}
