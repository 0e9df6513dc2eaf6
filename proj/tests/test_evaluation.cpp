#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "tags/evaluation.hpp"

namespace tags {
namespace {

AnnotationSet single_gt(double a, double b, const std::string& label = "a") {
  AnnotationSet gt;
  gt.classes = {"a", "b"};
  gt.videos["v"].duration_s = 100;
  gt.videos["v"].instances = {{a, b, label}};
  return gt;
}

TEST(Tiou, Examples) {
  EXPECT_NEAR(tiou(0, 10, 5, 15), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(tiou(2, 7, 2, 7), 1.0);
  EXPECT_EQ(tiou(0, 1, 2, 3), 0.0);
  EXPECT_EQ(tiou(0, 1, 1, 2), 0.0);
  EXPECT_NEAR(tiou(0, 10, 2, 4), 0.2, 1e-15);
}

TEST(AveragePrecision, ExactMatchIsOne) {
  const AnnotationSet gt = single_gt(10, 20);
  const PredictionSet p{{"v", {{"a", 0.7, 10, 20}}}};
  EXPECT_EQ(average_precision(p, gt, 0.5, "a").value(), 1.0);
}

TEST(AveragePrecision, LowerRankedHitIsHalf) {
  const AnnotationSet gt = single_gt(10, 20);
  const PredictionSet p{{"v", {{"a", 0.9, 50, 60}, {"a", 0.4, 11, 20}}}};
  EXPECT_NEAR(average_precision(p, gt, 0.5, "a").value(), 0.5, 1e-15);
}

TEST(AveragePrecision, ClassWithoutGroundTruthSkipped) {
  const AnnotationSet gt = single_gt(10, 20);
  EXPECT_FALSE(average_precision({{"v", {{"b", 0.9, 10, 20}}}}, gt, 0.5, "b").has_value());
  EXPECT_EQ(average_precision({}, gt, 0.5, "a").value(), 0.0);
}

TEST(AveragePrecision, DuplicateDetectionIsFalsePositive) {
  const AnnotationSet gt = single_gt(10, 20);
  const PredictionSet p{{"v", {{"a", 0.9, 10, 20}, {"a", 0.8, 10, 20}}}};
  EXPECT_EQ(average_precision(p, gt, 0.5, "a").value(), 1.0);
  AnnotationSet two = gt;
  two.videos["v"].instances.push_back({30, 40, "a"});
  const PredictionSet q{{"v", {{"a", 0.9, 10, 20}, {"a", 0.8, 10, 20}, {"a", 0.7, 30, 40}}}};
  EXPECT_NEAR(average_precision(q, two, 0.5, "a").value(), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 300; ++rep) {
    const auto m = oracle::random_micro_instance(rng);
    for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9})
      for (const auto& c : m.gt.classes) {
        const auto ap = average_precision(m.preds, m.gt, thr, c);
        const double ref = oracle::average_precision(m.preds, m.gt, thr, c);
        if (ref < 0) {
          EXPECT_FALSE(ap.has_value());
        } else {
          ASSERT_TRUE(ap.has_value());
          EXPECT_NEAR(*ap, ref, 1e-9) << rep;
        }
      }
  }
}

TEST(MapReport, PerfectPredictionsScoreOne) {
  AnnotationSet gt;
  gt.classes = {"a", "b", "c"};
  gt.videos["x"].instances = {{0, 5, "a"}, {10, 12, "b"}};
  gt.videos["y"].instances = {{3, 9, "a"}};
  PredictionSet p;
  for (const auto& [id, v] : gt.videos)
    for (const auto& inst : v.instances) p[id].push_back({inst.label, 0.5, inst.start_s, inst.end_s});
  const EvalReport r = map_report(p, gt, activitynet_tious());
  for (double m : r.map) EXPECT_EQ(m, 1.0);
  EXPECT_EQ(r.average_map, 1.0);
  EXPECT_EQ(r.class_ap.size(), 2u);
}

TEST(MapReport, EmptyPredictionsScoreZero) {
  const EvalReport r = map_report({}, single_gt(1, 2), thumos_tious());
  for (double m : r.map) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(r.average_map, 0.0);
  EXPECT_THROW(map_report({}, single_gt(1, 2), {}), ValidationError);
}

TEST(MapReport, ThreeVideoFixtureMatchesOracle) {
  AnnotationSet gt;
  gt.classes = {"run", "jump"};
  gt.videos["v1"].instances = {{0, 10, "run"}, {20, 26, "jump"}};
  gt.videos["v2"].instances = {{5, 15, "run"}};
  gt.videos["v3"].instances = {{2, 4, "jump"}, {30, 44, "run"}};
  const PredictionSet p{
      {"v1", {{"run", 0.95, 0, 9.8}, {"jump", 0.6, 19, 26}, {"run", 0.3, 22, 25}}},
      {"v2", {{"run", 0.8, 6, 14}, {"run", 0.7, 5, 15}, {"jump", 0.2, 5, 15}}},
      {"v3", {{"jump", 0.9, 2.05, 4}, {"run", 0.5, 31, 44}, {"run", 0.45, 30, 40}}}};
  const std::vector<double> grid{0.5, 0.75, 0.95};
  const EvalReport r = map_report(p, gt, grid);
  double avg = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(r.map[i], oracle::mean_ap(p, gt, grid[i]), 1e-9);
    avg += r.map[i] / 3;
  }
  EXPECT_NEAR(r.average_map, avg, 1e-12);
  EXPECT_GT(r.map[0], r.map[2]);
}

TEST(MapReport, InvariantToMonotoneRescalingAndPermutation) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    const auto m = oracle::random_micro_instance(rng);
    const EvalReport base = map_report(m.preds, m.gt, activitynet_tious());
    PredictionSet cubed = m.preds, shuffled = m.preds;
    for (auto& [id, dets] : cubed)
      for (auto& d : dets) d.score = std::pow(d.score, 3.0) + 0.01;
    for (auto& [id, dets] : shuffled) std::shuffle(dets.begin(), dets.end(), rng);
    // relabel videos in reverse order
    AnnotationSet gt2 = m.gt;
    PredictionSet renamed;
    gt2.videos.clear();
    for (const auto& [id, v] : m.gt.videos) gt2.videos["z" + std::string(1, char('9' - id.back()))] = v;
    for (const auto& [id, dets] : m.preds) renamed["z" + std::string(1, char('9' - id.back()))] = dets;
    const EvalReport a = map_report(cubed, m.gt, activitynet_tious());
    const EvalReport b = map_report(shuffled, m.gt, activitynet_tious());
    const EvalReport c = map_report(renamed, gt2, activitynet_tious());
    for (std::size_t i = 0; i < base.map.size(); ++i) {
      EXPECT_NEAR(a.map[i], base.map[i], 1e-15);
      EXPECT_NEAR(b.map[i], base.map[i], 1e-15);
      EXPECT_NEAR(c.map[i], base.map[i], 1e-15);
      EXPECT_GE(base.map[i], 0.0);
      EXPECT_LE(base.map[i], 1.0);
    }
  }
}

TEST(MapReport, JsonAndCsvLayout) {
  const AnnotationSet gt = single_gt(10, 20);
  const EvalReport r = map_report({{"v", {{"a", 0.7, 10, 20}}}}, gt, {0.5, 0.75});
  const auto j = r.to_json();
  EXPECT_EQ(j.at("tious").size(), 2u);
  EXPECT_EQ(j.at("mAP").size(), 2u);
  EXPECT_EQ(j.at("average_mAP").get<double>(), 1.0);
  EXPECT_EQ(j.at("per_class_AP").at("a").size(), 2u);
  EXPECT_EQ(r.map_csv(), "tiou,mAP\n0.5,1\n0.75,1\naverage,1\n");
  EXPECT_EQ(r.class_csv(), "class,0.5,0.75\na,1,1\n");
}

TEST(TiouGrids, Values) {
  const auto a = activitynet_tious();
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a.front(), 0.5);
  EXPECT_EQ(a.back(), 0.95);
  EXPECT_EQ(thumos_tious(), (std::vector<double>{0.3, 0.4, 0.5, 0.6, 0.7}));
}

// False-positive profile ----------------------------------------------------

AnnotationSet fp_fixture_gt() {
  AnnotationSet gt;
  gt.classes = {"a", "b"};
  gt.videos["v"].duration_s = 60;
  gt.videos["v"].instances = {{0, 10, "a"}, {20, 30, "b"}};
  return gt;
}

PredictionSet fp_fixture_preds() {
  return {{"v",
           {{"a", 0.9, 0, 10},
            {"a", 0.8, 1, 10},
            {"b", 0.7, 20, 26},
            {"a", 0.6, 40, 50},
            {"a", 0.5, 21, 29},
            {"b", 0.4, 9.5, 19}}}};
}

TEST(FpProfile, HandLabeledFixture) {
  const AnnotationSet gt = fp_fixture_gt();
  const PredictionSet p = fp_fixture_preds();
  const auto ranked = detail::rank_predictions(p, gt, nullptr);
  using O = PredictionOutcome;
  EXPECT_EQ(classify_predictions(ranked, gt, 0.5, 0.1),
            (std::vector<O>{O::kTruePositive, O::kLocalizationError, O::kTruePositive, O::kBackgroundError,
                            O::kLocalizationError, O::kBackgroundError}));
  const FpProfile prof = fp_profile(p, gt, 0.5);
  ASSERT_EQ(prof.budgets.size(), 10u);
  EXPECT_EQ(prof.ground_truth, 2u);
  EXPECT_EQ(prof.budgets[0].count, 2u);
  EXPECT_DOUBLE_EQ(prof.budgets[0].true_positive, 0.5);
  EXPECT_DOUBLE_EQ(prof.budgets[0].localization, 0.5);
  EXPECT_EQ(prof.budgets[1].count, 4u);
  EXPECT_DOUBLE_EQ(prof.budgets[1].true_positive, 0.5);
  EXPECT_DOUBLE_EQ(prof.budgets[1].localization, 0.25);
  EXPECT_DOUBLE_EQ(prof.budgets[1].background, 0.25);
  for (std::size_t n = 2; n < 10; ++n) {
    EXPECT_EQ(prof.budgets[n].count, 6u);
    EXPECT_NEAR(prof.budgets[n].true_positive, 1.0 / 3, 1e-15);
    EXPECT_NEAR(prof.budgets[n].background, 1.0 / 3, 1e-15);
  }
}

TEST(FpProfile, ExactMatchesAreAllTruePositive) {
  const AnnotationSet gt = fp_fixture_gt();
  const PredictionSet p{{"v", {{"a", 0.9, 0, 10}, {"b", 0.8, 20, 30}}}};
  for (const auto& b : fp_profile(p, gt, 0.5).budgets) EXPECT_EQ(b.true_positive, 1.0);
}

TEST(FpProfile, LowOverlapIsBackground) {
  const AnnotationSet gt = single_gt(0, 10);
  const PredictionSet p{{"v", {{"a", 0.9, 9.5, 19.5}}}};
  ASSERT_LT(tiou(9.5, 19.5, 0, 10), 0.1);
  EXPECT_EQ(fp_profile(p, gt, 0.5).budgets[0].background, 1.0);
  EXPECT_THROW(fp_profile(p, AnnotationSet{}, 0.5), ValidationError);
}

TEST(FpProfile, FractionsSumToOneAndTruePositivesGrow) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 300; ++rep) {
    const auto m = oracle::random_micro_instance(rng);
    const FpProfile prof = fp_profile(m.preds, m.gt, 0.5);
    for (const auto& b : prof.budgets) {
      if (b.count == 0) continue;
      EXPECT_NEAR(b.true_positive + b.localization + b.background, 1.0, 1e-9);
    }
    const auto& first = prof.budgets.front();
    const auto& last = prof.budgets.back();
    EXPECT_GE(std::llround(last.true_positive * last.count), std::llround(first.true_positive * first.count));
  }
}

TEST(FpProfile, JsonAndCsv) {
  const FpProfile prof = fp_profile(fp_fixture_preds(), fp_fixture_gt(), 0.5, 3);
  const auto j = prof.to_json();
  ASSERT_EQ(j.at("budgets").size(), 3u);
  EXPECT_EQ(j.at("budgets")[0].at("budget"), "1G");
  const std::string csv = prof.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "budget,count,true_positive,localization_error,background_error");
  EXPECT_NE(csv.find("\n1G,2,0.5,0.5,0\n"), std::string::npos);
}

// Similarity ----------------------------------------------------------------

TEST(CosineSimilarity, DiagonalSymmetryAndSpotEntries) {
  std::mt19937_64 rng(14);
  Matrix e = testing::random_matrix(12, 5, rng);
  for (std::size_t c = 0; c < 5; ++c) e(7, c) = 0.0;
  const Matrix s = cosine_similarity(e);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(s(i, i), i == 7 ? 0.0 : 1.0);
    for (std::size_t j = 0; j < 12; ++j) {
      EXPECT_EQ(s(i, j), s(j, i));
      EXPECT_LE(std::abs(s(i, j)), 1.0 + 1e-12);
    }
  }
  for (auto [i, j] : {std::pair<std::size_t, std::size_t>{0, 3}, {4, 11}, {2, 9}}) {
    double dot = 0, ni = 0, nj = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      dot += e(i, c) * e(j, c);
      ni += e(i, c) * e(i, c);
      nj += e(j, c) * e(j, c);
    }
    EXPECT_NEAR(s(i, j), dot / std::sqrt(ni * nj), 1e-14);
  }
}

}  // namespace
}  // namespace tags
