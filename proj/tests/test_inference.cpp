#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "support.hpp"
#include "tags/inference.hpp"
#include "tags/labels.hpp"
#include "tags/synthetic.hpp"

namespace tags {
namespace {

// probs (K+1) x T with every column confidently background.
Matrix background_probs(std::size_t K, std::size_t T) {
  Matrix p(K + 1, T, 0.05 / static_cast<double>(K));
  for (std::size_t t = 0; t < T; ++t) p(K, t) = 0.95;
  return p;
}

Candidate make_candidate(double a, double b, double score) {
  Candidate c;
  c.video_id = "v";
  c.start_s = a;
  c.end_s = b;
  c.score = score;
  return c;
}

TEST(DecodeCandidates, HandExample) {
  ScaleOutputs out;
  out.scale = 1;
  out.probs = background_probs(2, 4);
  out.probs(0, 1) = 0.8;
  out.probs(1, 1) = 0.1;
  out.probs(2, 1) = 0.1;
  out.masks = Matrix(4, 4, 0.1);
  const double col[4] = {0.2, 0.9, 0.9, 0.2};
  for (std::size_t r = 0; r < 4; ++r) out.masks(r, 1) = col[r];
  const auto c = decode_candidates(out, {0.5}, 0.3, VideoMeta{"v", 4.0, 4});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].snippet, 1u);
  EXPECT_EQ(c[0].label, 0u);
  EXPECT_NEAR(c[0].score, 0.72, 1e-9);
  EXPECT_DOUBLE_EQ(c[0].start_s, 1.0);
  EXPECT_DOUBLE_EQ(c[0].end_s, 3.0);
  EXPECT_EQ(c[0].threshold, 0.5);
}

TEST(DecodeCandidates, ColumnBelowAllThresholdsYieldsNothing) {
  ScaleOutputs out;
  out.probs = background_probs(3, 6);
  for (std::size_t k = 0; k < 4; ++k) out.probs(k, 2) = k == 1 ? 0.9 : 0.1 / 3;
  out.masks = Matrix(6, 6, 0.05);
  EXPECT_TRUE(decode_candidates(out, default_thresholds(), 0.3, VideoMeta{"v", 6.0, 6}).empty());
}

TEST(DecodeCandidates, SnippetOutsideItsOwnRunIsSkipped) {
  ScaleOutputs out;
  out.probs = background_probs(1, 5);
  out.probs(0, 0) = 0.9;
  out.probs(1, 0) = 0.1;
  out.masks = Matrix(5, 5, 0.0);
  out.masks(3, 0) = out.masks(4, 0) = 0.95;
  EXPECT_TRUE(decode_candidates(out, {0.5}, 0.3, VideoMeta{"v", 5.0, 5}).empty());
}

TEST(DecodeCandidates, IdenticalColumnsGiveIdenticalRuns) {
  const std::size_t T = 8;
  ScaleOutputs out;
  out.probs = Matrix(3, T, 0.0);
  for (std::size_t t = 0; t < T; ++t) out.probs(1, t) = 1.0;
  out.masks = Matrix(T, T, 0.0);
  const double values[4] = {0.6, 0.65, 0.75, 0.8};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t r = 2; r < 6; ++r) out.masks(r, t) = values[r - 2];
  const std::vector<double> thetas{0.5, 0.7};
  const auto c = decode_candidates(out, thetas, 0.3, VideoMeta{"v", 8.0, T});
  // snippets 2..5 contain their run at 0.5; at 0.7 the run is 4..5
  ASSERT_EQ(c.size(), 4u + 2u);
  for (const auto& x : c) {
    if (x.threshold == 0.5) {
      EXPECT_EQ(std::make_pair(x.start_s, x.end_s), std::make_pair(2.0, 6.0));
    } else {
      EXPECT_EQ(std::make_pair(x.start_s, x.end_s), std::make_pair(4.0, 6.0));
    }
  }
  // t-then-theta order
  for (std::size_t i = 1; i < c.size(); ++i)
    EXPECT_TRUE(std::tie(c[i - 1].snippet, c[i - 1].threshold) < std::tie(c[i].snippet, c[i].threshold));
  const auto kept = soft_nms(c, 0.5, 1e-4, 100);
  EXPECT_EQ(kept.size(), c.size());
  EXPECT_NEAR(kept[0].score, 0.775, 1e-12);
  EXPECT_EQ(std::count_if(kept.begin(), kept.end(), [](const Candidate& k) { return k.score > 0.3; }), 2);
}

TEST(DecodeCandidates, ScaleTwoMapping) {
  ScaleOutputs out;
  out.scale = 2;
  out.probs = background_probs(1, 4);
  out.probs(0, 2) = 0.9;
  out.probs(1, 2) = 0.1;
  out.masks = Matrix(4, 4, 0.0);
  out.masks(1, 2) = out.masks(2, 2) = 1.0;
  // base T=8 over 16 s: one scale-2 snippet spans 4 s
  const auto c = decode_candidates(out, {0.5}, 0.3, VideoMeta{"v", 16.0, 8});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0].start_s, 4.0);
  EXPECT_DOUBLE_EQ(c[0].end_s, 12.0);
  EXPECT_EQ(c[0].scale, 2u);
}

TEST(DecodeCandidates, TailClippedToDuration) {
  ScaleOutputs out;
  out.scale = 2;
  out.probs = background_probs(1, 3);
  out.probs(0, 2) = 0.9;
  out.probs(1, 2) = 0.1;
  out.masks = Matrix(3, 3, 0.0);
  out.masks(2, 2) = 1.0;
  const auto c = decode_candidates(out, {0.5}, 0.3, VideoMeta{"v", 5.0, 5});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0].start_s, 4.0);
  EXPECT_DOUBLE_EQ(c[0].end_s, 5.0);
}

TEST(MergeDuplicates, KeepsBestCopyInOrder) {
  Candidate a = make_candidate(1, 3, 0.4), b = make_candidate(1, 3, 0.7), c = make_candidate(1, 4, 0.5);
  Candidate d = make_candidate(1, 3, 0.9);
  d.label = 1;
  b.threshold = 0.6;
  const auto m = merge_duplicates({a, c, b, d});
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[0].score, 0.7);
  EXPECT_EQ(m[0].threshold, 0.6);
  EXPECT_EQ(m[1].score, 0.5);
  EXPECT_EQ(m[2].label, 1u);
}

TEST(SoftNms, GaussianDecayExample) {
  const auto kept = soft_nms({make_candidate(1, 3, 0.8), make_candidate(1, 3, 0.9)}, 0.5, 1e-4, 100);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].score, 0.9);
  EXPECT_NEAR(kept[1].score, 0.8 * std::exp(-2.0), 1e-9);
  EXPECT_NEAR(kept[1].score, 0.1083, 1e-4);
}

TEST(SoftNms, DisjointUnchanged) {
  const auto kept = soft_nms({make_candidate(0, 1, 0.4), make_candidate(2, 3, 0.7)}, 0.5, 1e-4, 100);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].score, 0.7);
  EXPECT_EQ(kept[1].score, 0.4);
}

TEST(SoftNms, SingleCandidateUnchanged) {
  const auto kept = soft_nms({make_candidate(0.5, 2.5, 0.3)}, 0.5, 1e-4, 100);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.3);
  EXPECT_EQ(kept[0].start_s, 0.5);
}

TEST(SoftNms, FloorAndMaxKeep) {
  std::vector<Candidate> pool;
  for (int i = 0; i < 10; ++i) pool.push_back(make_candidate(i, i + 1, 0.1 * (i + 1)));
  EXPECT_EQ(soft_nms(pool, 0.5, 1e-4, 3).size(), 3u);
  EXPECT_EQ(soft_nms(pool, 0.5, 0.35, 100).size(), 7u);
}

TEST(SoftNms, PropertyScoresNeverIncreaseAndSorted) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Candidate> pool;
    const int n = 1 + rep % 30;
    for (int i = 0; i < n; ++i) {
      const double a = 10 * u(rng);
      Candidate c = make_candidate(a, a + 0.1 + 3 * u(rng), 0.01 + 0.99 * u(rng));
      c.snippet = static_cast<std::size_t>(i);
      pool.push_back(c);
    }
    const auto kept = soft_nms(pool, 0.5, 1e-4, 100);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      EXPECT_LE(kept[i].score, pool[kept[i].snippet].score);
      EXPECT_GT(kept[i].score, 0.0);
      if (i > 0) {
        EXPECT_GE(kept[i - 1].score, kept[i].score);
      }
    }
  }
}

ScaleOutputs perfect_outputs(const ScaleTargets& g) {
  const std::size_t T = g.length(), K = g.num_classes;
  ScaleOutputs out;
  out.scale = g.scale;
  out.probs = Matrix(K + 1, T, 0.0);
  out.masks = Matrix(T, T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    out.probs(static_cast<std::size_t>(g.labels[t]), t) = 1.0;
    for (std::size_t r = 0; r < T; ++r) out.masks(r, t) = g.masks(r, t);
  }
  return out;
}

TEST(Detect, OneConfidentSnippet) {
  const std::size_t T = 12;
  ScaleOutputs out;
  out.probs = background_probs(2, T);
  out.probs(1, 5) = 0.9;
  out.probs(2, 5) = 0.05;
  out.masks = Matrix(T, T, 0.0);
  for (std::size_t r = 3; r < 8; ++r) out.masks(r, 5) = 1.0;
  const auto c = detect({out}, InferenceConfig{}, VideoMeta{"v", 24.0, T});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].label, 1u);
  EXPECT_DOUBLE_EQ(c[0].start_s, 6.0);
  EXPECT_DOUBLE_EQ(c[0].end_s, 16.0);
  EXPECT_NEAR(c[0].score, 0.9, 1e-12);
}

TEST(Detect, PerfectModelRecoversPlantedInstances) {
  SyntheticSpec spec;
  spec.num_videos = 10;
  const Dataset data = generate_synthetic(spec);
  const auto& classes = data.annotations.classes;
  for (const auto& seq : data.features) {
    const auto& ann = data.annotations.videos.at(seq.video_id);
    std::vector<ScaleOutputs> outs;
    for (std::size_t s : {1, 2}) outs.push_back(perfect_outputs(assign_targets(ann, seq.length(), s, classes)));
    const auto cands = detect(outs, InferenceConfig{}, VideoMeta{seq.video_id, seq.duration_s, seq.length()});
    for (const auto& inst : ann.instances) {
      double best = 0;
      for (const auto& c : cands)
        if (classes[c.label] == inst.label) best = std::max(best, tiou(c.start_s, c.end_s, inst.start_s, inst.end_s));
      EXPECT_GE(best, 0.9) << seq.video_id;
    }
    for (const auto& c : cands) {
      EXPECT_GE(c.start_s, 0.0);
      EXPECT_LE(c.end_s, seq.duration_s);
      EXPECT_LT(c.start_s, c.end_s);
    }
  }
}

TEST(Detect, PerClassPoolKeepsOverlappingLabels) {
  const std::size_t T = 6;
  ScaleOutputs out;
  out.probs = background_probs(2, T);
  for (std::size_t t : {1, 2}) {
    out.probs(0, t) = t == 1 ? 0.9 : 0.0;
    out.probs(1, t) = t == 2 ? 0.8 : 0.0;
    out.probs(2, t) = t == 1 ? 0.1 : 0.2;
  }
  out.masks = Matrix(T, T, 0.0);
  for (std::size_t r = 1; r < 4; ++r) out.masks(r, 1) = out.masks(r, 2) = 1.0;
  InferenceConfig agnostic;
  agnostic.thresholds = {0.5};
  InferenceConfig per_class = agnostic;
  per_class.class_agnostic = false;
  const VideoMeta meta{"v", 6.0, T};
  const auto a = detect({out}, agnostic, meta);
  const auto b = detect({out}, per_class, meta);
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_NEAR(a[1].score, 0.8 * std::exp(-2.0), 1e-12);
  EXPECT_NEAR(b[1].score, 0.8, 1e-12);
}

TEST(Detect, RandomOutputsRespectInvariants) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t T = 10 + rep % 7;
    ScaleOutputs out;
    out.probs = testing::random_matrix(4, T, rng, 0, 1);
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += out.probs(k, t);
      for (std::size_t k = 0; k < 4; ++k) out.probs(k, t) /= s;
    }
    out.masks = testing::random_matrix(T, T, rng, 0, 1);
    const double duration = 0.5 * static_cast<double>(T) + 0.3;
    const auto c = detect({out}, InferenceConfig{}, VideoMeta{"v", duration, T});
    EXPECT_LE(c.size(), 100u);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_GE(c[i].start_s, 0.0);
      EXPECT_LE(c[i].end_s, duration);
      EXPECT_LT(c[i].start_s, c[i].end_s);
      EXPECT_GT(c[i].score, 0.0);
      EXPECT_LE(c[i].score, 1.0);
      if (i > 0) {
        EXPECT_GE(c[i - 1].score, c[i].score);
      }
    }
  }
}

TEST(Detect, LabelsMapToVocabulary) {
  Candidate c = make_candidate(0, 1, 0.5);
  c.label = 1;
  const auto d = to_detections({c}, {"a", "b"});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], (Detection{"b", 0.5, 0, 1}));
  c.label = 2;
  EXPECT_THROW(to_detections({c}, {"a", "b"}), ValidationError);
}

TEST(InferenceConfig, Validation) {
  InferenceConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.thresholds = {0.5, 0.5};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = InferenceConfig{};
  cfg.nms_sigma = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

}  // namespace
}  // namespace tags
