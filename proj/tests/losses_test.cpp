// Copyright 2026 The Tempco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tempco/losses.hpp"

namespace tempco {
namespace {

EmbeddingBatch make_batch(const std::vector<std::vector<double>>& x,
                          std::vector<std::string> videos, std::vector<int> classes,
                          std::size_t num_classes = 2) {
  EmbeddingBatch b;
  b.x = Matrix::from_rows(x);
  b.video_id = std::move(videos);
  b.class_id = std::move(classes);
  b.num_classes = num_classes;
  return b;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

TEST(LossClassification, UniformLogitsGiveLogC) {
  auto b = make_batch({{0.0}, {0.0}, {0.0}}, {"a", "a", "b"}, {0, 3, 1}, 4);
  b.logits = Matrix(3, 4, 0.0);
  EXPECT_NEAR(loss_classification(b).value, std::log(4.0), 1e-12);
}

TEST(LossClassification, NearPerfectPrediction) {
  auto b = make_batch({{0.0}}, {"a"}, {1}, 2);
  b.logits = Matrix::from_rows({{0.0, 10.0}});
  EXPECT_NEAR(loss_classification(b).value, std::log1p(std::exp(-10.0)), 1e-18);
  EXPECT_NEAR(loss_classification(b).value, 4.54e-5, 1e-7);
}

TEST(LossClassification, LargeLogitsStayFinite) {
  auto b = make_batch({{0.0}, {0.0}}, {"a", "a"}, {0, 1}, 3);
  b.logits = Matrix::from_rows({{1000.0, -1000.0, 0.0}, {1000.0, -1000.0, 0.0}});
  const auto r = loss_classification(b);
  EXPECT_NEAR(r.value, 1000.0, 1e-9);  // row 0 costs ~0, row 1 costs 2000
  for (double g : r.grad_logits->values()) EXPECT_TRUE(std::isfinite(g));
}

TEST(LossClassification, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  auto b = make_batch(std::vector<std::vector<double>>(8, {0.0}),
                      {"a", "a", "a", "a", "b", "b", "b", "b"}, {0, 1, 2, 3, 4, 0, 1, 2}, 5);
  b.logits = Matrix(8, 5);
  for (double& v : b.logits->values()) v = n(rng);
  const auto analytic = loss_classification(b);
  const std::vector<double> flat(b.logits->values().begin(), b.logits->values().end());
  const auto numeric = oracle::numeric_gradient(
      flat, [&](const std::vector<double>& z) { return oracle::cross_entropy(oracle::unflatten(z, 5), b.class_id); },
      1e-5);
  EXPECT_LT(relative_error(analytic.grad_logits->values(), numeric), 1e-6);
  EXPECT_EQ(max_abs(analytic.grad_x.values()), 0.0);
}

TEST(LossClassification, Errors) {
  auto b = make_batch({{0.0}}, {"a"}, {0}, 2);
  EXPECT_THROW(loss_classification(b), ValidationError);
  b.class_id = {2};
  b.logits = Matrix(1, 2);
  EXPECT_THROW(loss_classification(b), ValidationError);
}

TEST(LossTemporal, IdenticalEmbeddingsGiveZero) {
  const auto b = make_batch({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, {"v", "v", "v"}, {0, 0, 1});
  const auto r = loss_temporal(b);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(max_abs(r.grad_x.values()), 0.0);
}

TEST(LossTemporal, TwoPointHandExample) {
  const auto b = make_batch({{0.0, 0.0}, {3.0, 4.0}}, {"v", "v"}, {0, 1});
  const auto r = loss_temporal(b);
  EXPECT_EQ(r.value, 25.0);
  EXPECT_EQ(r.components.temporal, 25.0);
  // Each anchor adds 2(x_i - x_j)/m to itself and the negation to j; two
  // anchors give 2 * (x_i - x_j) in total per row.
  EXPECT_EQ(r.grad_x(0, 0), -6.0);
  EXPECT_EQ(r.grad_x(0, 1), -8.0);
  EXPECT_EQ(r.grad_x(1, 0), 6.0);
  EXPECT_EQ(r.grad_x(1, 1), 8.0);
}

TEST(LossTemporal, SingletonGroupsContributeNothing) {
  const auto b = make_batch({{0.0}, {1.0}, {5.0}}, {"a", "b", "b"}, {0, 0, 0});
  EXPECT_DOUBLE_EQ(loss_temporal(b).value, (0.0 + 16.0 + 16.0) / 3.0);
}

TEST(LossTemporal, TieGoesToSmallestIndex) {
  // Anchor 0 is equidistant from rows 1 and 2; the subgradient uses row 1.
  const auto b = make_batch({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {"v", "v", "v"}, {0, 0, 0});
  const auto r = loss_temporal(b);
  // Anchors 1 and 2 pick each other (distance 2); anchor 0 picks row 1.
  EXPECT_DOUBLE_EQ(r.grad_x(0, 0), 2.0 * -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.grad_x(0, 1), 0.0);
}

TEST(LossTemporal, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = oracle::random_batch(rng, 12, 5, 4, false);
    const auto rows = oracle::rows_of(b.x);
    const double ref = oracle::max_pair_value(
        rows, [&](std::size_t i, std::size_t j) { return b.video_id[i] == b.video_id[j]; });
    EXPECT_NEAR(loss_temporal(b).value, ref, 1e-12 * std::max(1.0, ref));
  }
}

TEST(LossTemporal, GradientAwayFromTies) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  EmbeddingBatch b;
  do {
    b = make_batch(std::vector<std::vector<double>>(10, std::vector<double>(4)),
                   {"a", "a", "a", "b", "b", "b", "c", "c", "c", "c"}, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1});
    for (double& v : b.x.values()) v = n(rng);
  } while (temporal_margin(b) <= 1e-3);
  const auto check = check_gradient(LossKind::Temporal, b, {});
  EXPECT_EQ(check.status, CheckStatus::Pass);
  EXPECT_LT(check.max_relative_error, 1e-4);
}

TEST(LossClassConsistency, DistinctClassesGiveZero) {
  const auto b = make_batch({{0.0}, {7.0}, {-3.0}}, {"a", "a", "a"}, {0, 1, 2}, 3);
  EXPECT_EQ(loss_class_consistency(b).value, 0.0);
}

TEST(LossClassConsistency, TwoPointHandExample) {
  const auto b = make_batch({{0.0, 0.0}, {0.0, 2.0}}, {"a", "b"}, {1, 1});
  EXPECT_EQ(loss_class_consistency(b).value, 4.0);
  EXPECT_EQ(loss_temporal(b).value, 0.0);
}

TEST(LossClassConsistency, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = oracle::random_batch(rng, 12, 5, 4, false);
    const auto rows = oracle::rows_of(b.x);
    const double ref = oracle::max_pair_value(
        rows, [&](std::size_t i, std::size_t j) { return b.class_id[i] == b.class_id[j]; });
    EXPECT_NEAR(loss_class_consistency(b).value, ref, 1e-12 * std::max(1.0, ref));
  }
}

TEST(LossCombined, ZeroWeightsReduceToClassification) {
  std::mt19937_64 rng(5);
  const auto b = oracle::random_batch(rng, 10, 4, 5, true);
  const auto c = loss_combined(b, {0.0, 0.0});
  const auto ref = loss_classification(b);
  EXPECT_EQ(c.value, ref.value);
  EXPECT_EQ(*c.grad_logits, *ref.grad_logits);
  EXPECT_EQ(max_abs(c.grad_x.values()), 0.0);
}

TEST(LossCombined, DefaultWeights) {
  const LossWeights w;
  EXPECT_EQ(w.beta, 1.0);
  EXPECT_EQ(w.gamma, 0.5);
}

TEST(LossCombined, IsTheWeightedSumOfComponents) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = oracle::random_batch(rng, 12, 6, 5, true);
    const LossWeights w{0.7, 1.3};
    const auto c = loss_combined(b, w);
    const auto lt = loss_temporal(b);
    const auto le = loss_class_consistency(b);
    const auto lc = loss_classification(b);
    EXPECT_EQ(c.value, lc.value + w.beta * lt.value + w.gamma * le.value);
    EXPECT_EQ(c.components.classification, lc.value);
    EXPECT_EQ(c.components.temporal, lt.value);
    EXPECT_EQ(c.components.class_consistency, le.value);
    for (std::size_t k = 0; k < c.grad_x.values().size(); ++k) {
      EXPECT_NEAR(c.grad_x.values()[k],
                  w.beta * lt.grad_x.values()[k] + w.gamma * le.grad_x.values()[k], 1e-12);
    }
  }
}

TEST(LossCombined, SkipsClassificationWithoutLogits) {
  const auto b = make_batch({{0.0}, {2.0}}, {"a", "a"}, {0, 0});
  const auto c = loss_combined(b);
  EXPECT_EQ(c.components.classification, 0.0);
  EXPECT_FALSE(c.grad_logits);
  EXPECT_DOUBLE_EQ(c.value, 4.0 + 0.5 * 4.0);
}

TEST(LossCombined, RejectsNegativeWeights) {
  const auto b = make_batch({{0.0}, {2.0}}, {"a", "a"}, {0, 0});
  EXPECT_THROW(loss_combined(b, {-1.0, 0.5}), ValidationError);
}

TEST(PerGroupReduction, OneMaxPerVideo) {
  // Video "v" has three rows; the farthest pair is (0, 2) at 16.
  const auto b = make_batch({{0.0}, {1.0}, {4.0}, {10.0}}, {"v", "v", "v", "w"}, {0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(loss_temporal(b, PairReduction::PerGroup).value, 16.0 / 4.0);
  EXPECT_DOUBLE_EQ(loss_temporal(b, PairReduction::PerAnchor).value, (16.0 + 9.0 + 16.0) / 4.0);
  const auto check_batch = b;
  const auto r = loss_temporal(check_batch, PairReduction::PerGroup);
  EXPECT_DOUBLE_EQ(r.grad_x(0, 0), 2.0 * (0.0 - 4.0) / 4.0);
  EXPECT_DOUBLE_EQ(r.grad_x(2, 0), 2.0 * (4.0 - 0.0) / 4.0);
  EXPECT_EQ(r.grad_x(1, 0), 0.0);
}

TEST(PerGroupReduction, NeverExceedsPerAnchor) {
  std::mt19937_64 rng(30);
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = oracle::random_batch(rng, 12, 4, 4, false);
    EXPECT_LE(loss_temporal(b, PairReduction::PerGroup).value,
              loss_temporal(b, PairReduction::PerAnchor).value + 1e-12);
  }
}

TEST(GradientCheck, IdenticalEmbeddingsPass) {
  auto b = make_batch({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}, {"a", "a", "b"}, {0, 0, 1}, 2);
  b.logits = Matrix::from_rows({{0.1, 0.2}, {0.3, -0.1}, {0.0, 0.0}});
  for (auto kind : {LossKind::Classification, LossKind::Temporal, LossKind::ClassConsistency,
                    LossKind::Combined}) {
    EXPECT_EQ(check_gradient(kind, b, {}).status, CheckStatus::Pass) << to_string(kind);
  }
  EXPECT_EQ(loss_temporal(b).value, 0.0);
  EXPECT_EQ(loss_class_consistency(b).value, 0.0);
}

TEST(GradientCheck, TieIsSkippedNotFailed) {
  // Anchor 0 sits exactly between rows 1 and 2; moving it breaks the tie
  // in opposite directions, so central differences disagree with the
  // one-sided subgradient.
  const auto b = make_batch({{0.0}, {-1.0}, {1.0}}, {"v", "v", "v"}, {0, 1, 1});
  const auto check = check_gradient(LossKind::Temporal, b, {});
  EXPECT_EQ(check.tie_margin, 0.0);
  EXPECT_EQ(check.status, CheckStatus::SkippedAtTie);
}

TEST(GradientCheck, WrongGradientFails) {
  // A step this large crosses the argmax boundary, which the tie detector
  // does not excuse because the margin is wide.
  const auto b = make_batch({{0.0}, {-1.0}, {1.5}}, {"v", "v", "v"}, {0, 1, 1});
  GradientCheckOptions opt;
  opt.fd_step = 0.5;
  EXPECT_EQ(check_gradient(LossKind::Temporal, b, opt).status, CheckStatus::Fail);
}

TEST(BatchFormat, RoundTrip) {
  std::mt19937_64 rng(12);
  const auto b = oracle::random_batch(rng, 10, 4, 5, true);
  std::stringstream s;
  write_batch(s, b);
  const auto back = parse_batch(s);
  EXPECT_EQ(back.x, b.x);
  EXPECT_EQ(back.video_id, b.video_id);
  EXPECT_EQ(back.class_id, b.class_id);
  EXPECT_EQ(back.num_classes, b.num_classes);
  EXPECT_EQ(*back.logits, *b.logits);
}

TEST(BatchFormat, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_batch(in);
  };
  EXPECT_THROW(parse(""), ValidationError);
  EXPECT_THROW(parse(R"({"video_id":"a","class_id":0})"), ValidationError);
  EXPECT_THROW(parse(R"({"video_id":"a","class_id":0,"x":[1],"y":2})"), ValidationError);
  EXPECT_THROW(parse(R"({"video_id":"a","class_id":-1,"x":[1]})"), ValidationError);
  EXPECT_THROW(parse(R"({"video_id":"a","class_id":0,"x":[1]})"
                     "\n"
                     R"({"video_id":"a","class_id":0,"x":[1,2]})"),
               ValidationError);
  EXPECT_THROW(parse(R"({"video_id":"a","class_id":0,"x":[1],"logits":[0,0]})"
                     "\n"
                     R"({"video_id":"a","class_id":0,"x":[1]})"),
               ValidationError);
  EXPECT_THROW(parse(R"({"video_id":"a","class_id":2,"x":[1],"logits":[0,0]})"), ValidationError);
  const auto b = parse(R"({"video_id":"a","class_id":4,"x":[1]})");
  EXPECT_EQ(b.num_classes, 5u);
}

}  // namespace
}  // namespace tempco
