#include <gtest/gtest.h>

#include "skin_fixtures.hpp"
#include "sprig/skinloss.hpp"
#include "sprig/synthgen.hpp"

using namespace sprig;
using testutil::random_mask;
using testutil::random_stochastic;

namespace {

MatX row(std::initializer_list<double> v) {
  MatX m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index c = 0;
  for (double x : v) m(0, c++) = x;
  return m;
}

MaskedTeacher teacher_of(const MatX& w, const MatX& m) {
  MaskedTeacher t;
  t.weights = w;
  t.mask = m;
  t.valid.assign(static_cast<std::size_t>(w.cols()), true);
  return t;
}

}  // namespace

TEST(SymKl, HandCases) {
  const MatX full = MatX::Ones(1, 2);
  EXPECT_NEAR(sym_kl(row({0.75, 0.25}), row({0.25, 0.75}), full), std::log(3.0) / 2.0, 1e-12);
  EXPECT_NEAR(std::log(3.0) / 2.0, 0.549306, 1e-6);
  const MatX p = row({0.3, 0.7});
  EXPECT_LE(sym_kl(p, p, full), 1e-9);
  EXPECT_TRUE(std::isfinite(sym_kl(row({1.0, 0.0}), row({0.5, 0.5}), full)));
}

TEST(MaskedL1, HandCase) {
  EXPECT_NEAR(masked_l1(row({0.5, 0.1}), row({0.3, 0.1}), row({1, 0})), 0.2, 1e-15);
  EXPECT_EQ(masked_l1(row({0.5, 0.5}), row({0.5, 0.5}), row({1, 1})), 0.0);
}

TEST(MaskedEntropy, HandCasesAndConcentration) {
  EXPECT_NEAR(masked_entropy(row({0.25, 0.25, 0.25, 0.25}), MatX::Ones(1, 4)), std::log(4.0) / 4.0, 1e-12);
  EXPECT_NEAR(masked_entropy(row({1, 0, 0, 0}), MatX::Ones(1, 4)), 0.0, 1e-15);
  double prev = 1e300;
  for (double a = 0.25; a <= 1.0; a += 0.05) {
    const double b = (1 - a) / 3;
    const double h = masked_entropy(row({a, b, b, b}), MatX::Ones(1, 4));
    EXPECT_LT(h, prev);
    prev = h;
  }
}

TEST(LossTerms, MatchNestedLoopOracles) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 8, j = 1 + (trial / 8) % 8;
    const auto p = random_stochastic(g, n, j);
    const auto q = random_stochastic(g, n, j);
    const auto m = random_mask(g, n, j, trial % 2 ? 0.0 : 0.2);
    const double eps = kMaskEpsilon;
    EXPECT_NEAR(sym_kl(p, q, m), oracle::symkl(p, q, m, eps), 1e-10);
    EXPECT_NEAR(sym_kl(p, q, m), sym_kl(q, p, m), 1e-12);
    EXPECT_GE(sym_kl(p, q, m), 0.0);
    EXPECT_NEAR(masked_l1(p, q, m), oracle::l1(p, q, m), 1e-10);
    EXPECT_NEAR(masked_entropy(p, m), oracle::entropy(p, m, eps), 1e-10);
    EXPECT_NEAR(masked_kl(p, q, m), oracle::kl(p, q, m, eps), 1e-10);
  }
}

TEST(TotalLoss, MatchesOracleAndWarmup) {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8, j = 2 + (trial / 8) % 7, frames = 1 + trial % 4;
    std::vector<MatX> preds;
    for (int k = 0; k < frames; ++k) preds.push_back(random_stochastic(g, n, j));
    const auto w = random_stochastic(g, n, j);
    const auto m = random_mask(g, n, j, 0.0);
    const auto prior = random_stochastic(g, n, j);
    SkinLossWeights sw;
    const int epoch = trial % 8;
    const auto got = skin_total_loss(preds, teacher_of(w, m), prior, sw, epoch);
    const double want = oracle::total(preds, w, m, prior, {1.0, 1.0, 0.25, 0.02, 0.1, 0}, epoch, 5, kMaskEpsilon);
    EXPECT_NEAR(got.total, want, 1e-10 * std::max(1.0, std::abs(want)));
    EXPECT_EQ(got.prior_weight, 0.1 * std::min(1.0, epoch / 5.0));
    if (frames == 1) {
      EXPECT_EQ(got.sym, 0.0);
      EXPECT_EQ(got.l1, 0.0);
    }
  }
}

TEST(TotalLoss, EpochZeroDropsPrior) {
  std::mt19937_64 g(3);
  const auto w = random_stochastic(g, 4, 3);
  const auto m = MatX::Ones(4, 3);
  SkinLossWeights sw;
  const auto a = skin_total_loss({w, random_stochastic(g, 4, 3)}, teacher_of(w, m), random_stochastic(g, 4, 3), sw, 0);
  EXPECT_EQ(a.prior_weight, 0.0);
  EXPECT_NEAR(a.total, a.sym + a.l1 + 0.25 * a.anchor + 0.02 * a.ent, 1e-12);
}

TEST(TotalLoss, ConsistentConfigurationIsZero) {
  MatX w(3, 3);
  w << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const auto m = build_mask(w, {true, true, true}, 1, 0.0);
  const auto b = skin_total_loss({w, w, w}, teacher_of(w, m), w, SkinLossWeights{}, 10);
  EXPECT_LE(b.total, 1e-6);
  EXPECT_GE(b.total, 0.0);
}

TEST(TotalLoss, MaskedOutEntriesDoNotMatter) {
  std::mt19937_64 g(4);
  const int n = 5, j = 4;
  const auto w = random_stochastic(g, n, j);
  const auto m = build_mask(w, std::vector<bool>(j, true), 2, 0.0);
  std::vector<MatX> preds{random_stochastic(g, n, j), random_stochastic(g, n, j)};
  const auto prior = random_stochastic(g, n, j);
  const double base = skin_total_loss(preds, teacher_of(w, m), prior, SkinLossWeights{}, 3).total;
  auto preds2 = preds;
  auto prior2 = prior;
  auto w2 = w;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < j; ++c)
      if (m(i, c) == 0.0) {
        preds2[0](i, c) += 0.3;
        preds2[1](i, c) *= 5;
        prior2(i, c) = 0.9;
        w2(i, c) = 0.7;
      }
  EXPECT_NEAR(skin_total_loss(preds2, teacher_of(w2, m), prior2, SkinLossWeights{}, 3).total, base, 1e-12);
}

TEST(GeometricPrior, HandCases) {
  SurfaceSamples s;
  s.faces = {0, 0};
  s.bary = {Bary{1, 0, 0}, Bary{1, 0, 0}};
  s.positions = {{Vec3(0, 1, 0), Vec3(5, 5, 5)}};
  s.normals = {{Vec3::UnitZ(), Vec3::UnitZ()}};
  s.degenerate = {{false, false}};
  Skeleton sk{{Vec3(-1, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 0)}, {0, 0, 1}};
  // Joint 0 and joint 1 are point bones at (-1,0,0) and (1,0,0); joint 2 is the segment to joint 0.
  const auto only = geometric_prior(s, sk, {false, true, false}, 15.0);
  EXPECT_EQ(only.col(1), Eigen::VectorXd::Ones(2));
  const auto two = geometric_prior(s, sk, {true, true, false}, 15.0);
  EXPECT_NEAR(two(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(two(0, 1), 0.5, 1e-15);
  try {
    geometric_prior(s, sk, {false, false, false}, 15.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_valid_bones);
  }
}

TEST(GeometricPrior, LargeBetaPicksNearestBone) {
  const auto clip = generate_clip(demo_config(3));
  const auto s = sample_surface(clip, 200, 3);
  const auto valid = clip.valid_or_all();
  for (double beta : {15.0, 50.0, 150.0}) {
    const auto p = geometric_prior(s, clip.anchor(), valid, beta, {0});
    for (int i = 0; i < p.rows(); ++i) {
      EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
      double best = 1e300;
      int arg = -1;
      for (std::size_t j = 0; j < valid.size(); ++j) {
        const auto [a, b] = joint_bone(clip.anchor(), j);
        const double d = point_to_segment(s.positions[0][i], a, b);
        if (d < best) best = d, arg = static_cast<int>(j);
      }
      Eigen::Index am;
      p.row(i).maxCoeff(&am);
      EXPECT_EQ(am, arg);
    }
  }
}

TEST(Predict, ZeroHeadIsUniformOverValidJoints) {
  auto m = ToyModelParams::make(4, 8, {true, false, true, true}, 1);
  const auto p = predict(m, MatX::Random(5, 6));
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(p(i, 1), 0.0);
    EXPECT_NEAR(p(i, 0), 1.0 / 3.0, 1e-15);
  }
  auto one = ToyModelParams::make(3, 8, {false, true, false}, 2);
  one.head.setRandom();
  EXPECT_EQ(predict(one, MatX::Random(4, 6)).col(1), Eigen::VectorXd::Ones(4));
}

TEST(Predict, RowStochasticAndPermutationEquivariant) {
  std::mt19937_64 g(5);
  auto m = ToyModelParams::make(5, 16, {true, true, false, true, true}, 3);
  m.head = MatX::Random(5, 16) * 3;
  const MatX q = MatX::Random(20, 6);
  const auto p = predict(m, q);
  for (int i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
  std::vector<int> perm{3, 0, 4, 1, 2};
  auto pm = m;
  for (int j = 0; j < 5; ++j) {
    pm.head.row(perm[j]) = m.head.row(j);
    pm.valid[perm[j]] = m.valid[j];
  }
  const auto pp = predict(pm, q);
  for (int j = 0; j < 5; ++j) EXPECT_LE((pp.col(perm[j]) - p.col(j)).cwiseAbs().maxCoeff(), 1e-12);
  try {
    predict(m, MatX::Random(3, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = testutil::random_skin_instance(g, 5, 3, 8, 3, trial % 2 ? 0.0 : 0.1);
    s.batch.epoch = trial % 3 == 0 ? 2 : 7;  // warmup ramping and saturated
    EXPECT_LE(testutil::gradient_check(s), 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, LossBreakdownEqualsForwardLoss) {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = testutil::random_skin_instance(g, 70 + trial * 13, 5, 8, 1 + trial % 3, 0.0, {true, true, false, true, true});
    s.batch.epoch = trial;
    const auto grad = skin_loss_gradient(s.model, s.batch, 1 + trial % 4);
    const auto fwd = skin_total_loss(testutil::predict_all(s.model, s.batch.queries), s.batch.teacher, s.batch.prior_avg,
                                     s.batch.weights, s.batch.epoch);
    EXPECT_NEAR(grad.loss.total, fwd.total, 1e-9 * std::max(1.0, fwd.total));
    EXPECT_NEAR(grad.loss.sym, fwd.sym, 1e-9 * std::max(1.0, fwd.sym));
    EXPECT_NEAR(grad.loss.prior, fwd.prior, 1e-9 * std::max(1.0, fwd.prior));
    EXPECT_EQ(grad.d_head.col(0)(2), 0.0);
  }
}

TEST(Gradient, ThreadCountDoesNotChangeBits) {
  std::mt19937_64 g(8);
  auto s = testutil::random_skin_instance(g, 300, 4, 8, 3, 0.0);
  s.batch.epoch = 9;
  const auto a = skin_loss_gradient(s.model, s.batch, 1);
  for (int t : {2, 3, 8}) {
    const auto b = skin_loss_gradient(s.model, s.batch, t);
    EXPECT_TRUE((a.d_head.array() == b.d_head.array()).all());
    EXPECT_EQ(a.loss.total, b.loss.total);
  }
}

TEST(Gradient, StationaryWhenPredictionIsTeacherAndPrior) {
  std::mt19937_64 g(9);
  auto s = testutil::random_skin_instance(g, 6, 3, 8, 1, 0.0);
  s.batch.queries = {s.batch.queries[0], s.batch.queries[0], s.batch.queries[0]};
  const auto w = predict(s.model, s.batch.queries[0]);
  s.batch.teacher = teacher_of(w, MatX::Ones(6, 3));
  s.batch.prior_avg = w;
  s.batch.weights.lambda_ent = 0.0;
  s.batch.epoch = 10;
  EXPECT_LE(skin_loss_gradient(s.model, s.batch).d_head.norm(), 1e-6);
}

TEST(Gradient, ScalesLinearlyWithWeights) {
  std::mt19937_64 g(10);
  auto s = testutil::random_skin_instance(g, 7, 3, 8, 2, 0.0);
  s.batch.epoch = 6;
  const auto base = skin_loss_gradient(s.model, s.batch).d_head;
  for (double* l : {&s.batch.weights.lambda_sym, &s.batch.weights.lambda_1, &s.batch.weights.lambda_anchor,
                    &s.batch.weights.lambda_ent, &s.batch.weights.lambda_prior})
    *l *= 2.5;
  EXPECT_LE((skin_loss_gradient(s.model, s.batch).d_head - 2.5 * base).cwiseAbs().maxCoeff(), 1e-9 * base.norm());
}
