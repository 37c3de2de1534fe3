#include <gtest/gtest.h>

#include <sstream>

#include "sprig/skeltoken.hpp"
#include "test_util.hpp"

using namespace sprig;

namespace {

// Linear scan over bin edges [-0.5 + b/n, -0.5 + (b+1)/n).
int bin_search_token(double c, int n) {
  if (c < -0.5) return 1;
  for (int b = 0; b < n; ++b)
    if (c < -0.5 + static_cast<double>(b + 1) / n) return b + 1;
  return n;
}

std::vector<double> scores_with(int vocab, int hot, double value) {
  std::vector<double> s(static_cast<std::size_t>(vocab), 0.0);
  s[static_cast<std::size_t>(hot)] = value;
  return s;
}

// Dense logits whose CE at each slot is exactly the requested value:
// two-class scores [log(e^ce - 1), 0] with target class 1.
SlotLogits two_class_logits(const std::vector<double>& ce) {
  std::vector<std::vector<double>> s;
  for (double c : ce) s.push_back({std::log(std::exp(c) - 1.0), 0.0});
  return SlotLogits::dense(s);
}

}  // namespace

TEST(Tokenize, LowerBoundMapsToFirstToken) { EXPECT_EQ(coordinate_token(-0.5, 256), 1); }

TEST(Tokenize, UpperBoundIsClamped) { EXPECT_EQ(coordinate_token(0.5, 256), 256); }

TEST(Tokenize, OriginWithTwoBins) {
  Skeleton s{{Vec3::Zero()}, {0}};
  const auto t = tokenize(s, 2);
  EXPECT_EQ(t.quads[0], (std::array<int, 4>{2, 2, 2, 0}));
}

TEST(Tokenize, MatchesBinSearchOracle) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int n : {2, 3, 7, 256}) {
    for (int i = 0; i < 2000; ++i) {
      const double c = u(g);
      EXPECT_EQ(coordinate_token(c, n), bin_search_token(c, n)) << c << " " << n;
    }
  }
}

TEST(Tokenize, NonFiniteCoordinateThrows) {
  Skeleton s{{Vec3(0, std::nan(""), 0)}, {0}};
  try {
    tokenize(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::nonfinite_coordinate);
  }
}

TEST(Detokenize, BinCenter) { EXPECT_DOUBLE_EQ(token_coordinate(129, 256), 0.001953125); }

TEST(Detokenize, RoundTripWithinHalfBin) {
  std::mt19937_64 g(2);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testutil::random_skeleton(g, 1 + trial % 20);
    Skeleton clamped = s;
    for (auto& p : clamped.joints) p = p.cwiseMax(Vec3::Constant(-0.5)).cwiseMin(Vec3::Constant(0.5));
    const auto back = detokenize(tokenize(clamped, 256));
    EXPECT_EQ(back.parents, clamped.parents);
    for (std::size_t j = 0; j < clamped.size(); ++j)
      worst = std::max(worst, (back.joints[j] - clamped.joints[j]).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 0.001953125);
}

TEST(Detokenize, OutOfRangeTokensThrow) {
  TokenSequence t;
  t.n_disc = 4;
  t.quads = {{5, 1, 1, 0}};
  try {
    detokenize(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::token_out_of_range);
  }
  t.quads = {{1, 1, 1, 2}};
  try {
    detokenize(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parent_index_out_of_range);
  }
}

TEST(WeightedCe, UniformLogitsGiveLogVocab) {
  TokenSequence t;
  t.n_disc = 4;
  t.quads = {{1, 2, 3, 2}, {4, 4, 1, 0}, {2, 2, 2, 1}};  // J = 3: parent vocab 4
  std::vector<std::vector<double>> s(12, std::vector<double>(4, 0.7));
  EXPECT_NEAR(weighted_ce(SlotLogits::dense(s), t, 3.0), std::log(4.0), 1e-9);
}

TEST(WeightedCe, ConfidentCorrectLogitsGiveNearZero) {
  TokenSequence t;
  t.n_disc = 8;
  t.quads = {{3, 5, 8, 0}};
  std::vector<std::vector<double>> s;
  for (std::size_t i = 0; i < 4; ++i) s.push_back(scores_with(t.vocab_at(i), t.class_at(i), 30.0));
  EXPECT_LE(weighted_ce(SlotLogits::dense(s), t), 1e-9);
}

TEST(WeightedCe, ParentWeightHandCase) {
  TokenSequence t;
  t.n_disc = 2;
  t.quads = {{2, 2, 2, 1}};  // J = 1: parent vocab 2, class 1
  EXPECT_NEAR(weighted_ce(two_class_logits({1, 1, 1, 2}), t, 3.0), 1.5, 1e-9);
}

TEST(WeightedCe, AlphaOneIsPlainMean) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> n;
  TokenSequence t;
  t.n_disc = 5;
  t.quads = {{1, 5, 3, 0}, {2, 2, 4, 1}};
  std::vector<std::vector<double>> s;
  double plain = 0;
  for (std::size_t i = 0; i < t.length(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(t.vocab_at(i)));
    for (auto& v : row) v = n(g);
    double z = 0;
    for (double v : row) z += std::exp(v);
    plain += std::log(z) - row[static_cast<std::size_t>(t.class_at(i))];
    s.push_back(row);
  }
  EXPECT_NEAR(weighted_ce(SlotLogits::dense(s), t, 1.0), plain / 8.0, 1e-12);
}

TEST(WeightedCe, ShiftInvarianceAndMonotonicity) {
  std::mt19937_64 g(4);
  std::normal_distribution<double> n;
  TokenSequence t;
  t.n_disc = 6;
  t.quads = {{1, 6, 3, 0}, {2, 2, 4, 1}, {5, 1, 1, 2}};
  std::vector<std::vector<double>> s;
  for (std::size_t i = 0; i < t.length(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(t.vocab_at(i)));
    for (auto& v : row) v = n(g);
    s.push_back(row);
  }
  const double base = weighted_ce(SlotLogits::dense(s), t);
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto shifted = s;
    for (auto& v : shifted[i]) v += 17.25;
    EXPECT_NEAR(weighted_ce(SlotLogits::dense(shifted), t), base, 1e-9);
    auto raised = s;
    raised[i][static_cast<std::size_t>(t.class_at(i))] += 0.1;
    EXPECT_LT(weighted_ce(SlotLogits::dense(raised), t), base);
  }
}

TEST(WeightedCe, ErrorsAreReported) {
  TokenSequence t;
  t.n_disc = 4;
  t.quads = {{1, 1, 1, 0}};
  std::vector<std::vector<double>> s(4, std::vector<double>(4, 0.0));
  try {
    weighted_ce(SlotLogits::dense(s), t);  // parent slot expects vocab 2
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::vocab_mismatch);
  }
  SlotLogits empty;
  empty.scores = s;
  try {
    weighted_ce(empty, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_position_set);
  }
}

TEST(TokenLoss, Compositions) {
  TokenSequence t;
  t.n_disc = 2;
  t.quads = {{1, 2, 1, 1}};
  std::vector<std::vector<double>> uniform(4, std::vector<double>(2, 0.0));
  std::vector<std::vector<double>> hot;
  for (std::size_t i = 0; i < 4; ++i) hot.push_back(scores_with(2, t.class_at(i), 40.0));
  EXPECT_LE(token_loss(SlotLogits::dense(hot), {SlotLogits::dense(hot)}, t).total, 1e-12);
  const auto u = token_loss(SlotLogits::dense(uniform), {SlotLogits::dense(uniform)}, t);
  EXPECT_NEAR(u.total, 2.0 * std::log(2.0), 1e-12);
  TokenLossWeights w;
  w.lambda_anchor = 0.7;
  const auto a = token_loss(SlotLogits::dense(uniform), {}, t, w);
  EXPECT_EQ(a.sym_term, 0.0);
  EXPECT_NEAR(a.total, 0.7 * a.anchor_term, 1e-15);
}

TEST(LogitsFile, RoundTripsAsFloat32) {
  std::vector<std::vector<double>> s = {{0.5, -1.25, 3.0}, {2.0, 0.0}};
  std::stringstream ss;
  write_logits(ss, SlotLogits::dense(s));
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "SPRL");
  EXPECT_EQ(bytes.size(), 4u + 4u + (4u + 12u) + (4u + 8u));
  const auto back = read_logits(ss);
  EXPECT_EQ(back.scores, s);
  EXPECT_EQ(back.positions.size(), 2u);
}
