#include <gtest/gtest.h>

#include "sprig/skelgeom.hpp"
#include "test_util.hpp"

using namespace sprig;

namespace {

EdgeGeometry edges_from_vectors(const std::vector<Vec3>& v) {
  Skeleton s;
  s.joints.push_back(Vec3::Zero());
  s.parents.push_back(0);
  for (const auto& d : v) {
    s.joints.push_back(d);
    s.parents.push_back(1);
  }
  return edge_geometry(s);
}

double brute_chamfer_sq(const Points& a, const Points& b) {
  double ab = 0, ba = 0;
  for (const auto& p : a) {
    double m = 1e300;
    for (const auto& q : b) m = std::min(m, (p - q).squaredNorm());
    ab += m;
  }
  for (const auto& q : b) {
    double m = 1e300;
    for (const auto& p : a) m = std::min(m, (p - q).squaredNorm());
    ba += m;
  }
  return 0.5 * (ab / a.size() + ba / b.size());
}

}  // namespace

TEST(TopRho, FullRhoKeepsAllUnitVectors) {
  const auto g = edges_from_vectors({Vec3(3, 0, 0), Vec3(0, 2, 0), Vec3(0, 0, 1)});
  const auto t = top_rho_edges(g, 1.0);
  ASSERT_EQ(t.size(), 3u);
  for (const auto& v : t.vectors) EXPECT_NEAR(v.norm(), 1.0, 1e-15);
}

TEST(TopRho, HalfKeepsTwoLongest) {
  const auto g = edges_from_vectors({Vec3(1, 0, 0), Vec3(0, 3, 0), Vec3(0, 0, 2)});
  const auto t = top_rho_edges(g, 0.5);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.edges[0], (Edge{0, 2}));
  EXPECT_EQ(t.edges[1], (Edge{0, 3}));
}

TEST(TopRho, EqualLengthsUseIndexTieBreak) {
  const auto g = edges_from_vectors({Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)});
  const auto t = top_rho_edges(g, 0.34);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.edges[0], (Edge{0, 1}));
  EXPECT_EQ(t.edges[1], (Edge{0, 2}));
}

TEST(TopRho, EmptyThrows) {
  try {
    top_rho_edges(EdgeGeometry{}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_edges);
  }
}

TEST(DirectionalLoss, HandCases) {
  const auto x = top_rho_edges(edges_from_vectors({Vec3(1, 0, 0)}), 1.0);
  const auto y = top_rho_edges(edges_from_vectors({Vec3(0, 1, 0)}), 1.0);
  const auto mx = top_rho_edges(edges_from_vectors({Vec3(-1, 0, 0)}), 1.0);
  EXPECT_NEAR(directional_loss(x, x, Mat3::Identity()), 0.0, 1e-15);
  EXPECT_NEAR(directional_loss(x, y, Mat3::Identity()), 1.0, 1e-15);
  EXPECT_NEAR(directional_loss(x, mx, Mat3::Identity()), 2.0, 1e-15);
}

TEST(DirectionalLoss, SwapWithTransposeIsSymmetric) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = top_rho_edges(edge_geometry(testutil::random_skeleton(g, 6)), 1.0);
    const auto b = top_rho_edges(edge_geometry(testutil::random_skeleton(g, 8)), 1.0);
    const Mat3 r = testutil::random_rotation(g);
    const double d = directional_loss(a, b, r);
    EXPECT_NEAR(d, directional_loss(b, a, r.transpose()), 1e-9);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}

TEST(LengthLoss, HandCases) {
  const auto a = edges_from_vectors({Vec3(1, 0, 0), Vec3(0, 2, 0)});
  const auto b = edges_from_vectors({Vec3(2, 0, 0), Vec3(0, 1, 0)});
  const auto c = edges_from_vectors({Vec3(1, 0, 0), Vec3(0, 3, 0)});
  EXPECT_EQ(length_loss(a, a), 0.0);
  EXPECT_EQ(length_loss(a, b), 0.0);
  EXPECT_NEAR(length_loss(a, c), 0.5, 1e-15);
}

TEST(EndpointChamfer, HandCasesAndOracle) {
  EXPECT_EQ(endpoint_chamfer({Vec3::Zero()}, {Vec3(1, 0, 0)}, RigidTransform::identity()), 1.0);
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 30; ++trial) {
    Points a, b;
    for (int i = 0; i < 5 + trial % 7; ++i) a.push_back(testutil::random_vec(g));
    for (int i = 0; i < 3 + trial % 5; ++i) b.push_back(testutil::random_vec(g));
    RigidTransform t{testutil::random_rotation(g), testutil::random_vec(g)};
    EXPECT_EQ(endpoint_chamfer(a, b, t), brute_chamfer_sq(t.apply(a), b));
    EXPECT_EQ(endpoint_chamfer(a, t.apply(a), t), 0.0);
  }
  try {
    endpoint_chamfer({}, {Vec3::Zero()}, RigidTransform::identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_set);
  }
}

TEST(GeomLoss, RigidFramesGiveNearZero) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = testutil::random_skeleton(g, 5 + trial % 8);
    std::vector<Skeleton> frames;
    for (int k = 0; k < 3; ++k)
      frames.push_back(testutil::transformed(s, testutil::random_rotation(g), testutil::random_vec(g, -1, 1)));
    EXPECT_LE(geom_loss(s, frames).total, 1e-6);
  }
}

TEST(GeomLoss, AnchorCopyIsZeroAndChamferOnlyWeights) {
  std::mt19937_64 g(4);
  const auto s = testutil::random_skeleton(g, 7);
  EXPECT_LE(geom_loss(s, {s}).total, 1e-12);
  auto f = s;
  for (auto& p : f.joints) p += testutil::random_vec(g, -0.05, 0.05);
  GeomLossConfig cfg;
  cfg.lambda_dir = cfg.lambda_len = 0.0;
  const auto l = geom_loss(s, {f, s}, cfg);
  EXPECT_NEAR(l.total, 0.5 * (l.per_frame[0].ch + l.per_frame[1].ch), 1e-15);
}

TEST(GeomLoss, PermutationInvariance) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testutil::random_skeleton(g, 4 + trial % 9);
    auto f = s;
    for (auto& p : f.joints) p += testutil::random_vec(g, -0.05, 0.05);
    const auto base = geom_loss(s, {f});
    const auto pi = testutil::random_perm(g, s.size());
    const auto perm = geom_loss(testutil::relabel(s, pi), {testutil::relabel(f, pi)});
    EXPECT_NEAR(base.per_frame[0].dir, perm.per_frame[0].dir, 1e-9);
    EXPECT_NEAR(base.per_frame[0].len, perm.per_frame[0].len, 1e-9);
    EXPECT_NEAR(base.per_frame[0].ch, perm.per_frame[0].ch, 1e-9);
  }
}

TEST(GeomLoss, DegenerateFrameGetsFlaggedFinitePenalty) {
  std::mt19937_64 g(6);
  const auto s = testutil::random_skeleton(g, 5);
  Skeleton roots{{Vec3::Zero(), Vec3(1, 0, 0)}, {0, 0}};
  const auto l = geom_loss(s, {roots});
  EXPECT_TRUE(l.per_frame[0].degenerate_frame);
  EXPECT_EQ(l.per_frame[0].dir, 2.0);
  EXPECT_TRUE(std::isfinite(l.total));
}

TEST(GeomLoss, KabschOnlyWhenOptedInAndCountsMatch) {
  std::mt19937_64 g(7);
  const auto s = testutil::random_skeleton(g, 6);
  GeomLossConfig cfg;
  cfg.alignment = AlignmentMode::kabsch;
  const auto rigid = testutil::transformed(s, testutil::random_rotation(g), Vec3(0.2, 0, 0));
  const auto l = geom_loss(s, {rigid, testutil::random_skeleton(g, 4)}, cfg);
  EXPECT_TRUE(l.per_frame[0].used_kabsch);
  EXPECT_FALSE(l.per_frame[1].used_kabsch);
  EXPECT_LE(l.per_frame[0].total, 1e-12);
  EXPECT_FALSE(geom_loss(s, {rigid}).per_frame[0].used_kabsch);
}
