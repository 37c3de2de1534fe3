#pragma once

// Procedural articulated clips with ground truth: a rest skeleton, swing
// animation by forward kinematics, tube meshes around the bones deformed by
// linear blend skinning, and the (pose-invariant) skinning weights used.

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "sprig/rigcore.hpp"
#include "sprig/rng.hpp"
#include "sprig/skinops.hpp"

namespace sprig {

enum class Topology { chain, two_branch };

struct SynthConfig {
  int joints = 6;
  Topology topology = Topology::two_branch;
  double amplitude = 0.6;  // radians
  int frames = 3;          // K + 1
  double tube_radius = 0.12;
  int tube_segments = 16;  // around the bone
  int tube_rings = 16;     // along the bone
  bool global_motion = false;  // random rigid motion of every non-anchor frame
  std::uint64_t seed = 42;
  std::string clip_id;  // empty: "synth_<seed>"

  void check() const {
    if (joints < 2) throw Error(Errc::invalid_config, "joint count must be >= 2");
    if (!(amplitude >= 0.0 && amplitude < std::numbers::pi)) throw Error(Errc::invalid_config, "amplitude must be in [0, pi)");
    if (frames < 1) throw Error(Errc::invalid_config, "frame count must be >= 1");
    if (!(tube_radius > 0.0)) throw Error(Errc::invalid_config, "tube radius must be > 0");
    if (tube_segments < 3 || tube_rings < 2) throw Error(Errc::invalid_config, "tube needs >= 3 segments and >= 2 rings");
  }
};

namespace detail {

inline Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-9) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

inline Vec3 any_perpendicular(const Vec3& d) {
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return d.cross(helper).normalized();
}

inline Mat3 axis_angle(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis).toRotationMatrix(); }

/// Inverse-square weights to the two nearest joint bones, renormalized.
inline Eigen::RowVectorXd two_bone_weights(const Vec3& v, const std::vector<std::pair<Vec3, Vec3>>& bones) {
  const auto n = bones.size();
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(n);
  for (std::size_t j = 0; j < n; ++j) d.emplace_back(point_to_segment(v, bones[j].first, bones[j].second), j);
  std::partial_sort(d.begin(), d.begin() + std::min<std::size_t>(2, n), d.end());
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n));
  double total = 0.0;
  for (std::size_t r = 0; r < std::min<std::size_t>(2, n); ++r) {
    const double wr = 1.0 / (d[r].first * d[r].first + 1e-6);
    w[static_cast<Eigen::Index>(d[r].second)] = wr;
    total += wr;
  }
  return w / total;
}

}  // namespace detail

/// Builds a normalized clip from the config. Frame 0 is the rest pose.
inline RigClip generate_clip(const SynthConfig& cfg) {
  cfg.check();
  Rng rng(mix_seed(cfg.seed, 0x5e7a11ULL));
  const int n = cfg.joints;

  // Rest skeleton.
  std::vector<int> parent(n, -1);
  std::vector<Vec3> offset(n, Vec3::Zero());
  std::vector<Vec3> rest(n, Vec3::Zero());
  const int branch_a = cfg.topology == Topology::two_branch ? (n - 1 + 1) / 2 : n - 1;
  for (int j = 1; j < n; ++j) {
    Vec3 base;
    if (j <= branch_a) {
      parent[j] = j - 1;
      base = Vec3(0.25, 1.0, 0.0);
    } else {
      parent[j] = j == branch_a + 1 ? 0 : j - 1;
      base = Vec3(-0.25, -1.0, 0.15);
    }
    const Vec3 dir = (base.normalized() + 0.3 * detail::random_unit(rng)).normalized();
    offset[j] = rng.uniform(0.8, 1.2) * dir;
    rest[j] = rest[parent[j]] + offset[j];
  }
  std::vector<Vec3> axis(n, Vec3::UnitZ());
  std::vector<double> omega(n, 0.0);
  for (int j = 1; j < n; ++j) {
    const Vec3 perp = detail::any_perpendicular(offset[j].normalized());
    const Vec3 other = offset[j].normalized().cross(perp);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    axis[j] = (std::cos(a) * perp + std::sin(a) * other).normalized();
    omega[j] = rng.uniform(0.6, 1.4);
  }

  // Bones for weights: joint j <-> segment (rest[j], rest[parent j]); roots are points.
  std::vector<std::pair<Vec3, Vec3>> bones(n);
  for (int j = 0; j < n; ++j) bones[j] = {rest[j], parent[j] >= 0 ? rest[parent[j]] : rest[j]};

  // Rest mesh: a capped tube around every parent->child bone.
  Points rest_vertices;
  std::vector<Face> faces;
  for (int j = 1; j < n; ++j) {
    const Vec3 a = rest[parent[j]];
    const Vec3 b = rest[j];
    const Vec3 d = (b - a).normalized();
    const Vec3 u = detail::any_perpendicular(d);
    const Vec3 v = d.cross(u);
    const int base = static_cast<int>(rest_vertices.size());
    const int segs = cfg.tube_segments;
    for (int r = 0; r < cfg.tube_rings; ++r) {
      const double t = 0.08 + 0.84 * r / (cfg.tube_rings - 1);
      const Vec3 c = a + t * (b - a);
      for (int s = 0; s < segs; ++s) {
        const double phi = 2.0 * std::numbers::pi * s / segs;
        rest_vertices.push_back(c + cfg.tube_radius * (std::cos(phi) * u + std::sin(phi) * v));
      }
    }
    for (int r = 0; r + 1 < cfg.tube_rings; ++r)
      for (int s = 0; s < segs; ++s) {
        const int i00 = base + r * segs + s;
        const int i01 = base + r * segs + (s + 1) % segs;
        const int i10 = i00 + segs;
        const int i11 = i01 + segs;
        faces.push_back({i00, i01, i11});
        faces.push_back({i00, i11, i10});
      }
    const int cap0 = static_cast<int>(rest_vertices.size());
    rest_vertices.push_back(a + 0.08 * (b - a));
    const int cap1 = cap0 + 1;
    rest_vertices.push_back(a + 0.92 * (b - a));
    const int last = base + (cfg.tube_rings - 1) * segs;
    for (int s = 0; s < segs; ++s) {
      faces.push_back({cap0, base + (s + 1) % segs, base + s});
      faces.push_back({cap1, last + s, last + (s + 1) % segs});
    }
  }
  const auto nv = static_cast<Eigen::Index>(rest_vertices.size());
  MatX weights(nv, n);
  for (Eigen::Index i = 0; i < nv; ++i) weights.row(i) = detail::two_bone_weights(rest_vertices[i], bones);

  RigClip clip;
  clip.clip_id = cfg.clip_id.empty() ? "synth_" + std::to_string(cfg.seed) : cfg.clip_id;
  std::vector<int> parents_1based(n);
  for (int j = 0; j < n; ++j) parents_1based[j] = parent[j] + 1;

  std::vector<MeshFrame> meshes;
  for (int k = 0; k < cfg.frames; ++k) {
    std::vector<Mat3> g(n, Mat3::Identity());
    std::vector<Vec3> x(n, Vec3::Zero());
    for (int j = 1; j < n; ++j) {
      const Mat3 local = detail::axis_angle(axis[j], cfg.amplitude * std::sin(omega[j] * k));
      g[j] = g[parent[j]] * local;
      x[j] = x[parent[j]] + g[j] * offset[j];
    }
    // Vertices bound to joint j follow the segment (parent j -> j).
    std::vector<Mat3> bone_r(n, Mat3::Identity());
    std::vector<Vec3> bone_t(n, Vec3::Zero());
    for (int j = 1; j < n; ++j) {
      bone_r[j] = g[j];
      bone_t[j] = x[parent[j]] - g[j] * rest[parent[j]];
    }
    MeshFrame mf;
    mf.vertices.reserve(rest_vertices.size());
    for (Eigen::Index i = 0; i < nv; ++i) {
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < n; ++j) {
        const double w = weights(i, j);
        if (w != 0.0) p += w * (bone_r[j] * rest_vertices[i] + bone_t[j]);
      }
      mf.vertices.push_back(p);
    }
    if (cfg.global_motion && k > 0) {
      const Mat3 r = detail::axis_angle(detail::random_unit(rng), rng.uniform(0.0, std::numbers::pi));
      const Vec3 t(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
      for (auto& p : x) p = r * p + t;
      for (auto& p : mf.vertices) p = r * p + t;
    }
    clip.skeleton_frames.push_back(Skeleton{x, parents_1based});
    meshes.push_back(std::move(mf));
  }

  // Anchor bounding-box normalization: centered, longest axis -> 1.
  Vec3 lo = meshes.front().vertices.front();
  Vec3 hi = lo;
  for (const auto& p : meshes.front().vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Normalization norm;
  norm.center = 0.5 * (lo + hi);
  norm.scale = 1.0 / (hi - lo).maxCoeff();
  for (auto& s : clip.skeleton_frames)
    for (auto& p : s.joints) p = (p - norm.center) * norm.scale;
  for (auto& m : meshes)
    for (auto& p : m.vertices) p = (p - norm.center) * norm.scale;

  clip.faces = std::move(faces);
  clip.mesh_frames = std::move(meshes);
  clip.skin_weights = std::vector<MatX>(static_cast<std::size_t>(cfg.frames), weights);
  clip.valid_mask = std::vector<bool>(static_cast<std::size_t>(n), true);
  clip.normalization = norm;
  return clip;
}

/// Adds iid N(0, sigma^2) noise to joints and vertices of non-anchor frames.
inline RigClip perturb_clip(const RigClip& clip, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error(Errc::invalid_argument, "sigma must be >= 0");
  RigClip out = clip;
  if (sigma == 0.0) return out;
  Rng rng(mix_seed(seed, hash_string(clip.clip_id)));
  for (std::size_t k = 1; k < out.skeleton_frames.size(); ++k)
    for (auto& p : out.skeleton_frames[k].joints) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * sigma;
  if (out.mesh_frames)
    for (std::size_t k = 1; k < out.mesh_frames->size(); ++k)
      for (auto& p : (*out.mesh_frames)[k].vertices) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * sigma;
  return out;
}

/// The demo clip: two-branch, six joints, three frames.
inline SynthConfig demo_config(std::uint64_t seed = 42) {
  SynthConfig cfg;
  cfg.seed = seed;
  return cfg;
}

}  // namespace sprig
