#pragma once

// Temporal-stability and static metrics for predicted rigs. Every temporal
// metric compares non-anchor frames, Kabsch-aligned onto the anchor, with
// the anchor frame and averages over those frames.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sprig/geomalign.hpp"
#include "sprig/skinloss.hpp"

namespace sprig {

inline constexpr double kMetricEpsilon = 1e-9;
inline constexpr int kSpectrumSize = 8;
inline constexpr int kBoneSamples = 16;

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Frames of a clip after Kabsch alignment onto the anchor; element 0 is the
/// anchor itself. Fails with the reason a clip cannot be scored.
inline std::vector<Points> aligned_frames(const std::vector<Skeleton>& frames) {
  if (frames.size() < 2) throw Error(Errc::too_few_frames, "temporal metrics need a non-anchor frame");
  const std::size_t joints = frames.front().size();
  for (const auto& f : frames)
    if (f.size() != joints) throw Error(Errc::count_mismatch, "joint count varies across frames");
  if (joints < 2) throw Error(Errc::single_joint, "temporal metrics need at least two joints");
  std::vector<Points> out;
  out.push_back(frames.front().joints);
  for (std::size_t k = 1; k < frames.size(); ++k)
    out.push_back(kabsch_align(frames[k].joints, frames.front().joints).apply(frames[k].joints));
  return out;
}

inline std::vector<double> sorted_pairwise_distances(const Points& x) {
  std::vector<double> d;
  d.reserve(x.size() * (x.size() - 1) / 2);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) d.push_back((x[i] - x[j]).norm());
  std::sort(d.begin(), d.end());
  return d;
}

inline std::vector<double> edge_lengths(const Points& x, const std::vector<Edge>& edges) {
  std::vector<double> l;
  l.reserve(edges.size());
  for (auto [u, v] : edges) l.push_back((x[u] - x[v]).norm());
  return l;
}

namespace detail {

inline double sorted_relative_deviation(std::vector<double> a, std::vector<double> b, double scale) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size()) / scale;
}

}  // namespace detail

/// Pairwise joint distance deviation.
inline double pjdd(const std::vector<Skeleton>& frames) {
  const auto x = aligned_frames(frames);
  const auto d0 = sorted_pairwise_distances(x[0]);
  const double scale = std::max(median(d0), kMetricEpsilon);
  double sum = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k)
    sum += detail::sorted_relative_deviation(sorted_pairwise_distances(x[k]), d0, scale);
  return sum / static_cast<double>(x.size() - 1);
}

/// Bone length relative deviation over the anchor MST.
inline double blrd(const std::vector<Skeleton>& frames) {
  const auto x = aligned_frames(frames);
  const auto e0 = anchor_mst(frames.front());
  const auto l0 = edge_lengths(x[0], e0);
  const double scale = std::max(median(l0), kMetricEpsilon);
  double sum = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) sum += detail::sorted_relative_deviation(edge_lengths(x[k], e0), l0, scale);
  return sum / static_cast<double>(x.size() - 1);
}

/// Ascending eigenvalues of I - D^-1/2 W D^-1/2, W on `edges` weighted by
/// length / scale. Degrees are floored at the metric epsilon.
inline Eigen::VectorXd normalized_laplacian_spectrum(const Points& x, const std::vector<Edge>& edges, double scale) {
  const auto n = static_cast<Eigen::Index>(x.size());
  MatX w = MatX::Zero(n, n);
  for (auto [u, v] : edges) {
    const double wt = (x[u] - x[v]).norm() / scale;
    w(u, v) = wt;
    w(v, u) = wt;
  }
  Eigen::VectorXd deg = w.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) deg[i] = std::max(deg[i], kMetricEpsilon);
  MatX lap = MatX::Identity(n, n);
  for (Eigen::Index u = 0; u < n; ++u)
    for (Eigen::Index v = 0; v < n; ++v)
      if (w(u, v) != 0.0) lap(u, v) -= w(u, v) / std::sqrt(deg[u] * deg[v]);
  Eigen::SelfAdjointEigenSolver<MatX> solver(lap, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

/// Graph spectral discrepancy over the first min(n_eigs, J) eigenvalues.
inline double gsd(const std::vector<Skeleton>& frames, int n_eigs = kSpectrumSize) {
  if (n_eigs < 1) throw Error(Errc::invalid_argument, "n_eigs must be >= 1");
  const auto x = aligned_frames(frames);
  const auto e0 = anchor_mst(frames.front());
  const double scale = std::max(median(edge_lengths(x[0], e0)), kMetricEpsilon);
  const auto s0 = normalized_laplacian_spectrum(x[0], e0, scale);
  const auto r = std::min<Eigen::Index>(n_eigs, s0.size());
  double sum = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const auto sk = normalized_laplacian_spectrum(x[k], e0, scale);
    sum += (sk.head(r) - s0.head(r)).cwiseAbs().sum() / static_cast<double>(r);
  }
  return sum / static_cast<double>(x.size() - 1);
}

struct JadResult {
  double value = 0.0;
  std::size_t skipped_edges = 0;  // zero-length edges
};

/// Joint angle discrepancy: mean normalized angle between anchor bone
/// directions and aligned frame bone directions on the anchor MST.
inline JadResult jad_detail(const std::vector<Skeleton>& frames) {
  const auto x = aligned_frames(frames);
  const auto e0 = anchor_mst(frames.front());
  JadResult out;
  double frame_sum = 0.0;
  std::size_t scored_frames = 0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    double sum = 0.0;
    std::size_t used = 0;
    for (auto [u, v] : e0) {
      const Vec3 a = x[0][v] - x[0][u];
      const Vec3 b = x[k][v] - x[k][u];
      if (!(a.norm() > 0.0) || !(b.norm() > 0.0)) {
        ++out.skipped_edges;
        continue;
      }
      // atan2 form of arccos(<a,b>) for unit vectors; stable near 0 and pi
      sum += std::atan2(a.cross(b).norm(), a.dot(b)) / std::numbers::pi;
      ++used;
    }
    if (used > 0) {
      frame_sum += sum / static_cast<double>(used);
      ++scored_frames;
    }
  }
  if (scored_frames == 0) throw Error(Errc::no_edges, "every anchor MST edge has zero length");
  out.value = frame_sum / static_cast<double>(scored_frames);
  return out;
}

inline double jad(const std::vector<Skeleton>& frames) { return jad_detail(frames).value; }

/// Mean joint error at the anchor frame, no alignment.
inline double mpjpe_anchor(const Skeleton& pred, const Skeleton& gt) {
  if (pred.size() != gt.size() || pred.size() == 0) throw Error(Errc::count_mismatch, "joint counts differ");
  double s = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) s += (pred.joints[j] - gt.joints[j]).norm();
  return s / static_cast<double>(pred.size());
}

enum class ChamferMode { j2j, j2b, b2b };

/// Points sampled uniformly along every parent edge, endpoints included.
inline Points sample_bones(const Skeleton& s, int per_bone = kBoneSamples) {
  if (per_bone < 2) throw Error(Errc::invalid_argument, "need at least 2 samples per bone");
  Points pts;
  for (auto [i, j] : parent_edges(s))
    for (int t = 0; t < per_bone; ++t) {
      const double a = static_cast<double>(t) / (per_bone - 1);
      pts.push_back((1.0 - a) * s.joints[i] + a * s.joints[j]);
    }
  return pts;
}

/// Symmetric mean nearest-neighbour Euclidean distance.
inline double symmetric_chamfer(const Points& a, const Points& b) {
  if (a.empty() || b.empty()) throw Error(Errc::empty_set, "chamfer of an empty point set");
  auto one_way = [](const Points& from, const Points& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      sum += std::sqrt(best);
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

/// CD-J2J: joints vs joints; CD-J2B: predicted joints vs ground-truth bone
/// samples; CD-B2B: bone samples on both sides.
inline double chamfer_static(const Skeleton& pred, const Skeleton& gt, ChamferMode mode, int per_bone = kBoneSamples) {
  switch (mode) {
    case ChamferMode::j2j: return symmetric_chamfer(pred.joints, gt.joints);
    case ChamferMode::j2b: return symmetric_chamfer(pred.joints, sample_bones(gt, per_bone));
    case ChamferMode::b2b: return symmetric_chamfer(sample_bones(pred, per_bone), sample_bones(gt, per_bone));
  }
  return 0.0;
}

struct SkinConsistency {
  double l1_bca = 0.0;
  double symkl_bca = 0.0;
  double entropy = 0.0;
};

/// Teacher-based consistency of per-frame point predictions preds[0..K].
inline SkinConsistency skin_consistency(const std::vector<MatX>& preds, const MaskedTeacher& teacher) {
  if (preds.size() < 2) throw Error(Errc::too_few_frames, "skin consistency needs a non-anchor frame");
  const auto& m = teacher.mask;
  const MatX y = teacher.target();
  SkinConsistency out;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const MatX p = renorm(preds[k], m, teacher.epsilon);
    if (k > 0) {
      out.l1_bca += masked_l1(p, y, m);
      out.symkl_bca += sym_kl(y, p, m, teacher.epsilon);
    }
    out.entropy += masked_entropy(p, m, teacher.epsilon);
  }
  const auto na = static_cast<double>(preds.size() - 1);
  out.l1_bca /= na;
  out.symkl_bca /= na;
  out.entropy /= static_cast<double>(preds.size());
  return out;
}

/// Cons_j: per-point population variance over frames weighted by the
/// per-point mean weight of joint j.
inline Eigen::VectorXd per_joint_variance(const std::vector<MatX>& preds, double eps = kMetricEpsilon) {
  if (preds.size() < 2) throw Error(Errc::too_few_frames, "per-joint variance needs at least two frames");
  for (const auto& p : preds) detail::check_same(p, preds.front());
  const double kf = static_cast<double>(preds.size());
  MatX mean = MatX::Zero(preds.front().rows(), preds.front().cols());
  for (const auto& p : preds) mean += p;
  mean /= kf;
  MatX var = MatX::Zero(mean.rows(), mean.cols());
  for (const auto& p : preds) var += (p - mean).cwiseAbs2();
  var /= kf;
  Eigen::VectorXd cons(mean.cols());
  for (Eigen::Index j = 0; j < mean.cols(); ++j)
    cons[j] = var.col(j).dot(mean.col(j)) / (mean.col(j).sum() + eps);
  return cons;
}

inline Eigen::VectorXd per_joint_delta(const Eigen::VectorXd& original, const Eigen::VectorXd& finetuned) {
  if (original.size() != finetuned.size()) throw Error(Errc::shape_mismatch, "joint counts differ");
  return original - finetuned;
}

}  // namespace sprig
