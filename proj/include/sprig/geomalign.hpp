#pragma once

// Rigid alignment: correspondence-based Kabsch for the metrics and
// correspondence-free structure-tensor alignment for the geometry loss.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>

#include "sprig/rigcore.hpp"

namespace sprig {

struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }

  Points apply(const Points& pts) const {
    Points out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(apply(p));
    return out;
  }

  static RigidTransform identity() { return {}; }
};

/// Least-squares rotation + translation (no scale) taking `source` onto
/// `target` with index correspondence. A reflection is repaired by flipping
/// the singular direction with the smallest singular value.
inline RigidTransform kabsch_align(const Points& source, const Points& target) {
  if (source.size() != target.size()) throw Error(Errc::count_mismatch, "kabsch: point counts differ");
  if (source.empty()) throw Error(Errc::count_mismatch, "kabsch: empty point sets");
  require_finite(source);
  require_finite(target);

  RigidTransform out;
  const Vec3 cs = centroid(source);
  const Vec3 ct = centroid(target);
  if (source.size() == 1) {
    out.t = ct - cs;
    return out;
  }
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) h += (source[i] - cs) * (target[i] - ct).transpose();
  if (h.norm() <= 1e-300) {
    out.t = ct - cs;
    return out;
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if ((v * u.transpose()).determinant() < 0.0) v.col(2) *= -1.0;  // singular values are sorted descending
  out.R = v * u.transpose();
  out.t = ct - out.R * cs;
  return out;
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Eigenvalues come back in descending order; eigenvectors are the columns.
struct SymEigen3 {
  Vec3 values;
  Mat3 vectors;
};

inline SymEigen3 jacobi_eigen_sym3(const Mat3& m, double rel_tol = 1e-12, int max_sweeps = 64) {
  Mat3 a = 0.5 * (m + m.transpose());
  Mat3 v = Mat3::Identity();
  const double scale = a.norm();
  for (int sweep = 0; sweep < max_sweeps && scale > 0.0; ++sweep) {
    const double off = std::sqrt(a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2));
    if (off <= rel_tol * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Mat3 rot = Mat3::Identity();
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        a(p, q) = a(q, p) = 0.0;
        v = v * rot;
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  SymEigen3 out;
  for (int c = 0; c < 3; ++c) {
    out.values[c] = a(order[c], order[c]);
    out.vectors.col(c) = v.col(order[c]);
  }
  return out;
}

/// Length-weighted structure tensor of the parent edges (weights normalized
/// to sum to one) together with the edge midpoints.
struct StructureTensor {
  Mat3 tensor = Mat3::Zero();
  Points midpoints;
};

inline StructureTensor structure_tensor(const Skeleton& s) {
  StructureTensor out;
  const auto edges = parent_edges(s);
  double total = 0.0;
  for (auto [i, j] : edges) total += (s.joints[j] - s.joints[i]).norm();
  for (auto [i, j] : edges) {
    const Vec3 v = s.joints[j] - s.joints[i];
    if (total > 0.0) out.tensor += (v.norm() / total) * v * v.transpose();
    out.midpoints.push_back(0.5 * (s.joints[i] + s.joints[j]));
  }
  return out;
}

/// Symmetric mean squared nearest-neighbour distance between two point sets.
inline double symmetric_chamfer_sq(const Points& a, const Points& b) {
  if (a.empty() || b.empty()) throw Error(Errc::empty_set, "chamfer of an empty point set");
  auto one_way = [](const Points& from, const Points& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

struct StructureAlignment {
  RigidTransform transform;
  double midpoint_chamfer = 0.0;
  bool degenerate = false;  // tensor rank < 2; fallback transform used
  std::array<double, 4> candidate_chamfer{};
};

/// Maps the anchor onto `frame` by aligning the principal axes of the two
/// structure tensors. Of the four proper sign choices for the frame's axes,
/// the one with the smallest midpoint Chamfer is kept. Translation matches
/// midpoint centroids.
inline StructureAlignment structure_tensor_align(const Skeleton& anchor, const Skeleton& frame) {
  require_finite(anchor.joints);
  require_finite(frame.joints);
  const auto st0 = structure_tensor(anchor);
  const auto stk = structure_tensor(frame);
  if (st0.midpoints.empty() || stk.midpoints.empty())
    throw Error(Errc::no_edges, "structure tensor alignment needs at least one edge per skeleton");

  const Vec3 mu0 = centroid(st0.midpoints);
  const Vec3 muk = centroid(stk.midpoints);
  const auto e0 = jacobi_eigen_sym3(st0.tensor);
  const auto ek = jacobi_eigen_sym3(stk.tensor);

  StructureAlignment out;
  const double rank_tol = 1e-12;
  if (e0.values[1] <= rank_tol * e0.values[0] || ek.values[1] <= rank_tol * ek.values[0]) {
    out.degenerate = true;
    if (anchor.size() == frame.size() && anchor.size() > 0) {
      out.transform = kabsch_align(anchor.joints, frame.joints);
    } else {
      out.transform.t = muk - mu0;
    }
    out.midpoint_chamfer = symmetric_chamfer_sq(out.transform.apply(st0.midpoints), stk.midpoints);
    out.candidate_chamfer.fill(out.midpoint_chamfer);
    return out;
  }

  const Mat3 q0 = e0.vectors;
  double best = std::numeric_limits<double>::infinity();
  int slot = 0;
  for (int signs = 0; signs < 8; ++signs) {
    Mat3 qk = ek.vectors;
    for (int c = 0; c < 3; ++c)
      if (signs & (1 << c)) qk.col(c) *= -1.0;
    const Mat3 r = qk * q0.transpose();
    if (r.determinant() <= 0.0) continue;
    RigidTransform cand{r, muk - r * mu0};
    const double ch = symmetric_chamfer_sq(cand.apply(st0.midpoints), stk.midpoints);
    out.candidate_chamfer[slot++] = ch;
    if (ch < best) {
      best = ch;
      out.transform = cand;
    }
  }
  out.midpoint_chamfer = best;
  return out;
}

}  // namespace sprig
