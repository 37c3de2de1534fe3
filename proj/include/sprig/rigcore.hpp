#pragma once

// Core rig types shared by every other header: skeletons, mesh frames,
// animated clips, validation, the anchor MST and joint-tree hop distances.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "sprig/error.hpp"

namespace sprig {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using Points = std::vector<Vec3>;

/// Joint positions plus a 1-based parent vector: parents[j] == 0 marks a
/// root, parents[j] == p > 0 means joint p-1 (0-based) is the parent.
struct Skeleton {
  Points joints;
  std::vector<int> parents;

  std::size_t size() const { return joints.size(); }

  /// 0-based parent index, or -1 for a root.
  int parent_of(std::size_t j) const { return parents[j] - 1; }
  bool is_root(std::size_t j) const { return parents[j] == 0; }
};

struct MeshFrame {
  Points vertices;
};

using Face = std::array<int, 3>;

/// Record of the anchor bounding-box normalization applied by the generator:
/// normalized = (raw - center) * scale.
struct Normalization {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
};

struct RigClip {
  std::string clip_id;
  std::vector<Skeleton> skeleton_frames;  // index 0 is the anchor
  std::optional<std::vector<Face>> faces;
  std::optional<std::vector<MeshFrame>> mesh_frames;
  std::optional<std::vector<MatX>> skin_weights;  // per frame, N_v x J
  std::optional<std::vector<bool>> valid_mask;
  std::optional<Normalization> normalization;

  std::size_t frame_count() const { return skeleton_frames.size(); }
  const Skeleton& anchor() const { return skeleton_frames.front(); }
  bool has_mesh() const { return faces.has_value() && mesh_frames.has_value() && !mesh_frames->empty(); }

  /// Valid mask, defaulting to all joints of the anchor.
  std::vector<bool> valid_or_all() const {
    if (valid_mask) return *valid_mask;
    return std::vector<bool>(skeleton_frames.empty() ? 0 : anchor().size(), true);
  }
};

// ---------------------------------------------------------------------------
// Validation

enum class Severity { error, warning };

struct Violation {
  std::string code;
  std::string message;
  Severity severity = Severity::error;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool empty() const { return violations.empty(); }
  bool ok() const {
    return std::none_of(violations.begin(), violations.end(),
                        [](const Violation& v) { return v.severity == Severity::error; });
  }
  bool contains(std::string_view code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.code == code; });
  }
};

inline bool all_finite(const Vec3& v) { return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z()); }

inline void require_finite(const Points& pts) {
  for (const auto& p : pts)
    if (!all_finite(p)) throw Error(Errc::nonfinite_coordinate, "coordinate is not finite");
}

/// True when following parent pointers from some joint never reaches a root.
/// Assumes parent indices are in range.
inline bool has_parent_cycle(const std::vector<int>& parents) {
  const std::size_t n = parents.size();
  // 0 = unvisited, 1 = on current path, 2 = known to reach a root
  std::vector<int> state(n, 0);
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<std::size_t> path;
    std::size_t j = start;
    while (true) {
      if (state[j] == 2) break;
      if (state[j] == 1) return true;
      state[j] = 1;
      path.push_back(j);
      const int p = parents[j];
      if (p == 0) break;
      j = static_cast<std::size_t>(p - 1);
    }
    for (auto k : path) state[k] = 2;
  }
  return false;
}

namespace detail {

inline void check_skeleton(const Skeleton& s, std::size_t frame, ValidationReport& r) {
  const auto tag = "frame " + std::to_string(frame) + ": ";
  const std::size_t n = s.joints.size();
  if (n == 0) {
    r.violations.push_back({"NO_JOINTS", tag + "skeleton has no joints"});
    return;
  }
  if (s.parents.size() != n) {
    r.violations.push_back({"PARENT_COUNT_MISMATCH", tag + "parents length differs from joint count"});
    return;
  }
  for (std::size_t j = 0; j < n; ++j)
    if (!all_finite(s.joints[j]))
      r.violations.push_back({"NONFINITE_COORDINATE", tag + "joint " + std::to_string(j) + " is not finite"});
  bool in_range = true;
  std::size_t roots = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const int p = s.parents[j];
    if (p < 0 || p > static_cast<int>(n)) {
      r.violations.push_back({"PARENT_OUT_OF_RANGE", tag + "joint " + std::to_string(j)});
      in_range = false;
    } else if (p == static_cast<int>(j) + 1) {
      r.violations.push_back({"SELF_PARENT", tag + "joint " + std::to_string(j) + " is its own parent"});
      in_range = false;
    } else if (p == 0) {
      ++roots;
    }
  }
  if (!in_range) return;
  if (has_parent_cycle(s.parents)) r.violations.push_back({"CYCLE", tag + "parent pointers form a cycle"});
  if (roots > 1)
    r.violations.push_back({"MULTI_ROOT", tag + std::to_string(roots) + " roots", Severity::warning});
}

}  // namespace detail

/// Lists every invariant violation of a clip. Multi-root skeletons are
/// reported as warnings; everything else is an error.
inline ValidationReport validate_clip(const RigClip& clip) {
  ValidationReport r;
  if (clip.skeleton_frames.empty()) {
    r.violations.push_back({"EMPTY_CLIP", "clip has no frames"});
    return r;
  }
  for (std::size_t k = 0; k < clip.skeleton_frames.size(); ++k) detail::check_skeleton(clip.skeleton_frames[k], k, r);

  const std::size_t joints = clip.anchor().size();
  std::optional<std::size_t> nv;
  if (clip.mesh_frames.has_value() != clip.faces.has_value())
    r.violations.push_back({"MESH_INCOMPLETE", "mesh_frames and faces must be given together"});
  if (clip.mesh_frames) {
    const auto& frames = *clip.mesh_frames;
    if (frames.size() != clip.skeleton_frames.size())
      r.violations.push_back({"MESH_FRAME_COUNT_MISMATCH", "mesh frame count differs from skeleton frame count"});
    if (!frames.empty()) {
      nv = frames.front().vertices.size();
      if (*nv < 3) r.violations.push_back({"TOO_FEW_VERTICES", "mesh has fewer than 3 vertices"});
      for (std::size_t k = 0; k < frames.size(); ++k) {
        if (frames[k].vertices.size() != *nv)
          r.violations.push_back(
              {"TOPOLOGY_MISMATCH", "mesh frame " + std::to_string(k) + " has a different vertex count"});
        for (const auto& v : frames[k].vertices)
          if (!all_finite(v)) {
            r.violations.push_back({"NONFINITE_COORDINATE", "mesh frame " + std::to_string(k) + " has a non-finite vertex"});
            break;
          }
      }
    }
  }
  if (clip.faces && nv) {
    for (std::size_t f = 0; f < clip.faces->size(); ++f)
      for (int idx : (*clip.faces)[f])
        if (idx < 0 || static_cast<std::size_t>(idx) >= *nv) {
          r.violations.push_back({"FACE_INDEX_OUT_OF_RANGE", "face " + std::to_string(f)});
          break;
        }
  }
  if (clip.valid_mask) {
    if (clip.valid_mask->size() != joints)
      r.violations.push_back({"VALID_MASK_SIZE", "valid_mask length differs from anchor joint count"});
  }
  if (clip.skin_weights) {
    const auto& sw = *clip.skin_weights;
    if (sw.size() != clip.skeleton_frames.size())
      r.violations.push_back({"SKIN_FRAME_COUNT_MISMATCH", "skin_weights frame count differs from skeleton frame count"});
    for (std::size_t k = 0; k < sw.size(); ++k) {
      if (static_cast<std::size_t>(sw[k].cols()) != joints || (nv && static_cast<std::size_t>(sw[k].rows()) != *nv)) {
        r.violations.push_back({"SKIN_SHAPE_MISMATCH", "skin_weights frame " + std::to_string(k)});
        continue;
      }
      for (Eigen::Index i = 0; i < sw[k].rows(); ++i) {
        const double s = sw[k].row(i).sum();
        if (!std::isfinite(s) || std::abs(s - 1.0) > 1e-6 || sw[k].row(i).minCoeff() < 0.0) {
          r.violations.push_back({"SKIN_NOT_STOCHASTIC",
                                  "skin_weights frame " + std::to_string(k) + " row " + std::to_string(i)});
          break;
        }
      }
    }
    const auto valid = clip.valid_or_all();
    if (std::none_of(valid.begin(), valid.end(), [](bool b) { return b; }))
      r.violations.push_back({"NO_VALID_JOINTS", "skin data present but no joint is valid"});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Graph utilities

using Edge = std::pair<int, int>;  // stored as (min, max) for undirected edges

/// Euclidean minimum spanning tree via Prim's algorithm seeded at joint 0.
/// Equal-weight candidates (relative difference below 1e-12) are broken by
/// the lexicographically smallest (min_index, max_index) pair.
inline std::vector<Edge> anchor_mst(const Skeleton& skeleton) {
  const auto& x = skeleton.joints;
  require_finite(x);
  const int n = static_cast<int>(x.size());
  std::vector<Edge> edges;
  if (n <= 1) return edges;

  constexpr double tie_tol = 1e-12;
  auto better = [&](double w, Edge e, double best_w, Edge best_e) {
    const double scale = std::max(std::abs(w), std::abs(best_w));
    if (std::abs(w - best_w) <= tie_tol * scale) return e < best_e;
    return w < best_w;
  };
  auto make_edge = [](int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; };

  std::vector<bool> in_tree(n, false);
  std::vector<double> best_w(n, std::numeric_limits<double>::infinity());
  std::vector<Edge> best_e(n, Edge{n, n});
  in_tree[0] = true;
  for (int v = 1; v < n; ++v) {
    best_w[v] = (x[v] - x[0]).norm();
    best_e[v] = make_edge(0, v);
  }
  for (int step = 1; step < n; ++step) {
    int pick = -1;
    for (int v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      if (pick < 0 || better(best_w[v], best_e[v], best_w[pick], best_e[pick])) pick = v;
    }
    in_tree[pick] = true;
    edges.push_back(best_e[pick]);
    for (int v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double w = (x[v] - x[pick]).norm();
      const Edge e = make_edge(pick, v);
      if (better(w, e, best_w[v], best_e[v])) {
        best_w[v] = w;
        best_e[v] = e;
      }
    }
  }
  return edges;
}

/// Unweighted hop counts on the joint tree (forest). Joints in different
/// components get the sentinel 2*J.
struct JointTreeDistances {
  Eigen::MatrixXi d;
  bool multi_component = false;

  int sentinel() const { return 2 * static_cast<int>(d.rows()); }
};

inline JointTreeDistances tree_distances(const Skeleton& skeleton) {
  const std::size_t n = skeleton.size();
  for (int p : skeleton.parents)
    if (p < 0 || p > static_cast<int>(n)) throw Error(Errc::parent_index_out_of_range, "parent index out of range");
  for (std::size_t j = 0; j < n; ++j)
    if (skeleton.parents[j] == static_cast<int>(j) + 1)
      throw Error(Errc::cyclic_parents, "joint " + std::to_string(j) + " is its own parent");
  if (has_parent_cycle(skeleton.parents)) throw Error(Errc::cyclic_parents, "parent pointers form a cycle");

  std::vector<std::vector<int>> adj(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int p = skeleton.parent_of(j);
    if (p >= 0) {
      adj[j].push_back(p);
      adj[p].push_back(static_cast<int>(j));
    }
  }
  JointTreeDistances out;
  const int sentinel = 2 * static_cast<int>(n);
  out.d = Eigen::MatrixXi::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), sentinel);
  for (std::size_t s = 0; s < n; ++s) {
    std::queue<int> q;
    out.d(s, s) = 0;
    q.push(static_cast<int>(s));
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (out.d(s, v) == sentinel) {
          out.d(s, v) = out.d(s, u) + 1;
          q.push(v);
        }
    }
  }
  out.multi_component = (out.d.array() == sentinel).any();
  return out;
}

/// Directed parent->child edges (i, j) with parent(j) == i, in joint order.
inline std::vector<Edge> parent_edges(const Skeleton& s) {
  std::vector<Edge> e;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const int p = s.parent_of(j);
    if (p >= 0 && p != static_cast<int>(j)) e.emplace_back(p, static_cast<int>(j));
  }
  return e;
}

inline Vec3 centroid(const Points& pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Vec3(c / static_cast<double>(pts.size()));
}

}  // namespace sprig
