#pragma once

// Permutation-invariant geometry loss on decoded skeletons: bidirectional
// best-cosine edge directions, sorted bone lengths and endpoint Chamfer,
// measured after a rigid alignment onto the anchor.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sprig/geomalign.hpp"

namespace sprig {

struct EdgeGeometry {
  std::vector<Edge> edges;  // (parent, child)
  Points vectors;           // child - parent
  Points midpoints;
  Points parent_ends;
  Points child_ends;

  std::size_t size() const { return edges.size(); }
  bool empty() const { return edges.empty(); }

  /// Endpoint multiset: both endpoints of every edge.
  Points endpoints() const {
    Points p;
    p.reserve(2 * edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      p.push_back(parent_ends[e]);
      p.push_back(child_ends[e]);
    }
    return p;
  }

  std::vector<double> lengths() const {
    std::vector<double> l;
    l.reserve(vectors.size());
    for (const auto& v : vectors) l.push_back(v.norm());
    return l;
  }
};

inline EdgeGeometry edge_geometry(const Skeleton& s) {
  EdgeGeometry g;
  for (auto [i, j] : parent_edges(s)) {
    g.edges.emplace_back(i, j);
    g.vectors.push_back(s.joints[j] - s.joints[i]);
    g.midpoints.push_back(0.5 * (s.joints[i] + s.joints[j]));
    g.parent_ends.push_back(s.joints[i]);
    g.child_ends.push_back(s.joints[j]);
  }
  return g;
}

/// Keeps the ceil(rho * |E|) longest edges (ties: smaller index pair first)
/// and unit-normalizes their vectors.
inline EdgeGeometry top_rho_edges(const EdgeGeometry& g, double rho) {
  if (g.empty()) throw Error(Errc::no_edges, "top-rho selection on an empty edge set");
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(Errc::invalid_argument, "rho must be in (0, 1]");
  const auto lengths = g.lengths();
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lengths[a] != lengths[b]) return lengths[a] > lengths[b];
    return g.edges[a] < g.edges[b];
  });
  // 1e-12 guards against rho * |E| landing a hair above an integer.
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(rho * static_cast<double>(g.size()) - 1e-12)), 1, g.size());
  EdgeGeometry out;
  for (std::size_t r = 0; r < keep; ++r) {
    const std::size_t e = order[r];
    out.edges.push_back(g.edges[e]);
    const double n = lengths[e];
    out.vectors.push_back(n > 0.0 ? Vec3(g.vectors[e] / n) : Vec3::Zero());
    out.midpoints.push_back(g.midpoints[e]);
    out.parent_ends.push_back(g.parent_ends[e]);
    out.child_ends.push_back(g.child_ends[e]);
  }
  return out;
}

/// Half the sum of (1 - mean best cosine) in both matching directions.
/// Anchor directions are rotated by R before matching.
inline double directional_loss(const EdgeGeometry& anchor, const EdgeGeometry& frame, const Mat3& R) {
  if (anchor.empty() || frame.empty()) throw Error(Errc::no_edges, "directional loss needs edges on both sides");
  auto unit = [](const Vec3& v) {
    const double n = v.norm();
    return n > 0.0 ? Vec3(v / n) : Vec3::Zero();
  };
  Points a, b;
  for (const auto& v : anchor.vectors) a.push_back(unit(R * v));
  for (const auto& v : frame.vectors) b.push_back(unit(v));

  std::vector<double> best_a(a.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> best_b(b.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double c = a[i].dot(b[j]);
      best_a[i] = std::max(best_a[i], c);
      best_b[j] = std::max(best_b[j], c);
    }
  const double mean_a = std::accumulate(best_a.begin(), best_a.end(), 0.0) / static_cast<double>(a.size());
  const double mean_b = std::accumulate(best_b.begin(), best_b.end(), 0.0) / static_cast<double>(b.size());
  return 0.5 * ((1.0 - mean_a) + (1.0 - mean_b));
}

/// Mean squared difference of the m = min(|E_0|, |E_k|) shortest lengths.
inline double length_loss(const EdgeGeometry& anchor, const EdgeGeometry& frame) {
  if (anchor.empty() || frame.empty()) throw Error(Errc::no_edges, "length loss needs edges on both sides");
  auto l0 = anchor.lengths();
  auto lk = frame.lengths();
  std::sort(l0.begin(), l0.end());
  std::sort(lk.begin(), lk.end());
  const std::size_t m = std::min(l0.size(), lk.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += (lk[i] - l0[i]) * (lk[i] - l0[i]);
  return sum / static_cast<double>(m);
}

/// Symmetric mean squared nearest-endpoint distance after mapping the anchor
/// endpoints through T.
inline double endpoint_chamfer(const Points& anchor_endpoints, const Points& frame_endpoints, const RigidTransform& T) {
  return symmetric_chamfer_sq(T.apply(anchor_endpoints), frame_endpoints);
}

enum class AlignmentMode { structure_tensor, kabsch };

struct GeomLossConfig {
  double rho = 1.0;
  double lambda_dir = 1.0;
  double lambda_len = 1.0;
  double lambda_ch = 1.0;
  AlignmentMode alignment = AlignmentMode::structure_tensor;
};

struct GeomFrameTerms {
  double dir = 0.0;
  double len = 0.0;
  double ch = 0.0;
  double total = 0.0;
  bool degenerate_frame = false;      // frame had no edges; maximal penalty used
  bool degenerate_alignment = false;  // structure tensor rank < 2
  bool used_kabsch = false;
};

struct GeomLoss {
  double total = 0.0;
  std::vector<GeomFrameTerms> per_frame;
};

/// Geometry loss of each frame against the anchor, averaged over frames.
inline GeomLoss geom_loss(const Skeleton& anchor, const std::vector<Skeleton>& frames, const GeomLossConfig& cfg = {}) {
  if (frames.empty()) throw Error(Errc::too_few_frames, "geometry loss needs at least one non-anchor frame");
  const auto g0 = edge_geometry(anchor);
  if (g0.empty()) throw Error(Errc::no_edges, "anchor skeleton has no edges");
  const auto top0 = top_rho_edges(g0, cfg.rho);
  const auto p0 = g0.endpoints();

  GeomLoss out;
  for (const auto& frame : frames) {
    GeomFrameTerms t;
    const auto gk = edge_geometry(frame);
    if (gk.empty()) {
      t.degenerate_frame = true;
      t.dir = 2.0;
      double len2 = 0.0;
      for (double l : g0.lengths()) len2 += l * l;
      t.len = len2 / static_cast<double>(g0.size());
      const Vec3 c = centroid(p0);
      double spread = 0.0;
      for (const auto& p : p0) spread += (p - c).squaredNorm();
      t.ch = spread / static_cast<double>(p0.size());
    } else {
      RigidTransform T;
      const bool kabsch = cfg.alignment == AlignmentMode::kabsch && g0.size() == gk.size() &&
                          anchor.size() == frame.size();
      if (kabsch) {
        T = kabsch_align(anchor.joints, frame.joints);
        t.used_kabsch = true;
      } else {
        const auto a = structure_tensor_align(anchor, frame);
        T = a.transform;
        t.degenerate_alignment = a.degenerate;
      }
      t.dir = directional_loss(top0, top_rho_edges(gk, cfg.rho), T.R);
      t.len = length_loss(g0, gk);
      t.ch = endpoint_chamfer(p0, gk.endpoints(), T);
    }
    t.total = cfg.lambda_dir * t.dir + cfg.lambda_len * t.len + cfg.lambda_ch * t.ch;
    out.total += t.total;
    out.per_frame.push_back(t);
  }
  out.total /= static_cast<double>(frames.size());
  return out;
}

}  // namespace sprig
