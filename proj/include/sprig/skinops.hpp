#pragma once

// Surface sampling with shared barycentric indices across frames, teacher
// transfer, Top-K_s masking, and the masked renormalization / averaging
// operators used by the skinning loss and metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "sprig/rigcore.hpp"
#include "sprig/rng.hpp"

namespace sprig {

inline constexpr double kMaskEpsilon = 1e-8;
inline constexpr int kDefaultTopK = 4;
inline constexpr double kDefaultGamma = 0.0;

using Bary = std::array<double, 3>;

struct SurfaceSamples {
  std::vector<int> faces;
  std::vector<Bary> bary;
  std::vector<Points> positions;  // [frame][sample]
  std::vector<Points> normals;    // [frame][sample]
  std::vector<std::vector<bool>> degenerate;  // [frame][sample]: zero-area face, normal set to 0

  std::size_t count() const { return faces.size(); }
  std::size_t frame_count() const { return positions.size(); }

  /// N x 6 query matrix [position | normal] of frame k.
  MatX query(std::size_t k) const {
    MatX u(static_cast<Eigen::Index>(count()), 6);
    for (std::size_t i = 0; i < count(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      u.row(r).head<3>() = positions[k][i].transpose();
      u.row(r).tail<3>() = normals[k][i].transpose();
    }
    return u;
  }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

/// Positions and face normals of explicit (face, barycentric) samples on
/// every mesh frame of the clip.
inline SurfaceSamples samples_at(const RigClip& clip, std::vector<int> faces, std::vector<Bary> bary) {
  if (!clip.has_mesh()) throw Error(Errc::no_mesh, "clip has no mesh frames");
  if (faces.size() != bary.size()) throw Error(Errc::shape_mismatch, "faces and barycentrics differ in length");
  const auto& fl = *clip.faces;
  SurfaceSamples s;
  s.faces = std::move(faces);
  s.bary = std::move(bary);
  for (const auto& frame : *clip.mesh_frames) {
    Points pos, nrm;
    std::vector<bool> degen;
    pos.reserve(s.count());
    nrm.reserve(s.count());
    for (std::size_t i = 0; i < s.count(); ++i) {
      if (s.faces[i] < 0 || static_cast<std::size_t>(s.faces[i]) >= fl.size())
        throw Error(Errc::shape_mismatch, "sample face index out of range");
      const auto& f = fl[static_cast<std::size_t>(s.faces[i])];
      const Vec3& a = frame.vertices[f[0]];
      const Vec3& b = frame.vertices[f[1]];
      const Vec3& c = frame.vertices[f[2]];
      const auto& l = s.bary[i];
      pos.push_back(l[0] * a + l[1] * b + l[2] * c);
      const Vec3 n = (b - a).cross(c - a);
      const double len = n.norm();
      degen.push_back(!(len > 0.0));
      nrm.push_back(len > 0.0 ? Vec3(n / len) : Vec3::Zero());
    }
    s.positions.push_back(std::move(pos));
    s.normals.push_back(std::move(nrm));
    s.degenerate.push_back(std::move(degen));
  }
  return s;
}

/// Area-weighted sampling on the anchor mesh with a square-root barycentric
/// warp. Sample i depends only on (seed, clip_id, i); the same face and
/// barycentrics are reused on every frame.
inline SurfaceSamples sample_surface(const RigClip& clip, std::size_t n_samples, std::uint64_t seed) {
  if (!clip.has_mesh()) throw Error(Errc::no_mesh, "clip has no mesh frames");
  if (n_samples == 0) throw Error(Errc::invalid_argument, "n_samples must be positive");
  const auto& fl = *clip.faces;
  const auto& v0 = clip.mesh_frames->front().vertices;
  std::vector<double> cdf(fl.size());
  double total = 0.0;
  for (std::size_t f = 0; f < fl.size(); ++f) {
    total += triangle_area(v0[fl[f][0]], v0[fl[f][1]], v0[fl[f][2]]);
    cdf[f] = total;
  }
  if (!(total > 0.0)) throw Error(Errc::zero_area_mesh, "anchor mesh has zero total area");

  const std::uint64_t stream = mix_seed(seed, hash_string(clip.clip_id));
  std::vector<int> faces(n_samples);
  std::vector<Bary> bary(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng(mix_seed(stream, i));
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    faces[i] = static_cast<int>(it - cdf.begin());
    const double s = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    bary[i] = {1.0 - s, s * (1.0 - r2), s * r2};
  }
  return samples_at(clip, std::move(faces), std::move(bary));
}

/// Debug dump: face,l1,l2,l3 then x,y,z,nx,ny,nz per frame.
inline void write_samples_csv(std::ostream& os, const SurfaceSamples& s) {
  os << "face,l1,l2,l3";
  for (std::size_t k = 0; k < s.frame_count(); ++k)
    for (const char* c : {"x", "y", "z", "nx", "ny", "nz"}) os << ',' << c << k;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < s.count(); ++i) {
    os << s.faces[i] << ',' << s.bary[i][0] << ',' << s.bary[i][1] << ',' << s.bary[i][2];
    for (std::size_t k = 0; k < s.frame_count(); ++k) {
      const auto& p = s.positions[k][i];
      const auto& n = s.normals[k][i];
      os << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << n.x() << ',' << n.y() << ',' << n.z();
    }
    os << '\n';
  }
}

/// Point-level teacher by barycentric interpolation of the vertex teacher.
inline MatX barycentric_transfer(const MatX& vertex_teacher, const SurfaceSamples& samples, const std::vector<Face>& faces) {
  MatX out(static_cast<Eigen::Index>(samples.count()), vertex_teacher.cols());
  for (std::size_t i = 0; i < samples.count(); ++i) {
    const auto fi = samples.faces[i];
    if (fi < 0 || static_cast<std::size_t>(fi) >= faces.size())
      throw Error(Errc::shape_mismatch, "sample face index out of range");
    const auto& f = faces[static_cast<std::size_t>(fi)];
    for (int r = 0; r < 3; ++r)
      if (f[r] < 0 || f[r] >= vertex_teacher.rows())
        throw Error(Errc::shape_mismatch, "face vertex has no teacher row");
    const auto& l = samples.bary[i];
    out.row(static_cast<Eigen::Index>(i)) =
        l[0] * vertex_teacher.row(f[0]) + l[1] * vertex_teacher.row(f[1]) + l[2] * vertex_teacher.row(f[2]);
  }
  return out;
}

/// Per row: 1 on the K_s largest teacher entries among valid joints (ties go
/// to the lower joint index), gamma on the other valid joints, 0 on invalid.
inline MatX build_mask(const MatX& teacher, const std::vector<bool>& valid, int top_k = kDefaultTopK,
                       double gamma = kDefaultGamma) {
  if (top_k < 1) throw Error(Errc::invalid_argument, "K_s must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(Errc::invalid_argument, "gamma must be in [0, 1)");
  if (static_cast<Eigen::Index>(valid.size()) != teacher.cols())
    throw Error(Errc::shape_mismatch, "valid mask length differs from teacher columns");
  std::vector<int> valid_idx;
  for (std::size_t j = 0; j < valid.size(); ++j)
    if (valid[j]) valid_idx.push_back(static_cast<int>(j));
  if (valid_idx.empty()) throw Error(Errc::no_valid_joints, "no valid joints");

  MatX m = MatX::Zero(teacher.rows(), teacher.cols());
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(top_k), valid_idx.size());
  std::vector<int> order;
  for (Eigen::Index i = 0; i < teacher.rows(); ++i) {
    order = valid_idx;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return teacher(i, a) > teacher(i, b); });
    for (std::size_t r = 0; r < order.size(); ++r) m(i, order[r]) = r < keep ? 1.0 : gamma;
  }
  return m;
}

/// Renormalizes Z on the support {m > 0}: (Z * 1[m>0]) / (row support sum + eps).
/// Rows with no support mass come back as zero rows; their indices are
/// appended to `empty_rows` when given.
inline MatX renorm(const MatX& z, const MatX& m, double eps = kMaskEpsilon, std::vector<Eigen::Index>* empty_rows = nullptr) {
  if (z.rows() != m.rows() || z.cols() != m.cols()) throw Error(Errc::shape_mismatch, "renorm shapes differ");
  MatX out = MatX::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      if (m(i, j) > 0.0) sum += z(i, j);
    if (!(sum > 0.0) && empty_rows) empty_rows->push_back(i);
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      if (m(i, j) > 0.0) out(i, j) = z(i, j) / (sum + eps);
  }
  return out;
}

/// Masked average sum(f * m) / (sum(m) / N).
inline double masked_avg(const MatX& f, const MatX& m) {
  if (f.rows() != m.rows() || f.cols() != m.cols()) throw Error(Errc::shape_mismatch, "masked_avg shapes differ");
  const double msum = m.sum();
  if (!(msum > 0.0)) throw Error(Errc::zero_mask, "mask has no active entries");
  return f.cwiseProduct(m).sum() / (msum / static_cast<double>(m.rows()));
}

/// Distance from p to the closed segment [a, b].
inline double point_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Point teacher W^T with its Top-K_s mask.
struct MaskedTeacher {
  MatX weights;  // N x J, zero on invalid joints
  MatX mask;     // N x J, values in {0, gamma, 1}
  std::vector<bool> valid;
  int top_k = kDefaultTopK;
  double gamma = kDefaultGamma;
  double epsilon = kMaskEpsilon;

  /// Masked-and-renormalized teacher.
  MatX target() const { return renorm(weights, mask, epsilon); }
};

/// Builds the masked point teacher from a vertex teacher (N_v x J).
inline MaskedTeacher make_teacher(const MatX& vertex_teacher, const SurfaceSamples& samples, const std::vector<Face>& faces,
                                  const std::vector<bool>& valid, int top_k = kDefaultTopK, double gamma = kDefaultGamma,
                                  double epsilon = kMaskEpsilon) {
  MaskedTeacher t;
  t.weights = barycentric_transfer(vertex_teacher, samples, faces);
  for (std::size_t j = 0; j < valid.size(); ++j)
    if (!valid[j]) t.weights.col(static_cast<Eigen::Index>(j)).setZero();
  t.mask = build_mask(t.weights, valid, top_k, gamma);
  t.valid = valid;
  t.top_k = top_k;
  t.gamma = gamma;
  t.epsilon = epsilon;
  return t;
}

}  // namespace sprig
