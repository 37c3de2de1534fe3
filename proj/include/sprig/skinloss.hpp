#pragma once

// Articulation-invariant skinning objective: masked symmetric KL, masked L1
// and anchor terms against the renormalized teacher, plus masked entropy and
// a time-averaged exponential proximity prior. Includes the analytic
// gradient for the softmax-linear toy predictor.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sprig/parallel.hpp"
#include "sprig/skinops.hpp"

namespace sprig {

struct SkinLossWeights {
  double lambda_sym = 1.0;
  double lambda_1 = 1.0;
  double lambda_anchor = 0.25;
  double lambda_ent = 0.02;
  double lambda_prior = 0.1;
  double beta = 15.0;
  int warmup_epochs = 5;
  std::vector<std::size_t> prior_window;  // empty: every frame

  /// lambda_prior * min(1, epoch / T).
  double prior_weight(int epoch) const {
    if (warmup_epochs <= 0) return lambda_prior;
    return lambda_prior * std::min(1.0, static_cast<double>(std::max(epoch, 0)) / warmup_epochs);
  }

  void check() const {
    for (double v : {lambda_sym, lambda_1, lambda_anchor, lambda_ent, lambda_prior})
      if (!(std::isfinite(v) && v >= 0.0)) throw Error(Errc::invalid_argument, "loss weights must be finite and >= 0");
    if (!(std::isfinite(beta) && beta > 0.0)) throw Error(Errc::invalid_argument, "beta must be > 0");
    if (warmup_epochs < 0) throw Error(Errc::invalid_argument, "warmup epochs must be >= 0");
  }
};

namespace detail {

inline double floor_log(double p, double eps) { return std::log(std::max(p, eps)); }

inline void check_same(const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(Errc::shape_mismatch, "matrix shapes differ");
}

}  // namespace detail

/// <KL(P||Q) + KL(Q||P), m> with probabilities floored at eps inside logs.
inline double sym_kl(const MatX& p, const MatX& q, const MatX& m, double eps = kMaskEpsilon) {
  detail::check_same(p, q);
  detail::check_same(p, m);
  MatX f(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      f(i, j) = (p(i, j) - q(i, j)) * (detail::floor_log(p(i, j), eps) - detail::floor_log(q(i, j), eps));
  return masked_avg(f, m);
}

inline double masked_l1(const MatX& p, const MatX& q, const MatX& m) {
  detail::check_same(p, q);
  detail::check_same(p, m);
  return masked_avg((p - q).cwiseAbs(), m);
}

/// -<P log P, m> with the eps floor inside the log.
inline double masked_entropy(const MatX& p, const MatX& m, double eps = kMaskEpsilon) {
  detail::check_same(p, m);
  MatX f(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) f(i, j) = -p(i, j) * detail::floor_log(p(i, j), eps);
  return masked_avg(f, m);
}

/// <KL(P||Q), m>, elementwise P (log P - log Q) with the eps floor.
inline double masked_kl(const MatX& p, const MatX& q, const MatX& m, double eps = kMaskEpsilon) {
  detail::check_same(p, q);
  detail::check_same(p, m);
  MatX f(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      f(i, j) = p(i, j) * (detail::floor_log(p(i, j), eps) - detail::floor_log(q(i, j), eps));
  return masked_avg(f, m);
}

/// Bone segment of joint j: (X[j], X[parent(j)]); roots degenerate to a point.
inline std::pair<Vec3, Vec3> joint_bone(const Skeleton& s, std::size_t j) {
  const int p = s.parent_of(j);
  return {s.joints[j], p >= 0 ? s.joints[static_cast<std::size_t>(p)] : s.joints[j]};
}

/// Exponential proximity prior, softmax of -beta * point-to-bone distance
/// over valid joints, averaged over the frames of `window` (empty = all).
inline MatX geometric_prior(const SurfaceSamples& samples, const Skeleton& skeleton, const std::vector<bool>& valid,
                            double beta, const std::vector<std::size_t>& window = {}) {
  const std::size_t joints = skeleton.size();
  if (valid.size() != joints) throw Error(Errc::shape_mismatch, "valid mask length differs from joint count");
  if (std::none_of(valid.begin(), valid.end(), [](bool b) { return b; }))
    throw Error(Errc::no_valid_bones, "no valid joint to build a bone from");
  if (!(beta > 0.0)) throw Error(Errc::invalid_argument, "beta must be > 0");
  std::vector<std::size_t> frames = window;
  if (frames.empty())
    for (std::size_t k = 0; k < samples.frame_count(); ++k) frames.push_back(k);
  for (auto k : frames)
    if (k >= samples.frame_count()) throw Error(Errc::invalid_argument, "prior window frame out of range");

  std::vector<std::pair<Vec3, Vec3>> bones(joints);
  for (std::size_t j = 0; j < joints; ++j) bones[j] = joint_bone(skeleton, j);

  const auto n = static_cast<Eigen::Index>(samples.count());
  MatX avg = MatX::Zero(n, static_cast<Eigen::Index>(joints));
  std::vector<double> d(joints);
  for (auto k : frames) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3& e = samples.positions[k][static_cast<std::size_t>(i)];
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < joints; ++j)
        if (valid[j]) {
          d[j] = point_to_segment(e, bones[j].first, bones[j].second);
          dmin = std::min(dmin, d[j]);
        }
      double z = 0.0;
      for (std::size_t j = 0; j < joints; ++j)
        if (valid[j]) z += std::exp(-beta * (d[j] - dmin));
      for (std::size_t j = 0; j < joints; ++j)
        if (valid[j]) avg(i, static_cast<Eigen::Index>(j)) += std::exp(-beta * (d[j] - dmin)) / z;
    }
  }
  return avg / static_cast<double>(frames.size());
}

struct SkinLossBreakdown {
  double total = 0.0;
  double sym = 0.0;
  double l1 = 0.0;
  double anchor = 0.0;
  double ent = 0.0;
  double prior = 0.0;
  double prior_weight = 0.0;  // effective lambda_prior after warmup
};

/// Full skinning objective for per-frame predictions preds[0..K] (frame 0 is
/// the anchor). Outer consistency/regularization weights are fixed at 1.
inline SkinLossBreakdown skin_total_loss(const std::vector<MatX>& preds, const MaskedTeacher& teacher,
                                         const MatX& prior_avg, const SkinLossWeights& w, int epoch) {
  w.check();
  if (preds.empty()) throw Error(Errc::too_few_frames, "no predictions");
  const auto& m = teacher.mask;
  const double eps = teacher.epsilon;
  const MatX y = teacher.target();
  const MatX prior = renorm(prior_avg, m, eps);
  const std::size_t frames = preds.size();

  SkinLossBreakdown out;
  for (std::size_t k = 0; k < frames; ++k) {
    const MatX p = renorm(preds[k], m, eps);
    if (k == 0) {
      out.anchor = masked_l1(p, y, m);
    } else {
      out.sym += sym_kl(y, p, m, eps);
      out.l1 += masked_l1(p, y, m);
    }
    out.ent += masked_entropy(p, m, eps);
    out.prior += masked_kl(prior, p, m, eps);
  }
  if (frames > 1) {
    out.sym /= static_cast<double>(frames - 1);
    out.l1 /= static_cast<double>(frames - 1);
  }
  out.prior_weight = w.prior_weight(epoch);
  out.total = w.lambda_sym * out.sym + w.lambda_1 * out.l1 + w.lambda_anchor * out.anchor + w.lambda_ent * out.ent +
              out.prior_weight * out.prior;
  return out;
}

// ---------------------------------------------------------------------------
// Toy predictor: W[i,:] = masked softmax over valid joints of A * phi(u_i),
// phi(u) = cos(Omega u + phase).

inline constexpr int kDefaultFeatures = 64;
inline constexpr double kDefaultFrequencySigma = 4.0;

struct ToyModelParams {
  MatX head;                // J x F
  MatX frequencies;         // F x 6
  Eigen::VectorXd phases;   // F
  std::vector<bool> valid;  // J

  Eigen::Index joints() const { return head.rows(); }
  Eigen::Index features() const { return head.cols(); }

  /// N x F random Fourier features of an N x 6 query matrix.
  MatX feature_map(const MatX& queries) const {
    if (queries.cols() != frequencies.cols()) throw Error(Errc::shape_mismatch, "query width differs from feature spec");
    MatX arg = queries * frequencies.transpose();
    arg.rowwise() += phases.transpose();
    return arg.array().cos().matrix();
  }

  /// Zero head, frequencies ~ N(0, sigma^2), phases ~ U[0, 2 pi).
  static ToyModelParams make(int joints, int features, std::vector<bool> valid, std::uint64_t seed,
                             double frequency_sigma = kDefaultFrequencySigma) {
    if (joints < 1 || features < 1) throw Error(Errc::invalid_argument, "toy model needs J >= 1 and F >= 1");
    if (static_cast<int>(valid.size()) != joints) throw Error(Errc::shape_mismatch, "valid mask length differs from J");
    ToyModelParams m;
    Rng rng(seed);
    m.head = MatX::Zero(joints, features);
    m.frequencies.resize(features, 6);
    for (Eigen::Index f = 0; f < features; ++f)
      for (Eigen::Index c = 0; c < 6; ++c) m.frequencies(f, c) = rng.normal(0.0, frequency_sigma);
    m.phases.resize(features);
    for (Eigen::Index f = 0; f < features; ++f) m.phases[f] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    m.valid = std::move(valid);
    return m;
  }
};

namespace detail {

/// Masked softmax of one logit row; invalid joints get exactly 0.
inline void masked_softmax_row(const double* z, const std::vector<bool>& valid, double* out, Eigen::Index joints) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < joints; ++j)
    if (valid[j]) mx = std::max(mx, z[j]);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < joints; ++j) {
    out[j] = valid[j] ? std::exp(z[j] - mx) : 0.0;
    sum += out[j];
  }
  for (Eigen::Index j = 0; j < joints; ++j) out[j] /= sum;
}

}  // namespace detail

/// N x J row-stochastic prediction for one frame.
inline MatX predict(const ToyModelParams& model, const MatX& queries) {
  if (std::none_of(model.valid.begin(), model.valid.end(), [](bool b) { return b; }))
    throw Error(Errc::no_valid_joints, "toy model has no valid joint");
  const MatX phi = model.feature_map(queries);
  const MatX logits = phi * model.head.transpose();  // N x J
  const Eigen::Index joints = model.joints();
  MatX out(logits.rows(), joints);
  std::vector<double> z(static_cast<std::size_t>(joints)), p(static_cast<std::size_t>(joints));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < joints; ++j) z[j] = logits(i, j);
    detail::masked_softmax_row(z.data(), model.valid, p.data(), joints);
    for (Eigen::Index j = 0; j < joints; ++j) out(i, j) = p[j];
  }
  return out;
}

struct SkinBatch {
  std::vector<MatX> queries;  // per frame, N x 6; frame 0 is the anchor
  MaskedTeacher teacher;
  MatX prior_avg;
  SkinLossWeights weights;
  int epoch = 0;
};

struct SkinGradient {
  MatX d_head;  // J x F
  SkinLossBreakdown loss;
};

/// Exact gradient of skin_total_loss with respect to the toy head, through
/// the masked renormalization and the masked softmax. The mask, teacher and
/// prior are constants. Points are processed in fixed blocks whose partial
/// sums are reduced in block order, so the result does not depend on the
/// thread count.
inline SkinGradient skin_loss_gradient(const ToyModelParams& model, const SkinBatch& batch, int threads = 1) {
  const auto& w = batch.weights;
  w.check();
  const auto& m = batch.teacher.mask;
  const double eps = batch.teacher.epsilon;
  const std::size_t frames = batch.queries.size();
  if (frames == 0) throw Error(Errc::too_few_frames, "no frames in batch");
  const Eigen::Index n = m.rows();
  const Eigen::Index joints = m.cols();
  if (joints != model.joints()) throw Error(Errc::shape_mismatch, "mask columns differ from model joints");
  for (const auto& q : batch.queries)
    if (q.rows() != n) throw Error(Errc::shape_mismatch, "query rows differ from mask rows");
  detail::check_same(batch.prior_avg, m);
  const double msum = m.sum();
  if (!(msum > 0.0)) throw Error(Errc::zero_mask, "mask has no active entries");
  const double c = static_cast<double>(n) / msum;

  const MatX y = batch.teacher.target();
  const MatX prior = renorm(batch.prior_avg, m, eps);
  const double prior_w = w.prior_weight(batch.epoch);
  const double non_anchor = frames > 1 ? 1.0 / static_cast<double>(frames - 1) : 0.0;

  std::vector<MatX> phi(frames);
  for (std::size_t k = 0; k < frames; ++k) phi[k] = model.feature_map(batch.queries[k]);
  const Eigen::Index feats = model.features();

  constexpr Eigen::Index block = 64;
  const auto blocks = static_cast<std::size_t>((n + block - 1) / block);
  struct Partial {
    MatX d_head;
    double sym = 0, l1 = 0, anchor = 0, ent = 0, prior = 0;
  };
  std::vector<Partial> partial(blocks);

  parallel_for(blocks, threads, [&](std::size_t b) {
    Partial& acc = partial[b];
    acc.d_head = MatX::Zero(joints, feats);
    const Eigen::Index lo = static_cast<Eigen::Index>(b) * block;
    const Eigen::Index hi = std::min(n, lo + block);
    std::vector<double> z(joints), wh(joints), p(joints), gp(joints), gz(joints);
    for (std::size_t k = 0; k < frames; ++k) {
      for (Eigen::Index i = lo; i < hi; ++i) {
        for (Eigen::Index j = 0; j < joints; ++j) z[j] = phi[k].row(i).dot(model.head.row(j));
        detail::masked_softmax_row(z.data(), model.valid, wh.data(), joints);

        double support = 0.0;
        for (Eigen::Index j = 0; j < joints; ++j)
          if (m(i, j) > 0.0) support += wh[j];
        for (Eigen::Index j = 0; j < joints; ++j) p[j] = m(i, j) > 0.0 ? wh[j] / (support + eps) : 0.0;

        for (Eigen::Index j = 0; j < joints; ++j) {
          const double mij = m(i, j);
          gp[j] = 0.0;
          if (mij == 0.0) continue;
          const double pj = p[j];
          const double yj = y(i, j);
          const double lp = detail::floor_log(pj, eps);
          const double ly = detail::floor_log(yj, eps);
          const double above = pj > eps ? 1.0 : 0.0;
          const double sgn = pj > yj ? 1.0 : (pj < yj ? -1.0 : 0.0);
          const double cm = c * mij;
          if (k == 0) {
            acc.anchor += cm * std::abs(pj - yj);
            gp[j] += w.lambda_anchor * cm * sgn;
          } else {
            acc.sym += non_anchor * cm * (yj - pj) * (ly - lp);
            acc.l1 += non_anchor * cm * std::abs(pj - yj);
            gp[j] += w.lambda_sym * non_anchor * cm * (lp + above - ly - (above > 0.0 ? yj / pj : 0.0));
            gp[j] += w.lambda_1 * non_anchor * cm * sgn;
          }
          acc.ent += -cm * pj * lp;
          gp[j] += w.lambda_ent * cm * -(lp + above);
          const double pr = prior(i, j);
          acc.prior += cm * pr * (detail::floor_log(pr, eps) - lp);
          if (above > 0.0) gp[j] += prior_w * cm * -(pr / pj);
        }

        // renorm: dL/dw_l = s_l / (S + eps) * (g_l - sum_j g_j p_j)
        double gdotp = 0.0;
        for (Eigen::Index j = 0; j < joints; ++j) gdotp += gp[j] * p[j];
        double gdotw = 0.0;
        for (Eigen::Index j = 0; j < joints; ++j) {
          const double gw = m(i, j) > 0.0 ? (gp[j] - gdotp) / (support + eps) : 0.0;
          gz[j] = gw;  // holds dL/dW until the softmax step below
          gdotw += gw * wh[j];
        }
        // softmax: dL/dz_l = w_l (g_l - sum_j w_j g_j)
        for (Eigen::Index j = 0; j < joints; ++j) gz[j] = wh[j] * (gz[j] - gdotw);
        for (Eigen::Index j = 0; j < joints; ++j)
          if (gz[j] != 0.0) acc.d_head.row(j) += gz[j] * phi[k].row(i);
      }
    }
  });

  SkinGradient out;
  out.d_head = MatX::Zero(joints, feats);
  for (const auto& part : partial) {
    out.d_head += part.d_head;
    out.loss.sym += part.sym;
    out.loss.l1 += part.l1;
    out.loss.anchor += part.anchor;
    out.loss.ent += part.ent;
    out.loss.prior += part.prior;
  }
  out.loss.prior_weight = prior_w;
  out.loss.total = w.lambda_sym * out.loss.sym + w.lambda_1 * out.loss.l1 + w.lambda_anchor * out.loss.anchor +
                   w.lambda_ent * out.loss.ent + prior_w * out.loss.prior;
  if (!out.d_head.allFinite()) throw Error(Errc::nonfinite_gradient, "gradient has non-finite entries");
  return out;
}

}  // namespace sprig
