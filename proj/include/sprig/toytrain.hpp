#pragma once

// Plain gradient-descent fine-tuning of the toy skinning predictor.

#include <cmath>
#include <cstdint>
#include <vector>

#include "sprig/rigmetrics.hpp"
#include "sprig/skinloss.hpp"

namespace sprig {

/// Everything derived from a clip that stays fixed during training.
struct SkinProblem {
  SurfaceSamples samples;
  MaskedTeacher teacher;
  MatX prior_avg;
  std::vector<MatX> queries;  // per frame, N x 6
};

/// Samples the anchor surface, transfers the anchor ground-truth weights as
/// teacher and builds the time-averaged prior on the anchor skeleton.
inline SkinProblem make_skin_problem(const RigClip& clip, std::size_t n_samples, std::uint64_t seed,
                                     const SkinLossWeights& w, int top_k = kDefaultTopK, double gamma = kDefaultGamma) {
  if (!clip.has_mesh()) throw Error(Errc::no_mesh, "clip has no mesh frames");
  if (!clip.skin_weights || clip.skin_weights->empty())
    throw Error(Errc::invalid_argument, "clip has no skin weights to use as teacher");
  SkinProblem p;
  p.samples = sample_surface(clip, n_samples, seed);
  const auto valid = clip.valid_or_all();
  p.teacher = make_teacher(clip.skin_weights->front(), p.samples, *clip.faces, valid, top_k, gamma);
  p.prior_avg = geometric_prior(p.samples, clip.anchor(), valid, w.beta, w.prior_window);
  for (std::size_t k = 0; k < p.samples.frame_count(); ++k) p.queries.push_back(p.samples.query(k));
  return p;
}

struct FinetuneOptions {
  double lr = 0.05;
  int steps = 200;
  std::uint64_t seed = 42;
  int features = kDefaultFeatures;
  double frequency_sigma = kDefaultFrequencySigma;
  int threads = 1;
};

struct FinetuneResult {
  std::vector<SkinLossBreakdown> trace;  // trace[s]: loss at the parameters after s updates
  SkinConsistency before;
  SkinConsistency after;
  Eigen::VectorXd cons_before;
  Eigen::VectorXd cons_after;
  Eigen::VectorXd delta;
  bool diverged = false;
  ToyModelParams model;
};

inline std::vector<MatX> predict_frames(const ToyModelParams& model, const std::vector<MatX>& queries) {
  std::vector<MatX> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(predict(model, q));
  return out;
}

namespace detail {

inline bool finite_breakdown(const SkinLossBreakdown& b) {
  return std::isfinite(b.total) && std::isfinite(b.sym) && std::isfinite(b.l1) && std::isfinite(b.anchor) &&
         std::isfinite(b.ent) && std::isfinite(b.prior);
}

}  // namespace detail

/// Runs `steps` updates A <- A - lr * dL/dA with epoch = step index. On a
/// non-finite loss or gradient the run stops with `diverged` set and the
/// trace recorded so far.
inline FinetuneResult finetune(const SkinProblem& problem, const std::vector<bool>& valid, const SkinLossWeights& w,
                               const FinetuneOptions& opt, const std::string& clip_id = {}) {
  w.check();
  if (!(opt.lr >= 0.0 && std::isfinite(opt.lr))) throw Error(Errc::invalid_argument, "learning rate must be finite and >= 0");
  if (opt.steps < 0) throw Error(Errc::invalid_argument, "steps must be >= 0");
  if (problem.queries.size() < 2) throw Error(Errc::too_few_frames, "fine-tuning needs a non-anchor frame");

  FinetuneResult r;
  r.model = ToyModelParams::make(static_cast<int>(valid.size()), opt.features, valid,
                                 mix_seed(opt.seed, hash_string(clip_id)), opt.frequency_sigma);
  {
    const auto preds = predict_frames(r.model, problem.queries);
    r.before = skin_consistency(preds, problem.teacher);
    r.cons_before = per_joint_variance(preds);
  }

  SkinBatch batch{problem.queries, problem.teacher, problem.prior_avg, w, 0};
  for (int s = 0; s <= opt.steps; ++s) {
    batch.epoch = s;
    SkinGradient g;
    try {
      g = skin_loss_gradient(r.model, batch, opt.threads);
    } catch (const Error& e) {
      if (e.code() != Errc::nonfinite_gradient) throw;
      r.diverged = true;
      break;
    }
    if (!detail::finite_breakdown(g.loss)) {
      r.diverged = true;
      break;
    }
    r.trace.push_back(g.loss);
    if (s == opt.steps) break;
    r.model.head -= opt.lr * g.d_head;
  }

  const auto preds = predict_frames(r.model, problem.queries);
  r.after = skin_consistency(preds, problem.teacher);
  r.cons_after = per_joint_variance(preds);
  r.delta = per_joint_delta(r.cons_before, r.cons_after);
  return r;
}

}  // namespace sprig
