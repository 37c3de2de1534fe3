#pragma once

// The `sprig` command line: generation, loss and metric evaluation, the toy
// fine-tuning demo and report formatting.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sprig/sprig.hpp"

namespace sprig::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

struct Globals {
  std::uint64_t seed = 42;
  int threads = 0;
};

inline void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(out, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + out);
  os << text;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Clip files named by `inputs`; directories contribute their *.json files
/// in name order.
inline std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.push_back(in);
    }
  }
  if (out.empty()) throw Error(Errc::io_error, "no clip files found");
  return out;
}

inline RigClip load_clip(const std::string& path) {
  std::vector<std::string> warnings;
  RigClip clip = read_clip_file(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << path << ": " << w << '\n';
  const auto report = validate_clip(clip);
  for (const auto& v : report.violations) {
    if (v.severity == Severity::warning) std::cerr << "warning: " << path << ": " << v.code << ": " << v.message << '\n';
  }
  for (const auto& v : report.violations)
    if (v.severity == Severity::error) throw Error(Errc::invalid_argument, path + ": " + v.code + ": " + v.message);
  return clip;
}

inline std::map<std::string, RigClip> load_gt(const std::vector<std::string>& gt_inputs) {
  std::map<std::string, RigClip> out;
  if (gt_inputs.empty()) return out;
  for (const auto& f : expand_inputs(gt_inputs)) {
    auto c = load_clip(f);
    out[c.clip_id] = std::move(c);
  }
  return out;
}

inline std::string format_report(const MetricReport& r, const std::string& format) {
  std::ostringstream os;
  if (format == "csv") {
    write_report_csv(os, r);
  } else if (format == "md") {
    write_report_md(os, r);
  } else {
    os << dump(report_to_json(r));
  }
  return os.str();
}

inline json loss_json(const SkinLossBreakdown& b) {
  return {{"total", b.total}, {"sym", b.sym}, {"l1", b.l1}, {"anchor", b.anchor}, {"ent", b.ent}, {"prior", b.prior}};
}

inline void add_skin_weight_options(CLI::App* sub, SkinLossWeights& w) {
  sub->add_option("--lambda-sym", w.lambda_sym, "weight of the symmetric KL consistency term");
  sub->add_option("--lambda-l1", w.lambda_1, "weight of the masked L1 consistency term");
  sub->add_option("--lambda-anchor", w.lambda_anchor, "weight of the anchor-frame L1 term");
  sub->add_option("--lambda-ent", w.lambda_ent, "weight of the masked entropy regularizer");
  sub->add_option("--lambda-prior", w.lambda_prior, "weight of the proximity prior KL after warmup");
  sub->add_option("--beta", w.beta, "sharpness of the exponential proximity prior")->check(CLI::PositiveNumber);
  sub->add_option("--warmup", w.warmup_epochs, "linear warmup length of the prior weight, in epochs")
      ->check(CLI::NonNegativeNumber);
}

inline void add_mask_options(CLI::App* sub, SkinEvalOptions& o) {
  sub->add_option("--samples", o.samples, "surface samples per clip")->check(CLI::PositiveNumber);
  sub->add_option("--top-k", o.top_k, "teacher support size K_s per point")->check(CLI::PositiveNumber);
  sub->add_option("--gamma", o.gamma, "mask value outside the top-K support")->check(CLI::Range(0.0, 0.999999));
}

inline int run(int argc, char** argv) {
  CLI::App app{"sprig: temporal consistency toolkit for skeletal rigs and skinning weights"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "seed for every stochastic stage; per-clip streams hash the clip id");
  app.add_option("--threads", g.threads, "worker threads, 0 = hardware concurrency")->check(CLI::NonNegativeNumber);

  std::function<void()> action;

  // synth-gen
  SynthConfig synth;
  std::string topology = "two_branch";
  std::string synth_out;
  int synth_count = 1;
  double synth_noise = 0.0;
  auto* sg = app.add_subcommand("synth-gen", "generate synthetic animated clips with ground-truth skinning");
  sg->add_option("--out", synth_out, "output file, or directory when --count > 1")->required();
  sg->add_option("--count", synth_count, "number of clips (seeds seed, seed+1, ...)")->check(CLI::PositiveNumber);
  sg->add_option("--joints", synth.joints, "joint count")->check(CLI::Range(2, 4096));
  sg->add_option("--topology", topology, "chain | two_branch")->check(CLI::IsMember({"chain", "two_branch"}));
  sg->add_option("--amplitude", synth.amplitude, "swing amplitude in radians, [0, pi)");
  sg->add_option("--frames", synth.frames, "frames including the anchor")->check(CLI::PositiveNumber);
  sg->add_option("--tube-radius", synth.tube_radius, "tube radius around each bone before normalization");
  sg->add_option("--tube-segments", synth.tube_segments, "tube vertices around a bone");
  sg->add_option("--tube-rings", synth.tube_rings, "tube rings along a bone");
  sg->add_flag("--global-motion", synth.global_motion, "apply a random rigid motion to every non-anchor frame");
  sg->add_option("--noise", synth_noise, "Gaussian noise sigma on non-anchor frames")->check(CLI::NonNegativeNumber);
  sg->add_option("--clip-id", synth.clip_id, "clip id (default synth_<seed>)");
  sg->callback([&] {
    action = [&] {
      synth.topology = topology == "chain" ? Topology::chain : Topology::two_branch;
      if (synth_count > 1) fs::create_directories(synth_out);
      for (int i = 0; i < synth_count; ++i) {
        SynthConfig c = synth;
        c.seed = g.seed + static_cast<std::uint64_t>(i);
        if (synth_count > 1 && !c.clip_id.empty()) c.clip_id += "_" + std::to_string(i);
        auto clip = perturb_clip(generate_clip(c), synth_noise, g.seed);
        if (synth_count > 1) {
          char name[32];
          std::snprintf(name, sizeof name, "clip_%04d.json", i);
          write_clip_file((fs::path(synth_out) / name).string(), clip);
        } else {
          write_clip_file(synth_out, clip);
        }
      }
    };
  });

  // perturb
  std::string pin, pout;
  double sigma = 0.02;
  auto* pt = app.add_subcommand("perturb", "add Gaussian noise to the non-anchor frames of a clip");
  pt->add_option("--in", pin, "input clip")->required()->check(CLI::ExistingFile);
  pt->add_option("--out", pout, "output clip")->required();
  pt->add_option("--sigma", sigma, "noise standard deviation")->check(CLI::NonNegativeNumber);
  pt->callback([&] { action = [&] { write_clip_file(pout, perturb_clip(load_clip(pin), sigma, g.seed)); }; });

  // tokenize
  std::string tin, tout;
  int tframe = 0;
  int bins = kDefaultBins;
  auto* tk = app.add_subcommand("tokenize", "quantize one skeleton frame into (x, y, z, parent) token quadruples");
  tk->add_option("--in", tin, "input clip")->required()->check(CLI::ExistingFile);
  tk->add_option("--frame", tframe, "frame index")->check(CLI::NonNegativeNumber);
  tk->add_option("--bins", bins, "coordinate bins n_disc")->check(CLI::Range(2, 1 << 20));
  tk->add_option("--out", tout, "output token JSON (default stdout)");
  tk->callback([&] {
    action = [&] {
      const auto clip = load_clip(tin);
      if (static_cast<std::size_t>(tframe) >= clip.frame_count()) throw Error(Errc::invalid_argument, "frame out of range");
      const auto t = tokenize(clip.skeleton_frames[static_cast<std::size_t>(tframe)], bins);
      emit(tout, dump({{"n_disc", t.n_disc}, {"tokens", t.flatten()}}));
    };
  });

  // detokenize
  std::string din, dout;
  auto* dt = app.add_subcommand("detokenize", "decode token quadruples into a skeleton");
  dt->add_option("--in", din, "token JSON written by tokenize")->required()->check(CLI::ExistingFile);
  dt->add_option("--out", dout, "output skeleton JSON (default stdout)");
  dt->callback([&] {
    action = [&] {
      std::ifstream is(din);
      json j;
      std::vector<int> flat;
      TokenSequence t;
      try {
        is >> j;
        t.n_disc = j.at("n_disc").get<int>();
        flat = j.at("tokens").get<std::vector<int>>();
      } catch (const json::exception& e) {
        throw Error(Errc::parse_error, e.what());
      }
      if (flat.size() % 4 != 0) throw Error(Errc::shape_mismatch, "token count is not a multiple of 4");
      for (std::size_t i = 0; i < flat.size(); i += 4) t.quads.push_back({flat[i], flat[i + 1], flat[i + 2], flat[i + 3]});
      const auto s = detokenize(t);
      json joints = json::array();
      for (const auto& p : s.joints) joints.push_back({p.x(), p.y(), p.z()});
      emit(dout, dump({{"joints", joints}, {"parents", s.parents}}));
    };
  });

  // skel-loss
  std::string sl_clip, sl_anchor_logits, sl_out;
  std::vector<std::string> sl_frame_logits;
  TokenLossWeights tw;
  GeomLossConfig gc;
  double lambda_geom = 1.0;
  std::string alignment = "structure_tensor";
  int sl_bins = kDefaultBins;
  auto* skl = app.add_subcommand("skel-loss", "token and geometry skeleton losses of a clip");
  skl->add_option("--clip", sl_clip, "clip whose frames are the predicted skeletons")->required()->check(CLI::ExistingFile);
  skl->add_option("--anchor-logits", sl_anchor_logits, "SPRL logits for the anchor pass")->check(CLI::ExistingFile);
  skl->add_option("--frame-logits", sl_frame_logits, "SPRL logits per non-anchor frame")->check(CLI::ExistingFile);
  skl->add_option("--bins", sl_bins, "coordinate bins n_disc of the targets")->check(CLI::Range(2, 1 << 20));
  skl->add_option("--alpha", tw.alpha, "parent-slot weight in the token cross entropy")->check(CLI::Range(1.0, 1e9));
  skl->add_option("--lambda-token-anchor", tw.lambda_anchor, "weight of the anchor token term");
  skl->add_option("--lambda-token-sym", tw.lambda_sym, "weight of the cross-frame token term");
  skl->add_option("--rho", gc.rho, "fraction of longest edges kept for the directional term")->check(CLI::Range(1e-9, 1.0));
  skl->add_option("--lambda-dir", gc.lambda_dir, "weight of the directional term");
  skl->add_option("--lambda-len", gc.lambda_len, "weight of the length term");
  skl->add_option("--lambda-ch", gc.lambda_ch, "weight of the endpoint Chamfer term");
  skl->add_option("--lambda-geom", lambda_geom, "weight of the geometry loss in the total");
  skl->add_option("--alignment", alignment, "structure_tensor | kabsch")->check(CLI::IsMember({"structure_tensor", "kabsch"}));
  skl->add_option("--out", sl_out, "output JSON (default stdout)");
  skl->callback([&] {
    action = [&] {
      const auto clip = load_clip(sl_clip);
      gc.alignment = alignment == "kabsch" ? AlignmentMode::kabsch : AlignmentMode::structure_tensor;
      json out;
      double total = 0.0;
      const std::vector<Skeleton> frames(clip.skeleton_frames.begin() + 1, clip.skeleton_frames.end());
      if (!frames.empty()) {
        const auto gl = geom_loss(clip.anchor(), frames, gc);
        json per = json::array();
        for (const auto& f : gl.per_frame)
          per.push_back({{"dir", f.dir}, {"len", f.len}, {"ch", f.ch}, {"total", f.total},
                         {"degenerate_frame", f.degenerate_frame}, {"degenerate_alignment", f.degenerate_alignment},
                         {"used_kabsch", f.used_kabsch}});
        out["geom"] = {{"total", gl.total}, {"per_frame", per}};
        total += lambda_geom * gl.total;
      } else {
        out["geom"] = nullptr;
      }
      if (!sl_anchor_logits.empty()) {
        const auto targets = tokenize(clip.anchor(), sl_bins);
        std::vector<SlotLogits> fl;
        for (const auto& f : sl_frame_logits) fl.push_back(read_logits_file(f));
        const auto tl = token_loss(read_logits_file(sl_anchor_logits), fl, targets, tw);
        out["token"] = {{"total", tl.total}, {"anchor", tl.anchor_term}, {"sym", tl.sym_term}};
        total += tl.total;
      } else {
        out["token"] = nullptr;
      }
      out["total"] = total;
      emit(sl_out, dump(out));
    };
  });

  // skin-loss
  std::string sk_clip, sk_gt, sk_out;
  SkinLossWeights sw;
  SkinEvalOptions sk_opt;
  int epoch = 0;
  auto* skn = app.add_subcommand("skin-loss", "skinning objective of a clip's per-frame weights against an anchor teacher");
  skn->add_option("--clip", sk_clip, "clip whose skin_weights are the per-frame predictions")->required()->check(CLI::ExistingFile);
  skn->add_option("--gt", sk_gt, "clip providing the anchor teacher weights (default: the clip's own frame 0)")
      ->check(CLI::ExistingFile);
  add_mask_options(skn, sk_opt);
  add_skin_weight_options(skn, sw);
  skn->add_option("--epoch", epoch, "epoch used for the prior warmup")->check(CLI::NonNegativeNumber);
  skn->add_option("--out", sk_out, "output JSON (default stdout)");
  skn->callback([&] {
    action = [&] {
      const auto clip = load_clip(sk_clip);
      std::optional<RigClip> gt;
      if (!sk_gt.empty()) gt = load_clip(sk_gt);
      if (!clip.has_mesh()) throw Error(Errc::no_mesh, "clip has no mesh frames");
      if (!clip.skin_weights) throw Error(Errc::invalid_argument, "clip has no skin weights");
      const auto samples = sample_surface(clip, sk_opt.samples, g.seed);
      const auto& src = gt && gt->skin_weights ? gt->skin_weights->front() : clip.skin_weights->front();
      const auto valid = clip.valid_or_all();
      const auto teacher = make_teacher(src, samples, *clip.faces, valid, sk_opt.top_k, sk_opt.gamma);
      const auto prior = geometric_prior(samples, clip.anchor(), valid, sw.beta, sw.prior_window);
      std::vector<MatX> preds;
      for (const auto& w : *clip.skin_weights) preds.push_back(barycentric_transfer(w, samples, *clip.faces));
      emit(sk_out, dump(loss_json(skin_total_loss(preds, teacher, prior, sw, epoch))));
    };
  });

  // skel-metrics / skin-metrics
  std::vector<std::string> m_in, m_gt;
  std::string m_format = "json", m_out;
  auto add_metric_io = [&](CLI::App* sub) {
    sub->add_option("--in", m_in, "clip files or directories")->required()->check(CLI::ExistingPath);
    sub->add_option("--gt", m_gt, "ground-truth clips matched by clip_id")->check(CLI::ExistingPath);
    sub->add_option("--format", m_format, "json | csv | md")->check(CLI::IsMember({"json", "csv", "md"}));
    sub->add_option("--out", m_out, "output file (default stdout)");
  };
  auto evaluate = [&](bool skeleton, bool skin, const SkinEvalOptions& so) {
    const auto files = expand_inputs(m_in);
    const auto gt = load_gt(m_gt);
    std::vector<ClipMetrics> rows(files.size());
    std::vector<MetricReport> logs(files.size());
    parallel_for(files.size(), g.threads, [&](std::size_t i) {
      const auto clip = load_clip(files[i]);
      const auto it = gt.find(clip.clip_id);
      const RigClip* ref = it == gt.end() ? nullptr : &it->second;
      ClipMetrics m;
      m.clip_id = clip.clip_id;
      if (skeleton) m = skeleton_metrics(clip, ref, &logs[i]);
      if (skin) {
        SkinEvalOptions o = so;
        o.seed = g.seed;
        add_skin_metrics(m, clip, ref, o, &logs[i]);
      }
      rows[i] = std::move(m);
    });
    std::vector<std::size_t> order(files.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rows[a].clip_id < rows[b].clip_id; });
    MetricReport r;
    for (auto i : order) {
      r.clips.push_back(std::move(rows[i]));
      for (auto& s : logs[i].skipped) r.skipped.push_back(std::move(s));
    }
    emit(m_out, format_report(r, m_format));
  };
  auto* skm = app.add_subcommand("skel-metrics", "temporal skeleton metrics, plus static metrics with --gt");
  add_metric_io(skm);
  skm->callback([&] { action = [&] { evaluate(true, false, {}); }; });
  SkinEvalOptions skm_opt;
  auto* snm = app.add_subcommand("skin-metrics", "teacher-based skinning consistency metrics");
  add_metric_io(snm);
  add_mask_options(snm, skm_opt);
  snm->callback([&] { action = [&] { evaluate(false, true, skm_opt); }; });

  // demo-finetune
  std::string df_clip, df_trace, df_out;
  double df_sigma = 0.02;
  SkinLossWeights dw;
  SkinEvalOptions df_mask;
  FinetuneOptions fo;
  auto* df = app.add_subcommand("demo-finetune", "fine-tune the toy skinning predictor with the consistency objective");
  df->add_option("--clip", df_clip, "input clip (default: the synthetic demo clip perturbed by --sigma)")
      ->check(CLI::ExistingFile);
  df->add_option("--sigma", df_sigma, "perturbation of the default demo clip")->check(CLI::NonNegativeNumber);
  df->add_option("--lr", fo.lr, "gradient-descent step size")->check(CLI::NonNegativeNumber);
  df->add_option("--steps", fo.steps, "gradient-descent steps")->check(CLI::NonNegativeNumber);
  df->add_option("--features", fo.features, "random Fourier features F")->check(CLI::PositiveNumber);
  df->add_option("--frequency-sigma", fo.frequency_sigma, "std of the random Fourier frequencies")
      ->check(CLI::PositiveNumber);
  add_mask_options(df, df_mask);
  add_skin_weight_options(df, dw);
  df->add_option("--trace-out", df_trace, "per-step loss CSV");
  df->add_option("--out", df_out, "before/after report JSON (default stdout)");
  df->callback([&] {
    action = [&] {
      const RigClip clip = df_clip.empty() ? perturb_clip(generate_clip(demo_config(g.seed)), df_sigma, g.seed) : load_clip(df_clip);
      fo.seed = g.seed;
      fo.threads = g.threads;
      const auto problem = make_skin_problem(clip, df_mask.samples, g.seed, dw, df_mask.top_k, df_mask.gamma);
      const auto res = finetune(problem, clip.valid_or_all(), dw, fo, clip.clip_id);
      if (!df_trace.empty()) {
        std::ostringstream os;
        os << "step,total,sym,l1,anchor,ent,prior\n";
        for (std::size_t s = 0; s < res.trace.size(); ++s) {
          const auto& b = res.trace[s];
          os << s << ',' << format12(b.total) << ',' << format12(b.sym) << ',' << format12(b.l1) << ','
             << format12(b.anchor) << ',' << format12(b.ent) << ',' << format12(b.prior) << '\n';
        }
        emit(df_trace, os.str());
      }
      MetricReport r;
      auto row = [&](const std::string& tag, const SkinConsistency& sc, const Eigen::VectorXd& cons) {
        ClipMetrics m;
        m.clip_id = clip.clip_id + "@" + tag;
        m["skin_l1"] = sc.l1_bca;
        m["skin_symkl"] = sc.symkl_bca;
        m["skin_entropy"] = sc.entropy;
        m.cons_j.assign(cons.data(), cons.data() + cons.size());
        return m;
      };
      r.clips.push_back(row("before", res.before, res.cons_before));
      r.clips.push_back(row("after", res.after, res.cons_after));
      r.clips.back().delta_j.assign(res.delta.data(), res.delta.data() + res.delta.size());
      if (res.diverged) r.clips.back().notes.push_back("DIVERGED after " + std::to_string(res.trace.size()) + " steps");
      emit(df_out, format_report(r, "json"));
      if (res.diverged) throw Error(Errc::diverged, "non-finite loss or gradient during fine-tuning");
    };
  });

  // report
  std::vector<std::string> r_in;
  std::string r_format = "md", r_out;
  auto* rp = app.add_subcommand("report", "merge report JSON files and reformat them");
  rp->add_option("--in", r_in, "report JSON files")->required()->check(CLI::ExistingFile);
  rp->add_option("--format", r_format, "json | csv | md")->check(CLI::IsMember({"json", "csv", "md"}));
  rp->add_option("--out", r_out, "output file (default stdout)");
  rp->callback([&] {
    action = [&] {
      MetricReport merged;
      for (const auto& f : r_in) {
        std::ifstream is(f);
        json j;
        try {
          is >> j;
        } catch (const json::exception& e) {
          throw Error(Errc::parse_error, f + ": " + e.what());
        }
        auto r = report_from_json(j);
        for (auto& c : r.clips) merged.clips.push_back(std::move(c));
        for (auto& s : r.skipped) merged.skipped.push_back(std::move(s));
      }
      emit(r_out, format_report(merged, r_format));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << json{{"error", {{"code", to_string(Errc::io_error)}, {"message", e.what()}}}}.dump() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace sprig::cli
