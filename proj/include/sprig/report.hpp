#pragma once

// Per-clip metric records, dataset aggregation and the JSON / CSV / Markdown
// report formats.

#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sprig/rigmetrics.hpp"

namespace sprig {

inline constexpr std::array<const char*, 11> kMetricColumns = {
    "pjdd", "blrd", "gsd", "jad", "mpjpe_anchor", "cd_j2j", "cd_j2b", "cd_b2b", "skin_l1", "skin_symkl", "skin_entropy"};

struct ClipMetrics {
  std::string clip_id;
  std::array<std::optional<double>, kMetricColumns.size()> values;
  std::vector<double> cons_j;
  std::vector<double> delta_j;
  std::vector<std::string> notes;

  static std::size_t column(const std::string& name) {
    for (std::size_t c = 0; c < kMetricColumns.size(); ++c)
      if (name == kMetricColumns[c]) return c;
    throw Error(Errc::invalid_argument, "unknown metric '" + name + "'");
  }
  std::optional<double>& operator[](const std::string& name) { return values[column(name)]; }
  const std::optional<double>& operator[](const std::string& name) const { return values[column(name)]; }
};

struct SkipRecord {
  std::string clip_id;
  std::string reason;
};

struct MetricAggregate {
  double mean = 0.0;
  std::size_t count = 0;
};

struct MetricReport {
  std::vector<ClipMetrics> clips;
  std::vector<SkipRecord> skipped;
};

/// Rounds to 12 significant digits (the report's fixed float format).
inline double round12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::stod(buf);
}

inline std::string format12(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

/// Means of the rounded per-clip values in clip order, then rounded; clips
/// without a value do not count.
inline std::map<std::string, MetricAggregate> aggregate(const MetricReport& r) {
  std::map<std::string, MetricAggregate> out;
  for (std::size_t c = 0; c < kMetricColumns.size(); ++c) {
    MetricAggregate a;
    double sum = 0.0;
    for (const auto& clip : r.clips)
      if (clip.values[c]) {
        sum += round12(*clip.values[c]);
        ++a.count;
      }
    a.mean = a.count ? round12(sum / static_cast<double>(a.count)) : 0.0;
    out[kMetricColumns[c]] = a;
  }
  return out;
}

namespace detail {

inline nlohmann::json rounded(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(round12(x));
  return a;
}

template <class Fn>
inline void record(ClipMetrics& m, MetricReport* log, const std::string& name, Fn&& fn) {
  try {
    m[name] = fn();
  } catch (const Error& e) {
    const std::string why = name + ": " + e.what();
    m.notes.push_back(why);
    if (log) log->skipped.push_back({m.clip_id, why});
  }
}

}  // namespace detail

/// Canonical report JSON: keys sorted, floats at 12 significant digits,
/// absent metrics as null.
inline nlohmann::json report_to_json(const MetricReport& r) {
  using nlohmann::json;
  json clips = json::array();
  for (const auto& c : r.clips) {
    json row;
    row["clip_id"] = c.clip_id;
    for (std::size_t k = 0; k < kMetricColumns.size(); ++k)
      row[kMetricColumns[k]] = c.values[k] ? json(round12(*c.values[k])) : json(nullptr);
    row["cons_j"] = detail::rounded(c.cons_j);
    row["delta_j"] = detail::rounded(c.delta_j);
    row["notes"] = c.notes;
    clips.push_back(std::move(row));
  }
  json agg = json::object();
  for (const auto& [name, a] : aggregate(r)) agg[name] = {{"count", a.count}, {"mean", a.count ? json(a.mean) : json(nullptr)}};
  json skipped = json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"clip_id", s.clip_id}, {"reason", s.reason}});
  return {{"aggregate", agg}, {"clips", clips}, {"skipped", skipped}};
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  try {
    MetricReport r;
    for (const auto& row : j.at("clips")) {
      ClipMetrics c;
      c.clip_id = row.at("clip_id").get<std::string>();
      for (std::size_t k = 0; k < kMetricColumns.size(); ++k)
        if (row.contains(kMetricColumns[k]) && !row[kMetricColumns[k]].is_null())
          c.values[k] = row[kMetricColumns[k]].get<double>();
      if (row.contains("cons_j")) c.cons_j = row["cons_j"].get<std::vector<double>>();
      if (row.contains("delta_j")) c.delta_j = row["delta_j"].get<std::vector<double>>();
      if (row.contains("notes")) c.notes = row["notes"].get<std::vector<std::string>>();
      r.clips.push_back(std::move(c));
    }
    if (j.contains("skipped"))
      for (const auto& s : j["skipped"]) r.skipped.push_back({s.at("clip_id").get<std::string>(), s.at("reason").get<std::string>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("report: ") + e.what());
  }
}

/// One row per clip: clip_id then the metric columns; empty cell = absent.
inline void write_report_csv(std::ostream& os, const MetricReport& r) {
  os << "clip_id";
  for (const char* c : kMetricColumns) os << ',' << c;
  os << '\n';
  for (const auto& c : r.clips) {
    os << c.clip_id;
    for (const auto& v : c.values) {
      os << ',';
      if (v) os << format12(round12(*v));
    }
    os << '\n';
  }
}

inline void write_report_md(std::ostream& os, const MetricReport& r) {
  os << "| clip |";
  for (const char* c : kMetricColumns) os << ' ' << c << " |";
  os << "\n|---|";
  for (std::size_t k = 0; k < kMetricColumns.size(); ++k) os << "---:|";
  os << '\n';
  auto cell = [&](const std::optional<double>& v) { os << ' ' << (v ? format12(round12(*v)) : std::string("-")) << " |"; };
  for (const auto& c : r.clips) {
    os << "| " << c.clip_id << " |";
    for (const auto& v : c.values) cell(v);
    os << '\n';
  }
  const auto agg = aggregate(r);
  os << "| **mean** |";
  for (const char* name : kMetricColumns) {
    const auto& a = agg.at(name);
    cell(a.count ? std::optional<double>(a.mean) : std::nullopt);
  }
  os << '\n';
}

/// Temporal skeleton metrics of the clip's frames, plus static metrics of its
/// anchor against `gt`'s anchor when given. Failures are noted and logged.
inline ClipMetrics skeleton_metrics(const RigClip& pred, const RigClip* gt, MetricReport* log = nullptr) {
  ClipMetrics m;
  m.clip_id = pred.clip_id;
  const auto& frames = pred.skeleton_frames;
  detail::record(m, log, "pjdd", [&] { return pjdd(frames); });
  detail::record(m, log, "blrd", [&] { return blrd(frames); });
  detail::record(m, log, "gsd", [&] { return gsd(frames); });
  detail::record(m, log, "jad", [&] { return jad(frames); });
  if (gt && !gt->skeleton_frames.empty() && !frames.empty()) {
    detail::record(m, log, "mpjpe_anchor", [&] { return mpjpe_anchor(pred.anchor(), gt->anchor()); });
    detail::record(m, log, "cd_j2j", [&] { return chamfer_static(pred.anchor(), gt->anchor(), ChamferMode::j2j); });
    detail::record(m, log, "cd_j2b", [&] { return chamfer_static(pred.anchor(), gt->anchor(), ChamferMode::j2b); });
    detail::record(m, log, "cd_b2b", [&] { return chamfer_static(pred.anchor(), gt->anchor(), ChamferMode::b2b); });
  }
  return m;
}

struct SkinEvalOptions {
  std::size_t samples = 512;
  std::uint64_t seed = 42;
  int top_k = kDefaultTopK;
  double gamma = kDefaultGamma;
};

/// Skinning consistency of the clip's per-frame vertex weights. The teacher
/// is `gt`'s anchor weights when given, else the clip's own anchor weights.
inline void add_skin_metrics(ClipMetrics& m, const RigClip& pred, const RigClip* gt, const SkinEvalOptions& opt,
                             MetricReport* log = nullptr) {
  try {
    if (!pred.has_mesh()) throw Error(Errc::no_mesh, "clip has no mesh frames");
    if (!pred.skin_weights || pred.skin_weights->empty()) throw Error(Errc::invalid_argument, "clip has no skin weights");
    const auto& teacher_src = gt && gt->skin_weights && !gt->skin_weights->empty() ? gt->skin_weights->front()
                                                                                    : pred.skin_weights->front();
    const auto samples = sample_surface(pred, opt.samples, opt.seed);
    const auto teacher = make_teacher(teacher_src, samples, *pred.faces, pred.valid_or_all(), opt.top_k, opt.gamma);
    std::vector<MatX> preds;
    for (const auto& w : *pred.skin_weights) preds.push_back(barycentric_transfer(w, samples, *pred.faces));
    const auto sc = skin_consistency(preds, teacher);
    m["skin_l1"] = sc.l1_bca;
    m["skin_symkl"] = sc.symkl_bca;
    m["skin_entropy"] = sc.entropy;
    const auto cons = per_joint_variance(preds);
    m.cons_j.assign(cons.data(), cons.data() + cons.size());
  } catch (const Error& e) {
    const std::string why = std::string("skin: ") + e.what();
    m.notes.push_back(why);
    if (log) log->skipped.push_back({m.clip_id, why});
  }
}

}  // namespace sprig
