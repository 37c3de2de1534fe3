#pragma once

// RigClip JSON interchange and a minimal OBJ (v/f) reader.

#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sprig/rigcore.hpp"

namespace sprig {

using json = nlohmann::json;

namespace detail {

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::parse_error, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json points_json(const Points& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(vec_json(p));
  return a;
}

inline Points json_points(const json& j) {
  if (!j.is_array()) throw Error(Errc::parse_error, "expected an array of 3-vectors");
  Points pts;
  pts.reserve(j.size());
  for (const auto& e : j) pts.push_back(json_vec(e));
  return pts;
}

inline json matrix_json(const MatX& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline MatX json_matrix(const json& j) {
  if (!j.is_array()) throw Error(Errc::parse_error, "expected a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  MatX m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw Error(Errc::parse_error, "ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

inline json clip_to_json(const RigClip& clip) {
  json j;
  j["clip_id"] = clip.clip_id;
  json frames = json::array();
  for (const auto& s : clip.skeleton_frames) frames.push_back({{"joints", detail::points_json(s.joints)}, {"parents", s.parents}});
  j["frames"] = std::move(frames);
  if (clip.faces) {
    json f = json::array();
    for (const auto& t : *clip.faces) f.push_back({t[0], t[1], t[2]});
    j["faces"] = std::move(f);
  } else {
    j["faces"] = nullptr;
  }
  if (clip.mesh_frames) {
    json m = json::array();
    for (const auto& fr : *clip.mesh_frames) m.push_back({{"vertices", detail::points_json(fr.vertices)}});
    j["mesh_frames"] = std::move(m);
  } else {
    j["mesh_frames"] = nullptr;
  }
  if (clip.skin_weights) {
    json w = json::array();
    for (const auto& m : *clip.skin_weights) w.push_back(detail::matrix_json(m));
    j["skin_weights"] = std::move(w);
  } else {
    j["skin_weights"] = nullptr;
  }
  if (clip.valid_mask) {
    j["valid_mask"] = *clip.valid_mask;
  } else {
    j["valid_mask"] = nullptr;
  }
  if (clip.normalization)
    j["normalization"] = {{"center", detail::vec_json(clip.normalization->center)}, {"scale", clip.normalization->scale}};
  return j;
}

/// Parses a clip document. Unknown top-level keys and self-parented joints
/// (converted to the 0 = root convention) are reported through `warnings`.
inline RigClip clip_from_json(const json& j, std::vector<std::string>* warnings = nullptr) {
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  if (!j.is_object()) throw Error(Errc::parse_error, "clip document must be a JSON object");
  static const std::vector<std::string> known = {"clip_id",      "frames",     "faces",        "mesh_frames",
                                                 "skin_weights", "valid_mask", "normalization"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) warn("unknown top-level key '" + it.key() + "' ignored");

  try {
    RigClip clip;
    clip.clip_id = j.value("clip_id", std::string{});
    if (!j.contains("frames") || !j["frames"].is_array()) throw Error(Errc::parse_error, "missing 'frames' array");
    for (const auto& f : j["frames"]) {
      Skeleton s;
      s.joints = detail::json_points(f.at("joints"));
      s.parents = f.at("parents").get<std::vector<int>>();
      for (std::size_t q = 0; q < s.parents.size(); ++q)
        if (s.parents[q] == static_cast<int>(q) + 1) {
          warn("joint " + std::to_string(q) + " self-parented; treated as root");
          s.parents[q] = 0;
        }
      clip.skeleton_frames.push_back(std::move(s));
    }
    if (j.contains("faces") && !j["faces"].is_null()) {
      std::vector<Face> faces;
      for (const auto& t : j["faces"]) {
        if (!t.is_array() || t.size() != 3) throw Error(Errc::parse_error, "faces must be index triples");
        faces.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
      }
      clip.faces = std::move(faces);
    }
    if (j.contains("mesh_frames") && !j["mesh_frames"].is_null()) {
      std::vector<MeshFrame> frames;
      for (const auto& f : j["mesh_frames"]) frames.push_back({detail::json_points(f.at("vertices"))});
      clip.mesh_frames = std::move(frames);
    }
    if (j.contains("skin_weights") && !j["skin_weights"].is_null()) {
      std::vector<MatX> w;
      for (const auto& m : j["skin_weights"]) w.push_back(detail::json_matrix(m));
      clip.skin_weights = std::move(w);
    }
    if (j.contains("valid_mask") && !j["valid_mask"].is_null()) clip.valid_mask = j["valid_mask"].get<std::vector<bool>>();
    if (j.contains("normalization") && !j["normalization"].is_null()) {
      const auto& n = j["normalization"];
      clip.normalization = Normalization{detail::json_vec(n.at("center")), n.at("scale").get<double>()};
    }
    return clip;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, e.what());
  }
}

inline void write_clip_file(const std::string& path, const RigClip& clip) {
  std::ofstream os(path);
  if (!os) throw Error(Errc::io_error, "cannot open " + path);
  os << clip_to_json(clip).dump() << '\n';
}

inline RigClip read_clip_file(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io_error, "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, path + ": " + e.what());
  }
  return clip_from_json(j, warnings);
}

struct ObjMesh {
  Points vertices;
  std::vector<Face> faces;
};

/// Reads `v` and `f` records only; polygons are fan-triangulated and
/// texture/normal indices after '/' are ignored.
inline ObjMesh read_obj(std::istream& is) {
  ObjMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw Error(Errc::parse_error, "obj line " + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int raw = std::stoi(tok.substr(0, tok.find('/')));
        const int n = static_cast<int>(mesh.vertices.size());
        const int i = raw > 0 ? raw - 1 : n + raw;
        if (raw == 0 || i < 0 || i >= n) throw Error(Errc::parse_error, "obj line " + std::to_string(lineno) + ": bad index");
        idx.push_back(i);
      }
      if (idx.size() < 3) throw Error(Errc::parse_error, "obj line " + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) mesh.faces.push_back({idx[0], idx[t], idx[t + 1]});
    }
  }
  return mesh;
}

}  // namespace sprig
