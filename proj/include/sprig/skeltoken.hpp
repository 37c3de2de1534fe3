#pragma once

// Skeleton <-> token quadruple codec and the weighted token cross entropy
// used for both the anchor and the symmetric (frame -> anchor) terms.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "sprig/rigcore.hpp"

namespace sprig {

inline constexpr int kDefaultBins = 256;

/// One (t_x, t_y, t_z, t_p) quadruple per joint. Coordinate tokens are in
/// [1, n_disc]; parent tokens are in [0, J] with 0 meaning root.
struct TokenSequence {
  std::vector<std::array<int, 4>> quads;
  int n_disc = kDefaultBins;

  std::size_t joint_count() const { return quads.size(); }
  std::size_t length() const { return 4 * quads.size(); }

  std::vector<int> flatten() const {
    std::vector<int> flat;
    flat.reserve(length());
    for (const auto& q : quads) flat.insert(flat.end(), q.begin(), q.end());
    return flat;
  }

  /// Vocabulary size of flattened position i.
  int vocab_at(std::size_t i) const { return i % 4 == 3 ? static_cast<int>(quads.size()) + 1 : n_disc; }

  /// Zero-based class index of the target token at flattened position i.
  int class_at(std::size_t i) const {
    const int t = quads[i / 4][i % 4];
    return i % 4 == 3 ? t : t - 1;
  }
};

inline int coordinate_token(double c, int n_disc) {
  const double b = std::floor((c + 0.5) * n_disc);
  const double clamped = std::clamp(b, 0.0, static_cast<double>(n_disc - 1));
  return static_cast<int>(clamped) + 1;
}

inline double token_coordinate(int token, int n_disc) {
  return ((token - 1) + 0.5) / n_disc - 0.5;
}

inline TokenSequence tokenize(const Skeleton& skeleton, int n_disc = kDefaultBins) {
  if (n_disc < 2) throw Error(Errc::invalid_argument, "n_disc must be at least 2");
  if (skeleton.parents.size() != skeleton.joints.size())
    throw Error(Errc::shape_mismatch, "parents length differs from joint count");
  require_finite(skeleton.joints);
  TokenSequence seq;
  seq.n_disc = n_disc;
  seq.quads.reserve(skeleton.size());
  for (std::size_t j = 0; j < skeleton.size(); ++j) {
    const auto& x = skeleton.joints[j];
    seq.quads.push_back({coordinate_token(x.x(), n_disc), coordinate_token(x.y(), n_disc),
                         coordinate_token(x.z(), n_disc), skeleton.parents[j]});
  }
  return seq;
}

inline Skeleton detokenize(const TokenSequence& tokens) {
  if (tokens.n_disc < 2) throw Error(Errc::invalid_argument, "n_disc must be at least 2");
  const int joints = static_cast<int>(tokens.joint_count());
  Skeleton s;
  s.joints.reserve(tokens.joint_count());
  s.parents.reserve(tokens.joint_count());
  for (const auto& q : tokens.quads) {
    for (int c = 0; c < 3; ++c)
      if (q[c] < 1 || q[c] > tokens.n_disc)
        throw Error(Errc::token_out_of_range, "coordinate token " + std::to_string(q[c]) + " outside [1, n_disc]");
    if (q[3] < 0 || q[3] > joints)
      throw Error(Errc::parent_index_out_of_range, "parent token " + std::to_string(q[3]) + " outside [0, J]");
    s.joints.emplace_back(token_coordinate(q[0], tokens.n_disc), token_coordinate(q[1], tokens.n_disc),
                          token_coordinate(q[2], tokens.n_disc));
    s.parents.push_back(q[3]);
  }
  return s;
}

/// Raw per-position scores (log domain) plus the set of positions that
/// take part in the loss.
struct SlotLogits {
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> positions;

  /// All positions active.
  static SlotLogits dense(std::vector<std::vector<double>> scores) {
    SlotLogits l;
    l.positions.resize(scores.size());
    std::iota(l.positions.begin(), l.positions.end(), std::size_t{0});
    l.scores = std::move(scores);
    return l;
  }
};

/// -log softmax(scores)[target], computed with max subtraction and floored at 0.
inline double cross_entropy(const std::vector<double>& scores, int target) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) mx = std::max(mx, s);
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  return std::max(0.0, std::log(sum) - (scores[static_cast<std::size_t>(target)] - mx));
}

inline constexpr double kDefaultParentWeight = 3.0;

/// Weighted mean token cross entropy; the parent slot of every quadruple is
/// weighted by alpha.
inline double weighted_ce(const SlotLogits& logits, const TokenSequence& targets, double alpha = kDefaultParentWeight) {
  if (!(alpha >= 1.0)) throw Error(Errc::invalid_argument, "alpha must be >= 1");
  if (logits.positions.empty()) throw Error(Errc::empty_position_set, "no active token positions");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i : logits.positions) {
    if (i >= targets.length() || i >= logits.scores.size())
      throw Error(Errc::vocab_mismatch, "position " + std::to_string(i) + " has no target or no scores");
    const auto& s = logits.scores[i];
    if (static_cast<int>(s.size()) != targets.vocab_at(i))
      throw Error(Errc::vocab_mismatch, "position " + std::to_string(i) + " expects vocabulary " +
                                            std::to_string(targets.vocab_at(i)) + ", got " + std::to_string(s.size()));
    for (double v : s)
      if (!std::isfinite(v)) throw Error(Errc::vocab_mismatch, "non-finite score at position " + std::to_string(i));
    const double w = i % 4 == 3 ? alpha : 1.0;
    num += w * cross_entropy(s, targets.class_at(i));
    den += w;
  }
  return num / den;
}

struct TokenLossWeights {
  double alpha = kDefaultParentWeight;
  double lambda_anchor = 1.0;
  double lambda_sym = 1.0;
};

struct TokenLoss {
  double total = 0.0;
  double anchor_term = 0.0;
  double sym_term = 0.0;
};

/// Anchor term on anchor-conditioned logits plus the mean over frames of the
/// same cross entropy with targets held at the anchor tokens.
inline TokenLoss token_loss(const SlotLogits& anchor_logits, const std::vector<SlotLogits>& frame_logits,
                            const TokenSequence& targets, const TokenLossWeights& w = {}) {
  TokenLoss out;
  out.anchor_term = weighted_ce(anchor_logits, targets, w.alpha);
  if (!frame_logits.empty()) {
    double sum = 0.0;
    for (const auto& l : frame_logits) sum += weighted_ce(l, targets, w.alpha);
    out.sym_term = sum / static_cast<double>(frame_logits.size());
  }
  out.total = w.lambda_anchor * out.anchor_term + w.lambda_sym * out.sym_term;
  return out;
}

// ---------------------------------------------------------------------------
// SPRL logits file: "SPRL", u32 position count, then per position a u32
// vocabulary size followed by that many float32 scores. Little endian.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::parse_error, "truncated logits file");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

}  // namespace detail

inline void write_logits(std::ostream& os, const SlotLogits& logits) {
  os.write("SPRL", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(logits.scores.size()));
  for (const auto& s : logits.scores) {
    detail::put_u32(os, static_cast<std::uint32_t>(s.size()));
    for (double v : s) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32(os, bits);
    }
  }
}

inline SlotLogits read_logits(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SPRL", 4) != 0) throw Error(Errc::parse_error, "bad logits magic");
  const std::uint32_t count = detail::get_u32(is);
  std::vector<std::vector<double>> scores;
  scores.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t vocab = detail::get_u32(is);
    std::vector<double> s(vocab);
    for (auto& v : s) {
      const std::uint32_t bits = detail::get_u32(is);
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
    scores.push_back(std::move(s));
  }
  return SlotLogits::dense(std::move(scores));
}

inline void write_logits_file(const std::string& path, const SlotLogits& logits) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io_error, "cannot open " + path);
  write_logits(os, logits);
}

inline SlotLogits read_logits_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io_error, "cannot open " + path);
  return read_logits(is);
}

}  // namespace sprig
