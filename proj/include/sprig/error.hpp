#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sprig {

/// Stable, machine-readable error codes. The string form is part of the CLI
/// contract (error JSON on stderr), so never renumber or rename.
enum class Errc {
  invalid_argument,
  invalid_config,
  nonfinite_coordinate,
  cyclic_parents,
  count_mismatch,
  shape_mismatch,
  no_edges,
  empty_set,
  vocab_mismatch,
  empty_position_set,
  token_out_of_range,
  parent_index_out_of_range,
  no_mesh,
  zero_area_mesh,
  no_valid_joints,
  no_valid_bones,
  zero_mask,
  too_few_frames,
  single_joint,
  nonfinite_gradient,
  diverged,
  parse_error,
  io_error,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "INVALID_ARGUMENT";
    case Errc::invalid_config: return "INVALID_CONFIG";
    case Errc::nonfinite_coordinate: return "NONFINITE_COORDINATE";
    case Errc::cyclic_parents: return "CYCLIC_PARENTS";
    case Errc::count_mismatch: return "COUNT_MISMATCH";
    case Errc::shape_mismatch: return "SHAPE_MISMATCH";
    case Errc::no_edges: return "NO_EDGES";
    case Errc::empty_set: return "EMPTY_SET";
    case Errc::vocab_mismatch: return "VOCAB_MISMATCH";
    case Errc::empty_position_set: return "EMPTY_POSITION_SET";
    case Errc::token_out_of_range: return "TOKEN_OUT_OF_RANGE";
    case Errc::parent_index_out_of_range: return "PARENT_INDEX_OUT_OF_RANGE";
    case Errc::no_mesh: return "NO_MESH";
    case Errc::zero_area_mesh: return "ZERO_AREA_MESH";
    case Errc::no_valid_joints: return "NO_VALID_JOINTS";
    case Errc::no_valid_bones: return "NO_VALID_BONES";
    case Errc::zero_mask: return "ZERO_MASK";
    case Errc::too_few_frames: return "TOO_FEW_FRAMES";
    case Errc::single_joint: return "SINGLE_JOINT";
    case Errc::nonfinite_gradient: return "NONFINITE_GRADIENT";
    case Errc::diverged: return "DIVERGED";
    case Errc::parse_error: return "PARSE_ERROR";
    case Errc::io_error: return "IO_ERROR";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace sprig
