/**
 * @file generate.hpp
 * @brief Synthetic test grids: paths, radial trees and meshed grids with a
 *        prescribed number of loops and minimum cycle length.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "gridgm/grid.hpp"

namespace gridgm {

enum class GridKind {
  Path,
  Tree,
  /// Tree plus `loops` extra lines, each closing a cycle of exactly `min_cycle`.
  Meshed,
  /// Tree plus `loops` extra lines between arbitrary non-adjacent buses.
  Random,
};

GridKind parse_grid_kind(const std::string& name);

struct GridSpec {
  GridKind kind = GridKind::Tree;
  /// Total bus count including the reference bus.
  std::size_t buses = 10;
  std::size_t loops = 0;
  /// Requested minimum cycle length for Meshed grids (>= 3).
  std::size_t min_cycle = 7;
  std::uint64_t seed = 1;
  double r_min = 0.1;
  double r_max = 1.0;
  double x_min = 0.1;
  double x_max = 1.0;
  /// Attach the reference bus through a single line (substation feeder).
  bool reference_is_leaf = true;
  std::size_t max_attempts = 200;
};

/// Buses are named "0".."B-1" with "0" as reference. Throws ValidationError
/// when the request cannot be met within `max_attempts` tree draws.
GridGraph generate_grid(const GridSpec& spec);

/**
 * 33-bus meshed feeder analog: the radial layout of the common 33-bus test
 * feeder (buses "1".."33", reference "1") with tie lines 9-15, 12-22 and
 * 18-33 closed. Impedances in per unit on a 12.66 kV / 10 MVA base.
 * Line 8-21 is open and line 6-26 is in service.
 */
GridGraph case33_analog();

/// The open 8-21 tie line of case33_analog(), for line-addition experiments.
LineSpec case33_open_tie();

}  // namespace gridgm
