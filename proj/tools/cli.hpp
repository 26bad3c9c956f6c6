#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "siamnet/tensor.hpp"

namespace siamnet::cli {

/// Parses and runs one subcommand. Returns the process exit code:
/// 0 success, 1 usage, 2 data/protocol, 3 numerical failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

/// Mean hue in degrees of a [3,kh,kw] filter after min-max normalization.
/// Gray pixels (R=G=B) count as hue 0.
double mean_hue(const Tensor& filter);

/// Tile order by ascending mean hue; ties keep filter order.
std::vector<std::size_t> hue_order(const Tensor& filters);

/// RGB [3,H,W] image in [0,255] of the filters [K,3,kh,kw] laid out on a
/// near-square grid in hue order, each tile min-max normalized, with 1-pixel
/// white separators around every tile.
Tensor render_filter_grid(const Tensor& filters);

}  // namespace siamnet::cli
