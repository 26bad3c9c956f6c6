#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "siamnet/network.hpp"
#include "siamnet/pairwise.hpp"

/// Verification harness: finite differences and a pair-by-pair reference
/// implementation of the deviance cost. Nothing here calls the matrix-form
/// gradient code it is used to check.
namespace siamnet::check {

using pairwise::Matrix;

/// (f(x + h) - f(x - h)) / 2h, perturbing `x` in place and restoring it.
double central_difference(const std::function<double()>& f, double& x, double h = 1e-5);

/// Central differences of `f` with respect to every entry of `coords`.
std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> coords,
                                     double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);
double relative_error(const Matrix& a, const Matrix& b);

/// Reference deviance cost and gradient: explicit loop over every pair with a
/// non-zero mask entry, accumulating the per-pair cosine gradient into both
/// columns. Works for general (square, triangular) masks.
std::pair<double, Matrix> pairwise_oracle(const Matrix& X, const pairwise::PairMasks& masks,
                                          double alpha, double beta);

/// Two-view variant: pairs (x_i, y_j) for every non-zero M(i, j).
struct SpecificOracle {
  double cost;
  Matrix grad_x;
  Matrix grad_y;
};
SpecificOracle pairwise_oracle_specific(const Matrix& X, const Matrix& Y,
                                        const pairwise::PairMasks& masks, double alpha,
                                        double beta);

/// Number of (i, j) pairs the oracle visits.
std::size_t oracle_pair_count(const pairwise::PairMasks& masks);

/// Architecture used by the full-network checks: 16x48 images, 8 channels per
/// convolution, 20-d features.
NetConfig toy_config();

struct CheckEntry {
  std::string target;
  double max_error = 0.0;
  double threshold = 0.0;
  bool pass() const { return max_error < threshold; }
};

struct CheckReport {
  std::vector<CheckEntry> entries;
  bool all_pass() const;
  /// Entry with the largest error/threshold ratio.
  const CheckEntry& worst() const;
};

/// Layer backward passes vs finite differences over random inputs of three
/// shapes per layer.
CheckReport check_layers(std::size_t trials, std::uint64_t seed);

/// Deviance (general and view-specific) and Fisher gradients vs finite
/// differences, and matrix form vs the pairwise oracle.
CheckReport check_pairwise(std::size_t trials, std::uint64_t seed);

/// End-to-end deviance gradient of the toy network on a 6-image batch vs
/// finite differences on 50 sampled parameters per trial.
CheckReport check_fullnet(std::size_t trials, std::uint64_t seed);

}  // namespace siamnet::check
