#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

#include <Eigen/Dense>

namespace siamnet::pairwise {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Label = std::int64_t;

enum class Connection { Euclidean, Cosine, AbsDiff, Concat };

/// S(i, j) = connection(column i of X, column j of Y).
struct SimilarityMatrix {
  Matrix S;
  Connection kind = Connection::Cosine;
};

/// Distances are negated so that larger always means more similar.
/// Concat needs 2d weights applied to [x; y]. Cosine throws
/// SingularInputError on a zero-norm column.
SimilarityMatrix connect(const Matrix& X, const Matrix& Y, Connection kind,
                         std::span<const double> concat_weights = {});
SimilarityMatrix connect(const Matrix& X, Connection kind);

/// Cosine similarity of every column pair, S = connect(X, Y, Cosine).S.
Matrix cosine_similarity(const Matrix& X, const Matrix& Y);

/// Pair bookkeeping of one mini-batch.
///   M: +1 positive, -c negative, 0 neglected
///   W: 1/n1 positive, 1/n2 negative, 0 neglected
///   P: 1/n1 positive, -1/n2 negative, 0 neglected
struct PairMasks {
  Matrix M, W, P;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double negative_cost = 1.0;
  bool specific = false;

  /// Number of non-neglected pairs.
  std::size_t pair_count() const { return n1 + n2; }
};

/// General mode: pairs (i, j) with i < j only; diagonal and lower triangle
/// are neglected. Throws DegenerateBatchError when n1 or n2 is zero.
PairMasks build_masks(std::span<const Label> labels, double negative_cost);

/// View-specific mode: full n x m mask between the two views.
PairMasks build_masks(std::span<const Label> x_labels, std::span<const Label> y_labels,
                      double negative_cost);

/// Candidate pairs of a general-mode batch of n samples, n(n-1)/2.
constexpr std::size_t candidate_pairs(std::size_t n) { return n * (n - 1) / 2; }

/// ln(1 + e^z) without overflow.
double softplus(double z);

/// J = sum W o ln(exp(-alpha (S - beta) o M) + 1).
double deviance_cost(const Matrix& S, const PairMasks& masks, double alpha, double beta);

/// dJ/dS for the deviance cost: -alpha W o M o sigma(-alpha (S - beta) o M).
Matrix deviance_weights(const Matrix& S, const PairMasks& masks, double alpha, double beta);

/// Back-propagates an arbitrary per-pair weight A = dJ/dS through the cosine
/// of a single feature matrix: X (AB + (AB)^T) - X o (AC~ + AD^), with B, C, D
/// the inverse-norm and projection matrices of the cosine.
Matrix cosine_backprop_general(const Matrix& X, const Matrix& A);

/// Two-view version with E = dJ/dS, returning (dJ/dX, dJ/dY):
/// Y (EF)^T - X o EG~ and X (EF) - Y o EH^.
std::pair<Matrix, Matrix> cosine_backprop_specific(const Matrix& X, const Matrix& Y,
                                                   const Matrix& E);

/// dJ/dX of the deviance cost for a shared-parameter network. `S` must be the
/// cosine similarity of X with itself.
Matrix deviance_grad_general(const Matrix& X, const Matrix& S, const PairMasks& masks,
                             double alpha, double beta);

/// (dJ/dX, dJ/dY) of the deviance cost for a view-specific network.
std::pair<Matrix, Matrix> deviance_grad_specific(const Matrix& X, const Matrix& Y,
                                                 const Matrix& S, const PairMasks& masks,
                                                 double alpha, double beta);

/// J = -(sum P o S)^2 / sum_{considered} (S - mean)^2, where mean and the
/// variance sum run over non-neglected pairs only.
double fisher_cost(const Matrix& S, const PairMasks& masks);

/// dJ/dS of the Fisher cost.
Matrix fisher_weights(const Matrix& S, const PairMasks& masks);

Matrix fisher_grad(const Matrix& X, const Matrix& S, const PairMasks& masks);
std::pair<Matrix, Matrix> fisher_grad_specific(const Matrix& X, const Matrix& Y, const Matrix& S,
                                               const PairMasks& masks);

}  // namespace siamnet::pairwise
