#include "siamnet/pairwise.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "siamnet/errors.hpp"

namespace siamnet::pairwise {
namespace {

void require_rows(const Matrix& X, const Matrix& Y, const char* what) {
  if (X.rows() != Y.rows()) {
    throw DimensionError(std::string(what) + ": axis 0 (feature dim) differs, " +
                         std::to_string(X.rows()) + " vs " + std::to_string(Y.rows()));
  }
}

void require_shape(const Matrix& M, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (M.rows() != rows) {
    throw DimensionError(std::string(what) + ": axis 0 has size " + std::to_string(M.rows()) +
                         ", expected " + std::to_string(rows));
  }
  if (M.cols() != cols) {
    throw DimensionError(std::string(what) + ": axis 1 has size " + std::to_string(M.cols()) +
                         ", expected " + std::to_string(cols));
  }
}

// Squared column norms; throws on a zero column.
Vector squared_norms(const Matrix& X, const char* which) {
  Vector q = X.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!(q(i) > 0.0)) {
      throw SingularInputError(std::string("cosine: zero-norm feature column ") +
                                   std::to_string(i) + " in " + which,
                               static_cast<std::size_t>(i));
    }
  }
  return q;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_masks(const Matrix& S, const PairMasks& masks) {
  require_shape(masks.M, S.rows(), S.cols(), "mask M");
  require_shape(masks.W, S.rows(), S.cols(), "weight W");
  require_shape(masks.P, S.rows(), S.cols(), "sign P");
}

}  // namespace

Matrix cosine_similarity(const Matrix& X, const Matrix& Y) {
  require_rows(X, Y, "cosine");
  const Vector qx = squared_norms(X, "X");
  const Vector qy = squared_norms(Y, "Y");
  Matrix S(X.cols(), Y.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i)
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
      S(i, j) = X.col(i).dot(Y.col(j)) / std::sqrt(qx(i) * qy(j));
  return S;
}

SimilarityMatrix connect(const Matrix& X, const Matrix& Y, Connection kind,
                         std::span<const double> concat_weights) {
  require_rows(X, Y, "connect");
  SimilarityMatrix out{Matrix(X.cols(), Y.cols()), kind};
  Matrix& S = out.S;
  switch (kind) {
    case Connection::Cosine:
      S = cosine_similarity(X, Y);
      break;
    case Connection::Euclidean:
      for (Eigen::Index i = 0; i < X.cols(); ++i)
        for (Eigen::Index j = 0; j < Y.cols(); ++j) S(i, j) = -(X.col(i) - Y.col(j)).squaredNorm();
      break;
    case Connection::AbsDiff:
      for (Eigen::Index i = 0; i < X.cols(); ++i)
        for (Eigen::Index j = 0; j < Y.cols(); ++j)
          S(i, j) = -(X.col(i) - Y.col(j)).cwiseAbs().sum();
      break;
    case Connection::Concat: {
      const auto d = static_cast<std::size_t>(X.rows());
      if (concat_weights.size() != 2 * d) {
        throw DimensionError("connect(concat): axis 0 of weights has size " +
                             std::to_string(concat_weights.size()) + ", expected " +
                             std::to_string(2 * d));
      }
      Eigen::Map<const Vector> wx(concat_weights.data(), X.rows());
      Eigen::Map<const Vector> wy(concat_weights.data() + d, X.rows());
      const Vector sx = X.transpose() * wx;
      const Vector sy = Y.transpose() * wy;
      for (Eigen::Index i = 0; i < X.cols(); ++i)
        for (Eigen::Index j = 0; j < Y.cols(); ++j) S(i, j) = sx(i) + sy(j);
      break;
    }
  }
  return out;
}

SimilarityMatrix connect(const Matrix& X, Connection kind) { return connect(X, X, kind); }

namespace {

void fill_weights(PairMasks& m) {
  if (m.n1 == 0 || m.n2 == 0) {
    throw DegenerateBatchError("degenerate batch: " + std::to_string(m.n1) + " positive and " +
                               std::to_string(m.n2) + " negative pairs");
  }
  const double w1 = 1.0 / static_cast<double>(m.n1);
  const double w2 = 1.0 / static_cast<double>(m.n2);
  m.W = Matrix::Zero(m.M.rows(), m.M.cols());
  m.P = Matrix::Zero(m.M.rows(), m.M.cols());
  for (Eigen::Index i = 0; i < m.M.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.M.cols(); ++j) {
      if (m.M(i, j) > 0.0) {
        m.W(i, j) = w1;
        m.P(i, j) = w1;
      } else if (m.M(i, j) < 0.0) {
        m.W(i, j) = w2;
        m.P(i, j) = -w2;
      }
    }
  }
}

void require_cost(double c) {
  if (!(c >= 1.0)) throw UsageError("negative cost c must be >= 1, got " + std::to_string(c));
}

}  // namespace

PairMasks build_masks(std::span<const Label> labels, double negative_cost) {
  require_cost(negative_cost);
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (n < 2) throw DegenerateBatchError("batch needs at least 2 samples, got " + std::to_string(n));
  PairMasks m;
  m.negative_cost = negative_cost;
  m.M = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) {
        m.M(i, j) = 1.0;
        ++m.n1;
      } else {
        m.M(i, j) = -negative_cost;
        ++m.n2;
      }
    }
  }
  fill_weights(m);
  return m;
}

PairMasks build_masks(std::span<const Label> x_labels, std::span<const Label> y_labels,
                      double negative_cost) {
  require_cost(negative_cost);
  const auto n = static_cast<Eigen::Index>(x_labels.size());
  const auto mm = static_cast<Eigen::Index>(y_labels.size());
  if (n < 1 || mm < 1) throw DegenerateBatchError("view-specific batch needs samples in both views");
  PairMasks m;
  m.negative_cost = negative_cost;
  m.specific = true;
  m.M = Matrix::Zero(n, mm);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < mm; ++j) {
      if (x_labels[i] == y_labels[j]) {
        m.M(i, j) = 1.0;
        ++m.n1;
      } else {
        m.M(i, j) = -negative_cost;
        ++m.n2;
      }
    }
  }
  fill_weights(m);
  return m;
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double deviance_cost(const Matrix& S, const PairMasks& masks, double alpha, double beta) {
  require_masks(S, masks);
  double cost = 0.0;
  for (Eigen::Index j = 0; j < S.cols(); ++j) {
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      if (masks.W(i, j) == 0.0) continue;
      cost += masks.W(i, j) * softplus(-alpha * (S(i, j) - beta) * masks.M(i, j));
    }
  }
  return cost;
}

Matrix deviance_weights(const Matrix& S, const PairMasks& masks, double alpha, double beta) {
  require_masks(S, masks);
  Matrix A = Matrix::Zero(S.rows(), S.cols());
  for (Eigen::Index j = 0; j < S.cols(); ++j) {
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      if (masks.W(i, j) == 0.0) continue;
      const double z = -alpha * (S(i, j) - beta) * masks.M(i, j);
      A(i, j) = -alpha * masks.W(i, j) * masks.M(i, j) * sigmoid(z);
    }
  }
  return A;
}

Matrix cosine_backprop_general(const Matrix& X, const Matrix& A) {
  const Eigen::Index d = X.rows(), n = X.cols();
  require_shape(A, n, n, "pair weights A");
  const Vector q = squared_norms(X, "X");
  const Matrix dots = X.transpose() * X;

  Matrix B(n, n), C(n, n), D(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      B(i, j) = 1.0 / std::sqrt(q(i) * q(j));
      C(i, j) = B(i, j) * dots(i, j) / q(i);
      D(i, j) = B(i, j) * dots(i, j) / q(j);
    }
  }
  const Matrix AB = A.cwiseProduct(B);
  // AC~ tiles the row sums of A o C across d rows; AD^ tiles the column sums of A o D.
  const Vector ac = A.cwiseProduct(C).rowwise().sum();
  const Vector ad = A.cwiseProduct(D).colwise().sum().transpose();
  const Matrix tiled = (ac + ad).transpose().replicate(d, 1);
  return X * (AB + AB.transpose()) - X.cwiseProduct(tiled);
}

std::pair<Matrix, Matrix> cosine_backprop_specific(const Matrix& X, const Matrix& Y,
                                                   const Matrix& E) {
  require_rows(X, Y, "cosine_backprop_specific");
  const Eigen::Index d = X.rows(), n = X.cols(), m = Y.cols();
  require_shape(E, n, m, "pair weights E");
  const Vector qx = squared_norms(X, "X");
  const Vector qy = squared_norms(Y, "Y");
  const Matrix dots = X.transpose() * Y;

  Matrix F(n, m), G(n, m), H(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      F(i, j) = 1.0 / std::sqrt(qx(i) * qy(j));
      G(i, j) = F(i, j) * dots(i, j) / qx(i);
      H(i, j) = F(i, j) * dots(i, j) / qy(j);
    }
  }
  const Matrix EF = E.cwiseProduct(F);
  const Vector eg = E.cwiseProduct(G).rowwise().sum();
  const Vector eh = E.cwiseProduct(H).colwise().sum().transpose();
  Matrix dX = Y * EF.transpose() - X.cwiseProduct(eg.transpose().replicate(d, 1));
  Matrix dY = X * EF - Y.cwiseProduct(eh.transpose().replicate(d, 1));
  return {std::move(dX), std::move(dY)};
}

Matrix deviance_grad_general(const Matrix& X, const Matrix& S, const PairMasks& masks,
                             double alpha, double beta) {
  require_shape(S, X.cols(), X.cols(), "similarity S");
  return cosine_backprop_general(X, deviance_weights(S, masks, alpha, beta));
}

std::pair<Matrix, Matrix> deviance_grad_specific(const Matrix& X, const Matrix& Y,
                                                 const Matrix& S, const PairMasks& masks,
                                                 double alpha, double beta) {
  require_shape(S, X.cols(), Y.cols(), "similarity S");
  return cosine_backprop_specific(X, Y, deviance_weights(S, masks, alpha, beta));
}

namespace {

struct FisherTerms {
  double numerator_root;  // sum P o S
  double mean;
  double variance_sum;
};

FisherTerms fisher_terms(const Matrix& S, const PairMasks& masks) {
  require_masks(S, masks);
  double sum = 0.0, psum = 0.0, max_abs = 0.0;
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < S.cols(); ++j) {
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      if (masks.M(i, j) == 0.0) continue;
      sum += S(i, j);
      psum += masks.P(i, j) * S(i, j);
      max_abs = std::max(max_abs, std::abs(S(i, j)));
      ++count;
    }
  }
  if (count == 0) throw DegenerateVarianceError("fisher: no considered pairs");
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (Eigen::Index j = 0; j < S.cols(); ++j)
    for (Eigen::Index i = 0; i < S.rows(); ++i)
      if (masks.M(i, j) != 0.0) var += (S(i, j) - mean) * (S(i, j) - mean);
  // Spread below rounding level of the similarities counts as constant.
  const double spread = std::sqrt(var / static_cast<double>(count));
  if (!(spread > 1e-12 * std::max(1.0, max_abs))) {
    throw DegenerateVarianceError("fisher: all considered similarities are equal (variance " +
                                  std::to_string(var) + ")");
  }
  return {psum, mean, var};
}

}  // namespace

double fisher_cost(const Matrix& S, const PairMasks& masks) {
  const FisherTerms t = fisher_terms(S, masks);
  return -(t.numerator_root * t.numerator_root) / t.variance_sum;
}

Matrix fisher_weights(const Matrix& S, const PairMasks& masks) {
  const FisherTerms t = fisher_terms(S, masks);
  const double num = t.numerator_root;
  const double den = t.variance_sum;
  // d/dS_ij of -num^2/den; the mean's own derivative cancels because the
  // deviations sum to zero.
  Matrix G = Matrix::Zero(S.rows(), S.cols());
  for (Eigen::Index j = 0; j < S.cols(); ++j) {
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      if (masks.M(i, j) == 0.0) continue;
      G(i, j) = -2.0 * num * masks.P(i, j) / den +
                2.0 * num * num * (S(i, j) - t.mean) / (den * den);
    }
  }
  return G;
}

Matrix fisher_grad(const Matrix& X, const Matrix& S, const PairMasks& masks) {
  require_shape(S, X.cols(), X.cols(), "similarity S");
  return cosine_backprop_general(X, fisher_weights(S, masks));
}

std::pair<Matrix, Matrix> fisher_grad_specific(const Matrix& X, const Matrix& Y, const Matrix& S,
                                               const PairMasks& masks) {
  require_shape(S, X.cols(), Y.cols(), "similarity S");
  return cosine_backprop_specific(X, Y, fisher_weights(S, masks));
}

}  // namespace siamnet::pairwise
