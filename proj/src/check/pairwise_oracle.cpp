#include <cmath>

#include "siamnet/check.hpp"
#include "siamnet/errors.hpp"

namespace siamnet::check {

namespace {

double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct PairTerm {
  double cost;
  double dcost_ds;
};

PairTerm pair_term(double s, double m, double w, double alpha, double beta) {
  const double z = -alpha * (s - beta) * m;
  return {w * log1p_exp(z), -alpha * w * m * logistic(z)};
}

// Cosine of x and y and its gradient with respect to each argument.
struct CosinePair {
  double s;
  Eigen::VectorXd dx, dy;
};

CosinePair cosine_pair(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double xx = 0, yy = 0, xy = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xx += x[k] * x[k];
    yy += y[k] * y[k];
    xy += x[k] * y[k];
  }
  if (xx == 0.0 || yy == 0.0) throw SingularInputError("oracle: zero-norm feature", 0);
  const double nx = std::sqrt(xx), ny = std::sqrt(yy);
  CosinePair c;
  c.s = xy / (nx * ny);
  c.dx = y / (nx * ny) - c.s * x / xx;
  c.dy = x / (nx * ny) - c.s * y / yy;
  return c;
}

}  // namespace

std::size_t oracle_pair_count(const pairwise::PairMasks& masks) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < masks.M.rows(); ++i)
    for (Eigen::Index j = 0; j < masks.M.cols(); ++j)
      if (masks.M(i, j) != 0.0) ++n;
  return n;
}

std::pair<double, Matrix> pairwise_oracle(const Matrix& X, const pairwise::PairMasks& masks,
                                          double alpha, double beta) {
  if (masks.M.rows() != X.cols() || masks.M.cols() != X.cols()) {
    throw DimensionError("pairwise_oracle: mask does not match the batch");
  }
  double cost = 0.0;
  Matrix grad = Matrix::Zero(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double m = masks.M(i, j);
      if (m == 0.0) continue;
      const CosinePair c = cosine_pair(X.col(i), X.col(j));
      const PairTerm t = pair_term(c.s, m, masks.W(i, j), alpha, beta);
      cost += t.cost;
      grad.col(i) += t.dcost_ds * c.dx;
      grad.col(j) += t.dcost_ds * c.dy;
    }
  }
  return {cost, grad};
}

SpecificOracle pairwise_oracle_specific(const Matrix& X, const Matrix& Y,
                                        const pairwise::PairMasks& masks, double alpha,
                                        double beta) {
  if (masks.M.rows() != X.cols() || masks.M.cols() != Y.cols() || X.rows() != Y.rows()) {
    throw DimensionError("pairwise_oracle_specific: mask does not match the views");
  }
  SpecificOracle out{0.0, Matrix::Zero(X.rows(), X.cols()), Matrix::Zero(Y.rows(), Y.cols())};
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (Eigen::Index j = 0; j < Y.cols(); ++j) {
      const double m = masks.M(i, j);
      if (m == 0.0) continue;
      const CosinePair c = cosine_pair(X.col(i), Y.col(j));
      const PairTerm t = pair_term(c.s, m, masks.W(i, j), alpha, beta);
      out.cost += t.cost;
      out.grad_x.col(i) += t.dcost_ds * c.dx;
      out.grad_y.col(j) += t.dcost_ds * c.dy;
    }
  }
  return out;
}

}  // namespace siamnet::check
