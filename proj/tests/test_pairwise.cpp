#include <doctest.h>

#include <cmath>

#include "siamnet/check.hpp"
#include "siamnet/errors.hpp"
#include "siamnet/pairwise.hpp"
#include "siamnet/rng.hpp"

using namespace siamnet;
using namespace siamnet::pairwise;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix vec2(double a, double b) {
  Matrix m(2, 1);
  m << a, b;
  return m;
}

// Masks of a single positive pair (0, 1) in a 2-sample batch.
PairMasks single_positive() {
  const std::vector<Label> labels{7, 7, 8};
  PairMasks m = build_masks(labels, 1.0);
  m.M = Matrix::Zero(2, 2);
  m.W = Matrix::Zero(2, 2);
  m.P = Matrix::Zero(2, 2);
  m.M(0, 1) = 1;
  m.W(0, 1) = 1;
  m.P(0, 1) = 1;
  m.n1 = 1;
  m.n2 = 0;
  return m;
}

}  // namespace

TEST_CASE("connection functions") {
  Rng rng(1);
  const Matrix x = random_matrix(rng, 5, 1);
  CHECK(connect(x, x, Connection::Cosine).S(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(connect(vec2(1, 0), vec2(0, 1), Connection::Cosine).S(0, 0) == 0.0);
  CHECK(connect(vec2(1, 0), vec2(0, 1), Connection::Euclidean).S(0, 0) == -2.0);
  CHECK(connect(vec2(1, 0), vec2(0, 3), Connection::AbsDiff).S(0, 0) == -4.0);
  const std::vector<double> w{1, 2, 3, 4};
  CHECK(connect(vec2(1, 0), vec2(0, 1), Connection::Concat, w).S(0, 0) == 5.0);
  CHECK_THROWS_AS(connect(vec2(1, 0), vec2(0, 1), Connection::Concat, std::vector<double>{1, 2}),
                  DimensionError);
  CHECK_THROWS_AS(connect(vec2(1, 0), Matrix::Zero(3, 1), Connection::Cosine), DimensionError);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(rng, 6, 3), b = random_matrix(rng, 6, 4);
    const Matrix s = cosine_similarity(a, b);
    CHECK((cosine_similarity(3.0 * a, 5.0 * b) - s).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.maxCoeff() <= 1.0 + 1e-12);
    CHECK(s.minCoeff() >= -1.0 - 1e-12);
    CHECK(connect(a, Connection::Cosine).S.isApprox(cosine_similarity(a, a)));
  }
}

TEST_CASE("cosine rejects zero-norm columns and names the column") {
  Matrix x = Matrix::Ones(3, 4);
  x.col(2).setZero();
  try {
    cosine_similarity(x, x);
    FAIL("expected SingularInputError");
  } catch (const SingularInputError& e) {
    CHECK(e.column() == 2);
  }
}

TEST_CASE("masks for labels [1,1,2], c=2") {
  const std::vector<Label> labels{1, 1, 2};
  const PairMasks m = build_masks(labels, 2.0);
  CHECK(m.n1 == 1);
  CHECK(m.n2 == 2);
  CHECK(m.M(0, 1) == 1);
  CHECK(m.M(0, 2) == -2);
  CHECK(m.M(1, 2) == -2);
  CHECK(m.W(0, 1) == 1.0);
  CHECK(m.W(0, 2) == 0.5);
  CHECK(m.P(0, 2) == -0.5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) {
      CHECK(m.M(i, j) == 0);
      CHECK(m.W(i, j) == 0);
      CHECK(m.P(i, j) == 0);
    }
}

TEST_CASE("mask combinatorics and errors") {
  const std::vector<Label> four{1, 1, 2, 2};
  const PairMasks m = build_masks(four, 1.0);
  CHECK(m.n1 == 2);
  CHECK(m.n2 == 4);
  CHECK(m.pair_count() == candidate_pairs(4));

  CHECK_THROWS_AS(build_masks(std::vector<Label>{3, 3, 3}, 2.0), DegenerateBatchError);
  CHECK_THROWS_AS(build_masks(std::vector<Label>{1, 2, 3}, 2.0), DegenerateBatchError);
  CHECK_THROWS_AS(build_masks(std::vector<Label>{1}, 2.0), DegenerateBatchError);
  CHECK_THROWS_AS(build_masks(four, 0.5), UsageError);

  const PairMasks s = build_masks(std::vector<Label>{1, 2}, std::vector<Label>{1, 2, 3}, 2.0);
  CHECK(s.specific);
  CHECK(s.M.rows() == 2);
  CHECK(s.M.cols() == 3);
  CHECK(s.n1 == 2);
  CHECK(s.n2 == 4);
  CHECK(s.M(1, 0) == -2);
}

TEST_CASE("a 128-sample batch yields 8128 candidate pairs") {
  static_assert(candidate_pairs(128) == 8128);
  std::vector<Label> labels(128);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(i / 2);
  const PairMasks m = build_masks(labels, 2.0);
  CHECK(m.pair_count() == 8128);
  CHECK(m.n1 == 64);
  CHECK(check::oracle_pair_count(m) == 8128);
}

TEST_CASE("mask invariants on random labels") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng.below(20);
    std::vector<Label> labels(n);
    for (auto& l : labels) l = static_cast<Label>(rng.below(4));
    PairMasks m;
    try {
      m = build_masks(labels, 3.0);
    } catch (const DegenerateBatchError&) {
      continue;
    }
    std::size_t pos = 0, neg = 0;
    for (Eigen::Index i = 0; i < m.M.rows(); ++i)
      for (Eigen::Index j = 0; j < m.M.cols(); ++j) {
        pos += m.M(i, j) == 1.0;
        neg += m.M(i, j) == -3.0;
        CHECK((m.M(i, j) == 0) == (m.W(i, j) == 0));
        CHECK((m.M(i, j) == 0) == (m.P(i, j) == 0));
        if (j <= i) CHECK(m.M(i, j) == 0);
      }
    CHECK(pos == m.n1);
    CHECK(neg == m.n2);
  }
}

TEST_CASE("deviance anchor values") {
  const PairMasks m = single_positive();
  Matrix S = Matrix::Zero(2, 2);
  S(0, 1) = 0.5;
  CHECK(std::abs(deviance_cost(S, m, 2.0, 0.5) - std::log(2.0)) < 1e-12);
  S(0, 1) = 1.0;
  CHECK(std::abs(deviance_cost(S, m, 2.0, 0.5) - std::log1p(std::exp(-1.0))) < 1e-12);
  CHECK(deviance_cost(S, m, 2.0, 0.5) == doctest::Approx(0.31326).epsilon(1e-5));

  // With n1 = 2 positives each weighs 1/2.
  const PairMasks two = build_masks(std::vector<Label>{1, 1, 2, 2}, 2.0);
  Matrix s2 = Matrix::Zero(4, 4);
  s2(0, 1) = s2(2, 3) = 0.5;
  s2(0, 2) = s2(0, 3) = s2(1, 2) = s2(1, 3) = -5.0;
  const double neg = 4.0 / 4.0 * softplus(-2.0 * (-5.0 - 0.5) * -2.0);
  CHECK(std::abs(deviance_cost(s2, two, 2.0, 0.5) - (std::log(2.0) + neg)) < 1e-12);
}

TEST_CASE("softplus is stable") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(softplus(-800.0) < 1e-300);
  CHECK(std::isfinite(softplus(1e6)));
}

TEST_CASE("single pair reduces to the scalar deviance") {
  Rng rng(3);
  const PairMasks m = single_positive();
  const Matrix X = random_matrix(rng, 4, 2);
  const Matrix S = cosine_similarity(X, X);
  const double s = X.col(0).dot(X.col(1)) / (X.col(0).norm() * X.col(1).norm());
  CHECK(deviance_cost(S, m, 2.0, 0.5) == doctest::Approx(std::log1p(std::exp(-2.0 * (s - 0.5)))));
  const auto [oc, og] = check::pairwise_oracle(X, m, 2.0, 0.5);
  CHECK(oc == doctest::Approx(deviance_cost(S, m, 2.0, 0.5)).epsilon(1e-14));
  CHECK(check::relative_error(deviance_grad_general(X, S, m, 2.0, 0.5), og) < 1e-12);
}

TEST_CASE("zero pair weights give zero gradients") {
  Rng rng(4);
  const Matrix X = random_matrix(rng, 5, 4), Y = random_matrix(rng, 5, 3);
  CHECK(cosine_backprop_general(X, Matrix::Zero(4, 4)).cwiseAbs().maxCoeff() == 0.0);
  PairMasks m;
  m.M = Matrix::Zero(4, 3);
  m.W = Matrix::Zero(4, 3);
  m.P = Matrix::Zero(4, 3);
  m.specific = true;
  const auto [gx, gy] = deviance_grad_specific(X, Y, cosine_similarity(X, Y), m, 2.0, 0.5);
  CHECK(gx.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gy.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deviance gradients match finite differences and the loop oracle") {
  const check::CheckReport r = check::check_pairwise(20, 5);
  for (const auto& e : r.entries) {
    INFO(e.target << " " << e.max_error);
    CHECK(e.pass());
  }
}

TEST_CASE("matrix form equals the loop on the spec instance") {
  Rng rng(6);
  const PairMasks m = build_masks(std::vector<Label>{1, 1, 2, 2, 3, 3}, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix X = random_matrix(rng, 5, 6);
    const Matrix S = cosine_similarity(X, X);
    const auto [oc, og] = check::pairwise_oracle(X, m, 2.0, 0.5);
    CHECK(std::abs(deviance_cost(S, m, 2.0, 0.5) - oc) < 1e-12);
    CHECK(check::relative_error(deviance_grad_general(X, S, m, 2.0, 0.5), og) < 1e-10);
  }
}

TEST_CASE("fisher worked example") {
  const PairMasks m = build_masks(std::vector<Label>{1, 1, 2, 2}, 1.0);
  Matrix S = Matrix::Constant(4, 4, 0.1);
  S(0, 1) = S(2, 3) = 0.9;
  // Neglected entries must not matter.
  S(1, 0) = 42.0;
  S(2, 2) = -7.0;
  const double num = 0.8, mean = 2.2 / 6.0;
  const double den = 2 * std::pow(0.9 - mean, 2) + 4 * std::pow(0.1 - mean, 2);
  CHECK(den == doctest::Approx(0.853333).epsilon(1e-5));
  CHECK(fisher_cost(S, m) == doctest::Approx(-num * num / den).epsilon(1e-12));
  CHECK(fisher_cost(S, m) == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(fisher_cost(3.0 * S, m) == doctest::Approx(fisher_cost(S, m)).epsilon(1e-12));

  const Matrix w = fisher_weights(S, m);
  Matrix S2 = S;
  S2(3, 0) = -100.0;
  CHECK(fisher_weights(S2, m) == w);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j <= i; ++j) CHECK(w(i, j) == 0.0);

  CHECK_THROWS_AS(fisher_cost(Matrix::Constant(4, 4, 0.3), m), DegenerateVarianceError);
}

TEST_CASE("fisher gradient of identical directions is degenerate") {
  Matrix X(3, 4);
  for (int j = 0; j < 4; ++j) X.col(j) = (j + 1.0) * Eigen::Vector3d(1, 2, 3);
  const PairMasks m = build_masks(std::vector<Label>{1, 1, 2, 2}, 1.0);
  CHECK_THROWS_AS(fisher_grad(X, cosine_similarity(X, X), m), DegenerateVarianceError);
}

TEST_CASE("fisher gradient matches finite differences on 5x6") {
  Rng rng(7);
  const PairMasks m = build_masks(std::vector<Label>{1, 1, 2, 2, 3, 3}, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix X = random_matrix(rng, 5, 6);
    const Matrix g = fisher_grad(X, cosine_similarity(X, X), m);
    Matrix num(5, 6);
    for (Eigen::Index i = 0; i < X.size(); ++i)
      num.data()[i] = check::central_difference(
          [&] { return fisher_cost(cosine_similarity(X, X), m); }, X.data()[i]);
    CHECK(check::relative_error(g, num) < 1e-6);
  }
}
