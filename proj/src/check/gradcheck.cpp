#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "siamnet/check.hpp"
#include "siamnet/errors.hpp"
#include "siamnet/rng.hpp"
#include "siamnet/trainer.hpp"

namespace siamnet::check {

namespace {

using pairwise::Label;
using pairwise::PairMasks;

constexpr double kStep = 1e-5;

Tensor random_tensor(Rng& rng, const Shape& shape, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Projection loss sum(r o out) so that d(loss)/d(out) = r.
double project(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

void append(std::vector<double>& dst, std::span<const double> src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

void append_numeric(std::vector<double>& dst, const std::function<double()>& f, std::span<double> x) {
  append(dst, numeric_gradient(f, x, kStep));
}

double check_conv(Rng& rng, std::size_t shape_index) {
  struct Case {
    Shape input;
    layers::ConvSpec spec;
  };
  static const std::array<Case, 3> cases{{
      {{1, 2, 5, 5}, {2, 3, 3, 3, true}},
      {{2, 3, 6, 4}, {3, 2, 5, 3, true}},
      {{1, 1, 7, 6}, {1, 4, 3, 5, false}},
  }};
  const Case& c = cases[shape_index % cases.size()];
  Tensor in = random_tensor(rng, c.input);
  Tensor w = random_tensor(rng, {c.spec.out_channels, c.spec.in_channels, c.spec.kernel_h, c.spec.kernel_w});
  Tensor b = random_tensor(rng, {c.spec.out_channels});
  const Tensor probe = layers::conv2d(in, w, b, c.spec);
  const Tensor r = random_tensor(rng, probe.shape());
  const layers::ConvGrads g = layers::conv2d_backward(in, w, r, c.spec);
  const auto loss = [&] { return project(layers::conv2d(in, w, b, c.spec), r); };
  std::vector<double> analytic, numeric;
  append(analytic, g.input.data());
  append(analytic, g.filters.data());
  append(analytic, g.bias.data());
  append_numeric(numeric, loss, in.data());
  append_numeric(numeric, loss, w.data());
  append_numeric(numeric, loss, b.data());
  return relative_error(analytic, numeric);
}

double check_pool(Rng& rng, std::size_t shape_index) {
  static const std::array<Shape, 3> shapes{{{1, 4, 8, 8}, {2, 3, 6, 4}, {1, 2, 4, 10}}};
  const Shape& shape = shapes[shape_index % shapes.size()];
  // Distinct values spaced well beyond the step so no perturbation moves an argmax.
  Tensor in(shape);
  std::vector<double> values(in.size());
  std::iota(values.begin(), values.end(), 0.0);
  rng.shuffle(std::span<double>(values));
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = 0.01 * values[i] - 1.0;
  const layers::PoolResult fwd = layers::maxpool2(in);
  const Tensor r = random_tensor(rng, fwd.output.shape());
  const Tensor g = layers::maxpool2_backward(in.shape(), fwd.argmax, r);
  const auto loss = [&] { return project(layers::maxpool2(in).output, r); };
  std::vector<double> numeric;
  append_numeric(numeric, loss, in.data());
  return relative_error(g.data(), numeric);
}

double check_norm(Rng& rng, std::size_t shape_index) {
  static const std::array<Shape, 3> shapes{{{1, 7, 3, 3}, {2, 5, 2, 4}, {1, 3, 4, 4}}};
  const Shape& shape = shapes[shape_index % shapes.size()];
  // Default parameters and a strongly non-linear setting.
  const layers::NormParams params =
      shape_index % 2 == 0 ? layers::NormParams{} : layers::NormParams{1.0, 0.3, 0.75, 2};
  Tensor in = random_tensor(rng, shape, 2.0);
  const Tensor r = random_tensor(rng, shape);
  const Tensor g = layers::cross_channel_norm_backward(in, params, r);
  const auto loss = [&] { return project(layers::cross_channel_norm(in, params), r); };
  std::vector<double> numeric;
  append_numeric(numeric, loss, in.data());
  return relative_error(g.data(), numeric);
}

double check_relu(Rng& rng, std::size_t shape_index) {
  static const std::array<Shape, 3> shapes{{{1, 3, 4, 4}, {2, 2, 3, 5}, {1, 1, 6, 2}}};
  const Shape& shape = shapes[shape_index % shapes.size()];
  Tensor in(shape);
  for (double& v : in.data()) {
    const double mag = rng.uniform(0.01, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  const Tensor r = random_tensor(rng, shape);
  const Tensor g = layers::relu_backward(in, r);
  const auto loss = [&] { return project(layers::relu(in), r); };
  std::vector<double> numeric;
  append_numeric(numeric, loss, in.data());
  return relative_error(g.data(), numeric);
}

double check_dense(Rng& rng, std::size_t shape_index) {
  struct Case {
    std::size_t n, in, out;
  };
  static const std::array<Case, 3> cases{{{4, 6, 3}, {2, 5, 4}, {3, 8, 2}}};
  const Case& c = cases[shape_index % cases.size()];
  Tensor in = random_tensor(rng, {c.n, c.in});
  Tensor w = random_tensor(rng, {c.out, c.in});
  Tensor b = random_tensor(rng, {c.out});
  const Tensor r = random_tensor(rng, {c.n, c.out});
  const layers::DenseGrads g = layers::fully_connected_backward(in, w, r);
  const auto loss = [&] { return project(layers::fully_connected(in, w, b), r); };
  std::vector<double> analytic, numeric;
  append(analytic, g.input.data());
  append(analytic, g.weights.data());
  append(analytic, g.bias.data());
  append_numeric(numeric, loss, in.data());
  append_numeric(numeric, loss, w.data());
  append_numeric(numeric, loss, b.data());
  return relative_error(analytic, numeric);
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

double matrix_fd_error(const Matrix& analytic, Matrix& x, const std::function<double()>& f) {
  const std::vector<double> numeric = numeric_gradient(f, span_of(x), kStep);
  return relative_error(span_of(analytic), numeric);
}

// Random labels over n >= 3 samples, redrawn until both pair types exist.
std::vector<Label> random_labels(Rng& rng, std::size_t n) {
  std::vector<Label> labels(n);
  for (;;) {
    const std::uint64_t classes = 2 + rng.below(std::max<std::uint64_t>(1, n / 2));
    for (auto& l : labels) l = static_cast<Label>(rng.below(classes));
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) (labels[i] == labels[j] ? pos : neg)++;
    if (pos > 0 && neg > 0) return labels;
  }
}

double cost_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

NetConfig toy_config() {
  NetConfig c;
  c.image_height = 48;
  c.image_width = 16;
  c.parts.part_height = 20;
  c.parts.offsets = {0, 14, 28};
  c.c1_channels = 8;
  c.c3_channels = 8;
  c.feature_dim = 20;
  return c;
}

CheckReport check_layers(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  CheckReport report;
  report.entries = {{"conv2d", 0, 1e-6}, {"maxpool2", 0, 1e-6}, {"cross_channel_norm", 0, 1e-6},
                    {"relu", 0, 1e-8}, {"fully_connected", 0, 1e-8}};
  for (std::size_t t = 0; t < std::max<std::size_t>(trials, 3); ++t) {
    auto& e = report.entries;
    e[0].max_error = std::max(e[0].max_error, check_conv(rng, t));
    e[1].max_error = std::max(e[1].max_error, check_pool(rng, t));
    e[2].max_error = std::max(e[2].max_error, check_norm(rng, t));
    e[3].max_error = std::max(e[3].max_error, check_relu(rng, t));
    e[4].max_error = std::max(e[4].max_error, check_dense(rng, t));
  }
  return report;
}

CheckReport check_pairwise(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  CheckReport report;
  report.entries = {{"deviance_grad_general", 0, 1e-6},  {"deviance_grad_specific.x", 0, 1e-6},
                    {"deviance_grad_specific.y", 0, 1e-6}, {"fisher_grad", 0, 1e-6},
                    {"fisher_grad_specific", 0, 1e-6},    {"matrix_vs_loop.general", 0, 1e-10},
                    {"matrix_vs_loop.specific", 0, 1e-10}, {"specific_vs_general", 0, 1e-10}};
  auto& e = report.entries;
  const double alpha = 2.0, beta = 0.5, c = 2.0;
  const std::vector<Label> labels{1, 1, 2, 2, 3, 3};
  const PairMasks general = pairwise::build_masks(labels, c);
  const std::vector<Label> xl{1, 1, 2, 3}, yl{1, 2, 4};
  const PairMasks specific = pairwise::build_masks(xl, yl, c);

  for (std::size_t t = 0; t < trials; ++t) {
    {
      Matrix X = random_matrix(rng, 5, 6);
      const Matrix g = pairwise::deviance_grad_general(X, pairwise::cosine_similarity(X, X), general,
                                                       alpha, beta);
      const double err = matrix_fd_error(g, X, [&] {
        return pairwise::deviance_cost(pairwise::cosine_similarity(X, X), general, alpha, beta);
      });
      e[0].max_error = std::max(e[0].max_error, err);
    }
    {
      Matrix X = random_matrix(rng, 5, 4), Y = random_matrix(rng, 5, 3);
      const auto [gx, gy] = pairwise::deviance_grad_specific(X, Y, pairwise::cosine_similarity(X, Y),
                                                             specific, alpha, beta);
      const auto cost = [&] {
        return pairwise::deviance_cost(pairwise::cosine_similarity(X, Y), specific, alpha, beta);
      };
      e[1].max_error = std::max(e[1].max_error, matrix_fd_error(gx, X, cost));
      e[2].max_error = std::max(e[2].max_error, matrix_fd_error(gy, Y, cost));
    }
    {
      Matrix X = random_matrix(rng, 5, 6);
      const Matrix g = pairwise::fisher_grad(X, pairwise::cosine_similarity(X, X), general);
      const double err = matrix_fd_error(
          g, X, [&] { return pairwise::fisher_cost(pairwise::cosine_similarity(X, X), general); });
      e[3].max_error = std::max(e[3].max_error, err);
    }
    {
      Matrix X = random_matrix(rng, 5, 4), Y = random_matrix(rng, 5, 3);
      const auto [gx, gy] =
          pairwise::fisher_grad_specific(X, Y, pairwise::cosine_similarity(X, Y), specific);
      const auto cost = [&] {
        return pairwise::fisher_cost(pairwise::cosine_similarity(X, Y), specific);
      };
      e[4].max_error = std::max({e[4].max_error, matrix_fd_error(gx, X, cost),
                                 matrix_fd_error(gy, Y, cost)});
    }
    {
      // Random sizes, labels and hyper-parameters, n <= 16.
      const std::size_t n = 3 + rng.below(14);
      const auto d = static_cast<Eigen::Index>(2 + rng.below(7));
      const double a = rng.uniform(0.5, 4.0), b = rng.uniform(-0.5, 0.9),
                   cc = rng.uniform(1.0, 4.0);
      const std::vector<Label> ls = random_labels(rng, n);
      const PairMasks masks = pairwise::build_masks(ls, cc);
      const Matrix X = random_matrix(rng, d, static_cast<Eigen::Index>(n));
      const Matrix S = pairwise::cosine_similarity(X, X);
      const auto [oc, og] = pairwise_oracle(X, masks, a, b);
      const double err =
          std::max(cost_error(pairwise::deviance_cost(S, masks, a, b), oc),
                   relative_error(pairwise::deviance_grad_general(X, S, masks, a, b), og));
      e[5].max_error = std::max(e[5].max_error, err);

      // Same batch fed as two identical views with the triangular masks.
      const auto [sx, sy] = pairwise::deviance_grad_specific(X, X, S, masks, a, b);
      e[7].max_error = std::max(e[7].max_error, relative_error(Matrix(sx + sy), og));
    }
    {
      const std::size_t n = 2 + rng.below(7), m = 2 + rng.below(7);
      const auto d = static_cast<Eigen::Index>(2 + rng.below(7));
      std::vector<Label> xs(n), ys(m);
      for (;;) {
        for (auto& l : xs) l = static_cast<Label>(rng.below(4));
        for (auto& l : ys) l = static_cast<Label>(rng.below(4));
        bool pos = false, neg = false;
        for (Label u : xs)
          for (Label v : ys) (u == v ? pos : neg) = true;
        if (pos && neg) break;
      }
      const double a = rng.uniform(0.5, 4.0), b = rng.uniform(-0.5, 0.9),
                   cc = rng.uniform(1.0, 4.0);
      const PairMasks masks = pairwise::build_masks(xs, ys, cc);
      const Matrix X = random_matrix(rng, d, static_cast<Eigen::Index>(n));
      const Matrix Y = random_matrix(rng, d, static_cast<Eigen::Index>(m));
      const Matrix S = pairwise::cosine_similarity(X, Y);
      const SpecificOracle o = pairwise_oracle_specific(X, Y, masks, a, b);
      const auto [gx, gy] = pairwise::deviance_grad_specific(X, Y, S, masks, a, b);
      const double err = std::max({cost_error(pairwise::deviance_cost(S, masks, a, b), o.cost),
                                   relative_error(gx, o.grad_x), relative_error(gy, o.grad_y)});
      e[6].max_error = std::max(e[6].max_error, err);
    }
  }
  return report;
}

CheckReport check_fullnet(std::size_t trials, std::uint64_t seed) {
  CheckReport report;
  report.entries = {{"fullnet.deviance.general", 0, 1e-4},
                    {"fullnet.deviance.specific", 0, 1e-4},
                    {"fullnet.fisher.general", 0, 1e-4}};
  const NetConfig net = toy_config();
  const std::array<std::pair<Mode, train::CostKind>, 3> variants{{
      {Mode::General, train::CostKind::Deviance},
      {Mode::ViewSpecific, train::CostKind::Deviance},
      {Mode::General, train::CostKind::Fisher},
  }};
  Rng rng({seed, 0x66756c6cULL});
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      NetworkParams params = init_network(net, variants[v].first, rng.next());
      // Non-zero biases so that every parameter carries gradient.
      params.for_each([&](const std::string& name, Tensor& tensor) {
        if (name.find("bias") != std::string::npos)
          for (double& b : tensor.data()) b = 0.1 * rng.normal();
      });

      std::vector<train::TrainSample> samples(6);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        for (auto& part : samples[i].parts.parts)
          part = random_tensor(rng, {net.in_channels, net.parts.part_height, net.image_width});
        samples[i].label = static_cast<Label>(i / 2);
        samples[i].view = i % 2;
      }
      const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5};
      train::TrainConfig config;
      config.batch_size = batch.size();
      config.mode = variants[v].first;
      config.cost = variants[v].second;

      ParamGrads grads = zeros_like(params);
      train::batch_cost(params, samples, batch, config, &grads);

      std::vector<double*> coords;
      std::vector<const double*> analytic_at;
      params.for_each([&](const std::string&, Tensor& tensor) {
        for (double& x : tensor.data()) coords.push_back(&x);
      });
      std::as_const(grads).for_each([&](const std::string&, const Tensor& tensor) {
        for (const double& x : tensor.data()) analytic_at.push_back(&x);
      });

      const auto cost = [&] { return train::batch_cost(params, samples, batch, config).cost; };
      std::vector<double> analytic, numeric;
      for (std::size_t k = 0; k < 50; ++k) {
        const std::size_t idx = rng.below(coords.size());
        analytic.push_back(*analytic_at[idx]);
        numeric.push_back(central_difference(cost, *coords[idx], kStep));
      }
      auto& entry = report.entries[v];
      entry.max_error = std::max(entry.max_error, relative_error(analytic, numeric));
    }
  }
  return report;
}

}  // namespace siamnet::check
