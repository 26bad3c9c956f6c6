#include "siamnet/network.hpp"

#include <cmath>
#include <string>

#include "siamnet/errors.hpp"
#include "siamnet/rng.hpp"

namespace siamnet {

std::size_t NetConfig::part_flat_dim() const {
  return c3_channels * (parts.part_height / 4) * (image_width / 4);
}

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("network config: " + msg); };
  if (in_channels == 0 || c1_channels == 0 || c3_channels == 0 || feature_dim == 0)
    fail("channel counts and feature_dim must be positive");
  if (c1_kernel % 2 == 0 || c3_kernel % 2 == 0) fail("kernel sizes must be odd");
  if (parts.part_height == 0 || parts.part_height % 4 != 0)
    fail("part height must be a positive multiple of 4 (two 2x2 poolings)");
  if (image_width == 0 || image_width % 4 != 0)
    fail("image width must be a positive multiple of 4 (two 2x2 poolings)");
  for (std::size_t off : parts.offsets)
    if (off + parts.part_height > image_height)
      fail("part at row " + std::to_string(off) + " extends past image height " +
           std::to_string(image_height));
  if (norm.k0 <= 0.0 || norm.alpha < 0.0) fail("normalization needs k0 > 0 and alpha >= 0");
}

bool operator==(const NetConfig& a, const NetConfig& b) {
  return a.image_height == b.image_height && a.image_width == b.image_width &&
         a.parts == b.parts && a.in_channels == b.in_channels &&
         a.c1_channels == b.c1_channels && a.c1_kernel == b.c1_kernel &&
         a.c3_channels == b.c3_channels && a.c3_kernel == b.c3_kernel &&
         a.feature_dim == b.feature_dim && a.norm.k0 == b.norm.k0 &&
         a.norm.alpha == b.norm.alpha && a.norm.beta == b.norm.beta &&
         a.norm.radius == b.norm.radius;
}

void ParamSet::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("c1_filters", c1_filters);
  fn("c1_bias", c1_bias);
  for (std::size_t p = 0; p < kNumParts; ++p) {
    fn("c3_filters." + std::to_string(p), c3_filters[p]);
    fn("c3_bias." + std::to_string(p), c3_bias[p]);
  }
  for (std::size_t p = 0; p < kNumParts; ++p) {
    fn("f5_weights." + std::to_string(p), f5_weights[p]);
    fn("f5_bias." + std::to_string(p), f5_bias[p]);
  }
}

void ParamSet::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ParamSet*>(this)->for_each(
      [&](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

const ParamSet& NetworkParams::branch(Branch b) const {
  if (sets.empty()) throw UsageError("network has no parameters");
  return (mode == Mode::ViewSpecific && b == Branch::B) ? sets.at(1) : sets.at(0);
}

ParamSet& NetworkParams::branch(Branch b) {
  return const_cast<ParamSet&>(static_cast<const NetworkParams*>(this)->branch(b));
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.parameter_count();
  return n;
}

void NetworkParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const std::string prefix = sets.size() > 1 ? (i == 0 ? "A." : "B.") : "";
    sets[i].for_each([&](const std::string& name, Tensor& t) { fn(prefix + name, t); });
  }
}

void NetworkParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<NetworkParams*>(this)->for_each(
      [&](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

namespace {

ParamSet make_param_set(const NetConfig& cfg) {
  ParamSet s;
  s.c1_filters = Tensor({cfg.c1_channels, cfg.in_channels, cfg.c1_kernel, cfg.c1_kernel});
  s.c1_bias = Tensor({cfg.c1_channels});
  for (std::size_t p = 0; p < kNumParts; ++p) {
    s.c3_filters[p] = Tensor({cfg.c3_channels, cfg.c1_channels, cfg.c3_kernel, cfg.c3_kernel});
    s.c3_bias[p] = Tensor({cfg.c3_channels});
    s.f5_weights[p] = Tensor({cfg.feature_dim, cfg.part_flat_dim()});
    s.f5_bias[p] = Tensor({cfg.feature_dim});
  }
  return s;
}

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

double conv_bound(const Tensor& filters) {
  const double receptive = static_cast<double>(filters.dim(2) * filters.dim(3));
  const double fan_in = static_cast<double>(filters.dim(1)) * receptive;
  const double fan_out = static_cast<double>(filters.dim(0)) * receptive;
  return std::sqrt(6.0 / (fan_in + fan_out));
}

double dense_bound(const Tensor& weights) {
  return std::sqrt(6.0 / static_cast<double>(weights.dim(0) + weights.dim(1)));
}

layers::ConvSpec c1_spec(const NetConfig& cfg) {
  return {cfg.in_channels, cfg.c1_channels, cfg.c1_kernel, cfg.c1_kernel, true};
}

layers::ConvSpec c3_spec(const NetConfig& cfg) {
  return {cfg.c1_channels, cfg.c3_channels, cfg.c3_kernel, cfg.c3_kernel, true};
}

}  // namespace

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams z;
  z.config = params.config;
  z.mode = params.mode;
  z.sets.reserve(params.sets.size());
  for (std::size_t i = 0; i < params.sets.size(); ++i) z.sets.push_back(make_param_set(params.config));
  return z;
}

NetworkParams init_network(const NetConfig& config, Mode mode, std::uint64_t seed) {
  config.validate();
  NetworkParams net;
  net.config = config;
  net.mode = mode;
  const std::size_t count = mode == Mode::General ? 1 : 2;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    ParamSet s = make_param_set(config);
    fill_uniform(s.c1_filters, conv_bound(s.c1_filters), rng);
    for (std::size_t p = 0; p < kNumParts; ++p) {
      fill_uniform(s.c3_filters[p], conv_bound(s.c3_filters[p]), rng);
      fill_uniform(s.f5_weights[p], dense_bound(s.f5_weights[p]), rng);
    }
    net.sets.push_back(std::move(s));
  }
  return net;
}

Tensor forward_features(const NetworkParams& params, const PartStack& stack, Branch branch,
                        ForwardCache* cache) {
  const NetConfig& cfg = params.config;
  const ParamSet& w = params.branch(branch);
  Tensor feature({cfg.feature_dim});
  for (std::size_t p = 0; p < kNumParts; ++p) {
    const Tensor& part = stack.parts[p];
    const std::string what = "part " + std::to_string(p);
    require_rank(what, part, 3);
    require_dim(what + " channels", 0, part.dim(0), cfg.in_channels);
    require_dim(what + " height", 1, part.dim(1), cfg.parts.part_height);
    require_dim(what + " width", 2, part.dim(2), cfg.image_width);

    PartCache pc;
    pc.input = part.reshaped({1, part.dim(0), part.dim(1), part.dim(2)});
    pc.c1_act = layers::relu(layers::conv2d(pc.input, w.c1_filters, w.c1_bias, c1_spec(cfg)));
    pc.pool1 = layers::maxpool2(pc.c1_act);
    pc.norm1 = layers::cross_channel_norm(pc.pool1.output, cfg.norm);
    pc.c3_act =
        layers::relu(layers::conv2d(pc.norm1, w.c3_filters[p], w.c3_bias[p], c3_spec(cfg)));
    pc.pool2 = layers::maxpool2(pc.c3_act);
    const Tensor norm2 = layers::cross_channel_norm(pc.pool2.output, cfg.norm);
    pc.flat = norm2.reshaped({1, norm2.size()});
    const Tensor f5 = layers::fully_connected(pc.flat, w.f5_weights[p], w.f5_bias[p]);
    feature.add_scaled(f5.reshaped({cfg.feature_dim}), 1.0);
    if (cache) cache->parts[p] = std::move(pc);
  }
  if (cache) {
    cache->branch = branch;
    cache->owner = &params;
    cache->revision = params.revision;
    cache->valid = true;
  }
  return feature;
}

void accumulate_backward(const NetworkParams& params, const ForwardCache& cache,
                         std::span<const double> grad_feature, ParamGrads& grads) {
  if (!cache.valid || cache.owner != &params) {
    throw UsageError("backward_features: no forward cache for these parameters");
  }
  if (cache.revision != params.revision) {
    throw UsageError("backward_features: cache is stale (parameters were updated since forward)");
  }
  const NetConfig& cfg = params.config;
  if (grad_feature.size() != cfg.feature_dim) {
    require_dim("backward_features gradient", 0, grad_feature.size(), cfg.feature_dim);
  }
  if (grads.sets.size() != params.sets.size()) {
    throw UsageError("backward_features: gradient layout does not match parameters");
  }
  const ParamSet& w = params.branch(cache.branch);
  ParamSet& g = grads.branch(cache.branch);
  const Tensor upstream({1, cfg.feature_dim},
                        std::vector<double>(grad_feature.begin(), grad_feature.end()));

  for (std::size_t p = 0; p < kNumParts; ++p) {
    const PartCache& pc = cache.parts[p];
    // Sum fusion copies the upstream gradient into every part.
    layers::DenseGrads f5 = layers::fully_connected_backward(pc.flat, w.f5_weights[p], upstream);
    g.f5_weights[p].add_scaled(f5.weights, 1.0);
    g.f5_bias[p].add_scaled(f5.bias, 1.0);

    const Tensor d_norm2 = f5.input.reshaped(pc.pool2.output.shape());
    const Tensor d_pool2 = layers::cross_channel_norm_backward(pc.pool2.output, cfg.norm, d_norm2);
    const Tensor d_c3_act = layers::maxpool2_backward(pc.c3_act.shape(), pc.pool2.argmax, d_pool2);
    const Tensor d_c3 = layers::relu_backward(pc.c3_act, d_c3_act);
    layers::ConvGrads c3 = layers::conv2d_backward(pc.norm1, w.c3_filters[p], d_c3, c3_spec(cfg));
    g.c3_filters[p].add_scaled(c3.filters, 1.0);
    g.c3_bias[p].add_scaled(c3.bias, 1.0);

    const Tensor d_pool1 = layers::cross_channel_norm_backward(pc.pool1.output, cfg.norm, c3.input);
    const Tensor d_c1_act = layers::maxpool2_backward(pc.c1_act.shape(), pc.pool1.argmax, d_pool1);
    const Tensor d_c1 = layers::relu_backward(pc.c1_act, d_c1_act);
    layers::ConvGrads c1 = layers::conv2d_backward(pc.input, w.c1_filters, d_c1, c1_spec(cfg));
    g.c1_filters.add_scaled(c1.filters, 1.0);
    g.c1_bias.add_scaled(c1.bias, 1.0);
  }
}

ParamGrads backward_features(const NetworkParams& params, const ForwardCache& cache,
                             std::span<const double> grad_feature) {
  ParamGrads grads = zeros_like(params);
  accumulate_backward(params, cache, grad_feature, grads);
  return grads;
}

}  // namespace siamnet
