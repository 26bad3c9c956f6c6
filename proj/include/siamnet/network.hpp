#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "siamnet/layers.hpp"
#include "siamnet/tensor.hpp"

namespace siamnet {

inline constexpr std::size_t kNumParts = 3;

/// Three overlapping horizontal bands of the image, full width.
struct PartScheme {
  std::size_t part_height = 48;
  std::array<std::size_t, kNumParts> offsets{0, 40, 80};

  friend bool operator==(const PartScheme&, const PartScheme&) = default;
};

/// Architecture of the part-based CNN. Defaults are the full-size network:
/// 64-channel C1 (7x7, shared by all parts), 64-channel C3 (5x5, one per
/// part) and a 500-d F5 per part, fused by summation.
struct NetConfig {
  std::size_t image_height = 128;
  std::size_t image_width = 48;
  PartScheme parts{};
  std::size_t in_channels = 3;
  std::size_t c1_channels = 64;
  std::size_t c1_kernel = 7;
  std::size_t c3_channels = 64;
  std::size_t c3_kernel = 5;
  std::size_t feature_dim = 500;
  layers::NormParams norm{};

  /// Flattened size of one part's second pooling output.
  std::size_t part_flat_dim() const;
  void validate() const;

  friend bool operator==(const NetConfig& a, const NetConfig& b);
};

/// Parameters of one sub-network.
struct ParamSet {
  Tensor c1_filters, c1_bias;
  std::array<Tensor, kNumParts> c3_filters, c3_bias;
  std::array<Tensor, kNumParts> f5_weights, f5_bias;

  /// Visits every tensor in declaration order (the serialization order).
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t parameter_count() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

enum class Mode : std::uint8_t { General = 0, ViewSpecific = 1 };
enum class Branch { A, B };

/// Learnable state of the siamese network. General mode holds one parameter
/// set shared by both branches; view-specific mode holds one per branch.
struct NetworkParams {
  NetConfig config;
  Mode mode = Mode::General;
  std::vector<ParamSet> sets;
  /// Bumped by every in-place update; forward caches record it.
  std::uint64_t revision = 0;

  const ParamSet& branch(Branch b) const;
  ParamSet& branch(Branch b);
  std::size_t parameter_count() const;

  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

/// Gradients share the layout of the parameters they belong to.
using ParamGrads = NetworkParams;

/// Same layout as `params`, all zeros.
NetworkParams zeros_like(const NetworkParams& params);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) for filters and weights, zero biases.
NetworkParams init_network(const NetConfig& config, Mode mode, std::uint64_t seed);

/// Three crops of an image, each [channels, part_height, width].
struct PartStack {
  std::array<Tensor, kNumParts> parts;
};

/// Per-part intermediate activations kept by a forward pass.
struct PartCache {
  Tensor input;         // [1,C,h,w]
  Tensor c1_act;        // after ReLU; positive exactly where the conv output was
  layers::PoolResult pool1;
  Tensor norm1;
  Tensor c3_act;
  layers::PoolResult pool2;
  Tensor flat;          // [1, part_flat_dim], normalized pool2 output
};

struct ForwardCache {
  std::array<PartCache, kNumParts> parts;
  Branch branch = Branch::A;
  const NetworkParams* owner = nullptr;
  std::uint64_t revision = 0;
  bool valid = false;
};

/// Feature vector (length feature_dim) of one image. Per part:
/// C1 -> ReLU -> maxpool -> norm -> C3 -> ReLU -> maxpool -> norm -> F5,
/// then the three part outputs are summed. Fills `cache` when given.
Tensor forward_features(const NetworkParams& params, const PartStack& parts, Branch branch,
                        ForwardCache* cache = nullptr);

/// Accumulates the parameter gradients for upstream gradient `grad_feature`
/// into `grads` (which must have the layout of the cached parameters).
/// General mode folds both branches into the single shared set.
void accumulate_backward(const NetworkParams& params, const ForwardCache& cache,
                         std::span<const double> grad_feature, ParamGrads& grads);

/// Fresh gradient for a single forward pass.
ParamGrads backward_features(const NetworkParams& params, const ForwardCache& cache,
                             std::span<const double> grad_feature);

// Model file: "SNET", u32 version, u8 mode, geometry block, shape table,
// then every parameter as little-endian f64 in declaration order.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::byte> serialize(const NetworkParams& params);
NetworkParams deserialize(std::span<const std::byte> bytes);
/// Bytes preceding the parameter payload for this architecture and mode.
std::size_t serialized_header_size(const NetworkParams& params);

void save_model(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_model(const std::filesystem::path& path);

}  // namespace siamnet
