#pragma once

#include <cstddef>
#include <vector>

#include "siamnet/tensor.hpp"

/// Layer primitives of the part-based CNN. Activations are NCHW; every
/// forward has a matching backward that takes the upstream gradient.
namespace siamnet::layers {

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  bool zero_pad = true;  ///< "same" output size; kernel dims must be odd
};

struct ConvGrads {
  Tensor input;
  Tensor filters;
  Tensor bias;
};

/// Cross-correlation of `input` [N,C,H,W] with `filters` [K,C,kh,kw] plus bias [K].
Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, const ConvSpec& spec);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_output,
                          const ConvSpec& spec);

struct PoolResult {
  Tensor output;
  /// Flat input offset of the winning element for every output element.
  std::vector<std::size_t> argmax;
};

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major scan.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                         const Tensor& grad_output);

struct NormParams {
  double k0 = 1.0;
  double alpha = 1e-4;
  double beta = 0.75;
  std::size_t radius = 2;
};

/// out[c] = in[c] / (k0 + alpha * sum_{|c'-c| <= radius} in[c']^2)^beta,
/// channel window clipped at the boundaries.
Tensor cross_channel_norm(const Tensor& input, const NormParams& params);
Tensor cross_channel_norm_backward(const Tensor& input, const NormParams& params,
                                   const Tensor& grad_output);

Tensor relu(const Tensor& input);
/// Gradient passes where input > 0; zero at and below 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

/// Affine map of each row of `input` [N,D_in] by `weights` [D_out,D_in] and `bias` [D_out].
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias);
DenseGrads fully_connected_backward(const Tensor& input, const Tensor& weights,
                                    const Tensor& grad_output);

}  // namespace siamnet::layers
