#include "siamnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "siamnet/errors.hpp"

namespace siamnet::layers {
namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t k, kh, kw;      // filters
  std::size_t pad_h, pad_w;
  std::size_t out_h, out_w;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& filters, const ConvSpec& spec) {
  require_rank("conv2d input", input, 4);
  require_rank("conv2d filters", filters, 4);
  require_dim("conv2d input channels", 1, input.dim(1), spec.in_channels);
  require_dim("conv2d filter count", 0, filters.dim(0), spec.out_channels);
  require_dim("conv2d filter channels", 1, filters.dim(1), spec.in_channels);
  require_dim("conv2d filter height", 2, filters.dim(2), spec.kernel_h);
  require_dim("conv2d filter width", 3, filters.dim(3), spec.kernel_w);
  if (spec.zero_pad && (spec.kernel_h % 2 == 0 || spec.kernel_w % 2 == 0)) {
    throw DimensionError("conv2d: zero-padded convolution needs odd kernel dims, got " +
                         std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w));
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.k = spec.out_channels;
  g.kh = spec.kernel_h;
  g.kw = spec.kernel_w;
  g.pad_h = spec.zero_pad ? spec.kernel_h / 2 : 0;
  g.pad_w = spec.zero_pad ? spec.kernel_w / 2 : 0;
  if (g.h + 2 * g.pad_h < g.kh) require_dim("conv2d input height", 2, g.h, g.kh);
  if (g.w + 2 * g.pad_w < g.kw) require_dim("conv2d input width", 3, g.w, g.kw);
  g.out_h = g.h + 2 * g.pad_h - g.kh + 1;
  g.out_w = g.w + 2 * g.pad_w - g.kw + 1;
  return g;
}

// Output rows/cols [lo, hi) whose input tap at kernel offset `kofs` is inside the image.
struct Range {
  std::size_t lo, hi;
};

Range valid_range(std::size_t kofs, std::size_t pad, std::size_t in_size, std::size_t out_size) {
  const std::size_t lo = pad > kofs ? pad - kofs : 0;
  const std::size_t hi = in_size + pad > kofs ? std::min(out_size, in_size + pad - kofs) : 0;
  return {lo, std::max(lo, hi)};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, filters, spec);
  require_rank("conv2d bias", bias, 1);
  require_dim("conv2d bias", 0, bias.dim(0), g.k);

  Tensor out({g.n, g.k, g.out_h, g.out_w});
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t k = 0; k < g.k; ++k) {
      double* o = out.raw() + (n * g.k + k) * out_plane;
      std::fill(o, o + out_plane, bias[k]);
      for (std::size_t c = 0; c < g.c; ++c) {
        const double* in = input.raw() + (n * g.c + c) * in_plane;
        const double* f = filters.raw() + ((k * g.c + c) * g.kh) * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const Range ry = valid_range(ky, g.pad_h, g.h, g.out_h);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const Range rx = valid_range(kx, g.pad_w, g.w, g.out_w);
            const double wv = f[ky * g.kw + kx];
            for (std::size_t y = ry.lo; y < ry.hi; ++y) {
              const double* irow = in + (y + ky - g.pad_h) * g.w;
              double* orow = o + y * g.out_w;
              for (std::size_t x = rx.lo; x < rx.hi; ++x) orow[x] += wv * irow[x + kx - g.pad_w];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_output,
                          const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, filters, spec);
  require_rank("conv2d grad_output", grad_output, 4);
  require_dim("conv2d grad_output batch", 0, grad_output.dim(0), g.n);
  require_dim("conv2d grad_output channels", 1, grad_output.dim(1), g.k);
  require_dim("conv2d grad_output height", 2, grad_output.dim(2), g.out_h);
  require_dim("conv2d grad_output width", 3, grad_output.dim(3), g.out_w);

  ConvGrads grads{Tensor(input.shape()), Tensor(filters.shape()), Tensor({g.k})};
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t k = 0; k < g.k; ++k) {
      const double* go = grad_output.raw() + (n * g.k + k) * out_plane;
      double bsum = 0.0;
      for (std::size_t i = 0; i < out_plane; ++i) bsum += go[i];
      grads.bias[k] += bsum;
      for (std::size_t c = 0; c < g.c; ++c) {
        const double* in = input.raw() + (n * g.c + c) * in_plane;
        double* gin = grads.input.raw() + (n * g.c + c) * in_plane;
        const double* f = filters.raw() + ((k * g.c + c) * g.kh) * g.kw;
        double* gf = grads.filters.raw() + ((k * g.c + c) * g.kh) * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const Range ry = valid_range(ky, g.pad_h, g.h, g.out_h);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const Range rx = valid_range(kx, g.pad_w, g.w, g.out_w);
            const double wv = f[ky * g.kw + kx];
            double wsum = 0.0;
            for (std::size_t y = ry.lo; y < ry.hi; ++y) {
              const std::size_t row = (y + ky - g.pad_h) * g.w;
              const double* irow = in + row;
              double* girow = gin + row;
              const double* grow = go + y * g.out_w;
              for (std::size_t x = rx.lo; x < rx.hi; ++x) {
                wsum += grow[x] * irow[x + kx - g.pad_w];
                girow[x + kx - g.pad_w] += wv * grow[x];
              }
            }
            gf[ky * g.kw + kx] += wsum;
          }
        }
      }
    }
  }
  return grads;
}

PoolResult maxpool2(const Tensor& input) {
  require_rank("maxpool2 input", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0) throw DimensionError("maxpool2: axis 2 (height) is odd: " + std::to_string(h));
  if (w % 2 != 0) throw DimensionError("maxpool2: axis 3 (width) is odd: " + std::to_string(w));
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + (2 * y) * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : cand)
          if (input[idx] > input[best]) best = idx;
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                         const Tensor& grad_output) {
  if (argmax.size() != grad_output.size()) {
    throw DimensionError("maxpool2_backward: " + std::to_string(argmax.size()) +
                         " argmax entries for gradient of shape " +
                         shape_string(grad_output.shape()));
  }
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_output[i];
  return grad;
}

namespace {

// Per-element denominator base s = k0 + alpha * windowed sum of squares.
Tensor norm_scale(const Tensor& input, const NormParams& p) {
  require_rank("cross_channel_norm input", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor scale(input.shape(), p.k0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t lo = ch > p.radius ? ch - p.radius : 0;
      const std::size_t hi = std::min(c - 1, ch + p.radius);
      double* s = scale.raw() + (b * c + ch) * plane;
      for (std::size_t j = lo; j <= hi; ++j) {
        const double* in = input.raw() + (b * c + j) * plane;
        for (std::size_t i = 0; i < plane; ++i) s[i] += p.alpha * in[i] * in[i];
      }
    }
  }
  return scale;
}

}  // namespace

Tensor cross_channel_norm(const Tensor& input, const NormParams& params) {
  const Tensor scale = norm_scale(input, params);
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] * std::pow(scale[i], -params.beta);
  return out;
}

Tensor cross_channel_norm_backward(const Tensor& input, const NormParams& params,
                                   const Tensor& grad_output) {
  if (grad_output.shape() != input.shape()) {
    throw DimensionError("cross_channel_norm_backward: gradient shape " +
                         shape_string(grad_output.shape()) + " vs input " +
                         shape_string(input.shape()));
  }
  const Tensor scale = norm_scale(input, params);
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);

  // ratio[c] = g[c] * in[c] * s[c]^(-beta-1); every channel j in the window of c
  // receives -2 alpha beta in[j] ratio[c].
  Tensor ratio(input.shape());
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    ratio[i] = grad_output[i] * input[i] * std::pow(scale[i], -params.beta - 1.0);
    grad[i] = grad_output[i] * std::pow(scale[i], -params.beta);
  }
  const double coef = -2.0 * params.alpha * params.beta;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t lo = j > params.radius ? j - params.radius : 0;
      const std::size_t hi = std::min(c - 1, j + params.radius);
      double* g = grad.raw() + (b * c + j) * plane;
      const double* in = input.raw() + (b * c + j) * plane;
      for (std::size_t ch = lo; ch <= hi; ++ch) {
        const double* r = ratio.raw() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) g[i] += coef * in[i] * r[i];
      }
    }
  }
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (grad_output.shape() != input.shape()) {
    throw DimensionError("relu_backward: gradient shape " + shape_string(grad_output.shape()) +
                         " vs input " + shape_string(input.shape()));
  }
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  return grad;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank("fully_connected input", input, 2);
  require_rank("fully_connected weights", weights, 2);
  require_rank("fully_connected bias", bias, 1);
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weights.dim(0);
  require_dim("fully_connected weights", 1, weights.dim(1), din);
  require_dim("fully_connected bias", 0, bias.dim(0), dout);
  Tensor out({n, dout});
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = input.raw() + r * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* w = weights.raw() + o * din;
      double acc = 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += w[i] * x[i];
      out[r * dout + o] = acc + bias[o];
    }
  }
  return out;
}

DenseGrads fully_connected_backward(const Tensor& input, const Tensor& weights,
                                    const Tensor& grad_output) {
  require_rank("fully_connected input", input, 2);
  require_rank("fully_connected weights", weights, 2);
  require_rank("fully_connected grad_output", grad_output, 2);
  const std::size_t n = input.dim(0), din = input.dim(1), dout = weights.dim(0);
  require_dim("fully_connected weights", 1, weights.dim(1), din);
  require_dim("fully_connected grad_output rows", 0, grad_output.dim(0), n);
  require_dim("fully_connected grad_output cols", 1, grad_output.dim(1), dout);

  DenseGrads grads{Tensor(input.shape()), Tensor(weights.shape()), Tensor({dout})};
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = input.raw() + r * din;
    double* gx = grads.input.raw() + r * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double g = grad_output[r * dout + o];
      if (g == 0.0) continue;
      const double* w = weights.raw() + o * din;
      double* gw = grads.weights.raw() + o * din;
      for (std::size_t i = 0; i < din; ++i) {
        gw[i] += g * x[i];
        gx[i] += g * w[i];
      }
      grads.bias[o] += g;
    }
  }
  return grads;
}

}  // namespace siamnet::layers
