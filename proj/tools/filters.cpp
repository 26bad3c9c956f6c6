#include <algorithm>
#include <cmath>
#include <numeric>

#include "cli.hpp"
#include "siamnet/errors.hpp"

namespace siamnet::cli {

namespace {

// Min-max normalized copy of filter k in [0,1]; constant filters map to 0.
std::vector<double> normalized_filter(const Tensor& filters, std::size_t k) {
  const std::size_t len = filters.dim(1) * filters.dim(2) * filters.dim(3);
  const double* p = filters.raw() + k * len;
  const auto [lo, hi] = std::minmax_element(p, p + len);
  std::vector<double> out(len, 0.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < len; ++i) out[i] = (p[i] - *lo) / (*hi - *lo);
  }
  return out;
}

double pixel_hue(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  if (delta <= 0.0) return 0.0;
  double h;
  if (mx == r) {
    h = std::fmod((g - b) / delta, 6.0);
  } else if (mx == g) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h *= 60.0;
  return h < 0.0 ? h + 360.0 : h;
}

void require_rgb_filters(const Tensor& filters) {
  require_rank("filter bank", filters, 4);
  require_dim("filter bank", 1, filters.dim(1), 3);
}

}  // namespace

double mean_hue(const Tensor& filter) {
  require_rank("filter", filter, 3);
  require_dim("filter", 0, filter.dim(0), 3);
  const Tensor bank = filter.reshaped({1, 3, filter.dim(1), filter.dim(2)});
  const std::vector<double> n = normalized_filter(bank, 0);
  const std::size_t plane = filter.dim(1) * filter.dim(2);
  double sum = 0.0;
  for (std::size_t i = 0; i < plane; ++i) sum += pixel_hue(n[i], n[plane + i], n[2 * plane + i]);
  return sum / static_cast<double>(plane);
}

std::vector<std::size_t> hue_order(const Tensor& filters) {
  require_rgb_filters(filters);
  const std::size_t k = filters.dim(0);
  std::vector<double> hues(k);
  const std::size_t len = 3 * filters.dim(2) * filters.dim(3);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> one(filters.raw() + i * len, filters.raw() + (i + 1) * len);
    hues[i] = mean_hue(Tensor({3, filters.dim(2), filters.dim(3)}, std::move(one)));
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return hues[a] < hues[b]; });
  return order;
}

Tensor render_filter_grid(const Tensor& filters) {
  require_rgb_filters(filters);
  const std::size_t k = filters.dim(0), kh = filters.dim(2), kw = filters.dim(3);
  if (k == 0) throw UsageError("filter grid: no filters");
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
  const std::size_t rows = (k + cols - 1) / cols;
  const std::size_t height = rows * (kh + 1) + 1, width = cols * (kw + 1) + 1;
  Tensor grid({3, height, width}, 255.0);
  const std::vector<std::size_t> order = hue_order(filters);
  for (std::size_t t = 0; t < k; ++t) {
    const std::vector<double> n = normalized_filter(filters, order[t]);
    const std::size_t y0 = (t / cols) * (kh + 1) + 1, x0 = (t % cols) * (kw + 1) + 1;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x)
          grid.at(c, y0 + y, x0 + x) = std::round(255.0 * n[(c * kh + y) * kw + x]);
  }
  return grid;
}

}  // namespace siamnet::cli
