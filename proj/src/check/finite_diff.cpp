#include <algorithm>
#include <cmath>

#include "siamnet/check.hpp"
#include "siamnet/errors.hpp"

namespace siamnet::check {

double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> coords,
                                     double h) {
  std::vector<double> g(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) g[i] = central_difference(f, coords[i], h);
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

double relative_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("relative_error: matrix shapes differ");
  }
  return relative_error(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                        std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

bool CheckReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.pass(); });
}

const CheckEntry& CheckReport::worst() const {
  if (entries.empty()) throw UsageError("empty check report");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_error / a.threshold < b.max_error / b.threshold;
  });
}

}  // namespace siamnet::check
