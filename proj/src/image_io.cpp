#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "siamnet/dataio.hpp"
#include "siamnet/errors.hpp"

namespace siamnet::data {

Tensor read_image_rgb(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("image not found: " + path.string());
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image: " + path.string());
  const auto h = static_cast<std::size_t>(bgr.rows), w = static_cast<std::size_t>(bgr.cols);
  Tensor rgb({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x) {
      rgb.at(0, y, x) = row[x][2];
      rgb.at(1, y, x) = row[x][1];
      rgb.at(2, y, x) = row[x][0];
    }
  }
  return rgb;
}

void write_image_rgb(const std::filesystem::path& path, const Tensor& rgb) {
  require_rank("write_image_rgb", rgb, 3);
  require_dim("write_image_rgb channels", 0, rgb.dim(0), 3);
  const int h = static_cast<int>(rgb.dim(1)), w = static_cast<int>(rgb.dim(2));
  cv::Mat bgr(h, w, CV_8UC3);
  auto to_byte = [](double v) {
    return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
  };
  for (int y = 0; y < h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      row[x][2] = to_byte(rgb.at(0, y, x));
      row[x][1] = to_byte(rgb.at(1, y, x));
      row[x][0] = to_byte(rgb.at(2, y, x));
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image: " + path.string());
}

}  // namespace siamnet::data
