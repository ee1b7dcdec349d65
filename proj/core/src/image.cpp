#include "l3s/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "l3s/error.hpp"

namespace l3s {

GrayImage GrayImage::filled(int width, int height, double value) {
  if (width < 1 || height < 1) throw DomainError("image size must be at least 1x1");
  return GrayImage(Mat::Constant(height, width, value));
}

namespace {

// Weights w[o][i] of input cell i in output cell o along one axis.
std::vector<std::vector<std::pair<int, double>>> axis_weights(int in, int out) {
  std::vector<std::vector<std::pair<int, double>>> w(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * ratio, hi = (o + 1) * ratio;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(in, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[o].emplace_back(i, overlap / ratio);
    }
  }
  return w;
}

}  // namespace

GrayImage resize_area(const GrayImage& image, int width, int height) {
  if (width < 1 || height < 1) throw DomainError("resize_area: target size must be >= 1");
  if (width == image.width() && height == image.height()) return image;
  const auto wx = axis_weights(image.width(), width);
  const auto wy = axis_weights(image.height(), height);
  Mat out = Mat::Zero(height, width);
  for (int r = 0; r < height; ++r) {
    for (const auto& [ir, fy] : wy[r]) {
      for (int c = 0; c < width; ++c) {
        double acc = 0.0;
        for (const auto& [ic, fx] : wx[c]) acc += fx * image.pixels(ir, ic);
        out(r, c) += fy * acc;
      }
    }
  }
  return GrayImage(std::move(out));
}

}  // namespace l3s
