#pragma once

#include "l3s/tape.hpp"

namespace l3s {

/// Grayscale intensities in [0, 1], stored height x width (row-major).
struct GrayImage {
  Mat pixels;

  GrayImage() = default;
  explicit GrayImage(Mat p) : pixels(std::move(p)) {}

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
  double at(int row, int col) const { return pixels(row, col); }

  static GrayImage filled(int width, int height, double value);
};

/// Box-filter resampling: each output pixel averages the input area it
/// covers (fractional overlaps are weighted).
GrayImage resize_area(const GrayImage& image, int width, int height);

}  // namespace l3s
