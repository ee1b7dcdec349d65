#pragma once

#include <span>
#include <vector>

#include "l3s/geometry.hpp"
#include "l3s/image.hpp"
#include "l3s/tape.hpp"

namespace l3s {

/// Gaussian point splatting parameters. `scale_mu` cancels out of the point
/// size and is kept for configuration parity.
struct SplatConfig {
  double scale_mu = 10.0;
  double deblur_beta = 0.5;
  double sigma_min = 1e-3;  // normalized image units

  void validate() const;
};

/// Soft-coverage stroke rasterizer parameters, in pixels of the image being
/// rendered.
struct StrokeRasterConfig {
  double stroke_width = 1.5;
  double softness = 1.0;
  int polyline_segments = 32;

  void validate() const;
  /// Config for an image `scale` times the reference resolution; only the
  /// width follows the scale.
  StrokeRasterConfig scaled(double scale) const;
};

/// Differentiable pinhole projection of world points (n x 3) to rows of
/// (pixel x, pixel y, depth). Throws BehindCameraError on non-positive depth.
Var project_points(Tape& tape, const Camera& camera, Var points);
/// Row indices of `points` (n x 3) with positive camera-space depth.
std::vector<int> visible_rows(const Camera& camera, const Mat& points);

/// Gaussian splat intensity field J (height x width). `projected` holds rows
/// (x, y, depth) in pixels. The per-image maximum used for normalization is
/// held constant in the backward pass. An empty input gives an all-zero image.
Var splat_points(Tape& tape, Var projected, int width, int height, const SplatConfig& cfg);
GrayImage splat_points(std::span<const Projection> points, int width, int height,
                       const SplatConfig& cfg);

/// Splat sum before max-normalization (testing and diagnostics).
Mat splat_unnormalized(const Mat& projected, int width, int height, const SplatConfig& cfg);

/// Black-on-white polarity: 1 - J.
Var guidance_image(Tape& tape, Var intensity);
GrayImage guidance_image(const GrayImage& intensity);

/// Soft stroke rendering. `curves` holds one row per stroke with the four 2D
/// control points (x0, y0, x1, y1, x2, y2, x3, y3) in pixels. Each stroke
/// covers a pixel with logistic((width/2 - dist) / softness); the pixel value
/// is the product of (1 - coverage) over strokes on a white background.
Var raster_strokes(Tape& tape, Var curves, int width, int height, const StrokeRasterConfig& cfg);
GrayImage raster_strokes(std::span<const Bezier2D> curves, int width, int height,
                         const StrokeRasterConfig& cfg);

/// Packs curves into the n x 8 layout used by raster_strokes.
Mat pack_curves(std::span<const Bezier2D> curves);

}  // namespace l3s
