#include "l3s/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "l3s/error.hpp"
#include "l3s/parallel.hpp"

namespace l3s {

void SplatConfig::validate() const {
  if (!(scale_mu > 0.0) || !(deblur_beta > 0.0) || !(sigma_min > 0.0)) {
    throw ConfigError("splat config: mu, beta and sigma_min must be > 0");
  }
}

void StrokeRasterConfig::validate() const {
  if (!(stroke_width > 0.0) || !(softness > 0.0)) {
    throw ConfigError("stroke raster config: width and softness must be > 0");
  }
  if (polyline_segments < 4) throw ConfigError("stroke raster config: need >= 4 polyline segments");
}

StrokeRasterConfig StrokeRasterConfig::scaled(double scale) const {
  StrokeRasterConfig c = *this;
  c.stroke_width *= scale;
  return c;
}

// ---------------------------------------------------------------------------
// Projection

std::vector<int> visible_rows(const Camera& camera, const Mat& points) {
  const Mat3 r = camera.rotation();
  const Vec3 tr = camera.translation();
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double z = r.row(2).dot(Vec3(points(i, 0), points(i, 1), points(i, 2))) + tr.z();
    if (z > kMinDepth) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

Var project_points(Tape& tape, const Camera& camera, Var points) {
  const Mat& p = tape.value(points);
  if (p.cols() != 3) throw DomainError("project_points: points must be n x 3");
  const Mat3 r = camera.rotation();
  const Vec3 tr = camera.translation();
  Mat cam(p.rows(), 3);
  Mat out(p.rows(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Vec3 pc = r * Vec3(p(i, 0), p(i, 1), p(i, 2)) + tr;
    if (!(pc.z() > kMinDepth)) {
      throw BehindCameraError("project_points: point " + std::to_string(i) + " behind the camera");
    }
    cam.row(i) = pc.transpose();
    out(i, 0) = camera.fx * pc.x() / pc.z() + camera.cx;
    out(i, 1) = camera.fy * pc.y() / pc.z() + camera.cy;
    out(i, 2) = pc.z();
  }
  const double fx = camera.fx, fy = camera.fy;
  return tape.record(std::move(out), {points}, [points, cam, r, fx, fy](Tape& t, const Mat& g) {
    Mat* gp = t.grad_buffer(points);
    if (!gp) return;
    for (Eigen::Index i = 0; i < cam.rows(); ++i) {
      const double x = cam(i, 0), y = cam(i, 1), z = cam(i, 2);
      // d(out)/d(camera point)
      const Vec3 gc(g(i, 0) * fx / z, g(i, 1) * fy / z,
                    -g(i, 0) * fx * x / (z * z) - g(i, 1) * fy * y / (z * z) + g(i, 2));
      gp->row(i) += (r.transpose() * gc).transpose();
    }
  });
}

// ---------------------------------------------------------------------------
// Gaussian splatting

namespace {

struct SplatSizes {
  std::vector<double> sigma;
  std::vector<char> clamped;
  Eigen::Index argmin = 0;
  Eigen::Index argmax = 0;
  double dmin = 0.0;
  double dmax = 0.0;
  bool flat = true;
  double gain = 0.0;  // (2 / min(W, H)) * beta
};

SplatSizes splat_sizes(const Mat& projected, int width, int height, const SplatConfig& cfg) {
  SplatSizes s;
  const Eigen::Index n = projected.rows();
  s.sigma.resize(n);
  s.clamped.resize(n);
  s.gain = 2.0 / std::min(width, height) * cfg.deblur_beta;
  if (n == 0) return s;
  const auto depth = projected.col(2);
  s.dmin = depth.minCoeff(&s.argmin);
  s.dmax = depth.maxCoeff(&s.argmax);
  const double span = s.dmax - s.dmin;
  s.flat = !(span > 1e-12 * std::max(1.0, std::abs(s.dmax)));
  for (Eigen::Index j = 0; j < n; ++j) {
    const double nd = s.flat ? 1.0 : (s.dmax - depth(j)) / span;
    const double sig = s.gain * nd;
    s.clamped[j] = sig < cfg.sigma_min;
    s.sigma[j] = s.clamped[j] ? cfg.sigma_min : sig;
  }
  return s;
}

constexpr double kSplatCutoff = 8.0;  // window half-size in sigmas

struct SplatWindow {
  int c0, c1, r0, r1;
};

SplatWindow splat_window(double u, double v, double sigma, int width, int height) {
  const double m = std::min(width, height);
  const double reach = kSplatCutoff * sigma;
  // pixel center c has u_c = (2c + 1 - W) / m
  auto lo = [m](double x, int size) { return static_cast<int>(std::ceil((x * m + size - 1) / 2.0)); };
  auto hi = [m](double x, int size) { return static_cast<int>(std::floor((x * m + size - 1) / 2.0)); };
  SplatWindow w;
  w.c0 = std::max(0, lo(u - reach, width));
  w.c1 = std::min(width - 1, hi(u + reach, width));
  w.r0 = std::max(0, lo(v - reach, height));
  w.r1 = std::min(height - 1, hi(v + reach, height));
  return w;
}

}  // namespace

Mat splat_unnormalized(const Mat& projected, int width, int height, const SplatConfig& cfg) {
  if (width < 1 || height < 1) throw DomainError("splat_points: image size must be >= 1");
  if (projected.rows() > 0 && projected.cols() != 3) throw DomainError("splat_points: rows must be (x, y, depth)");
  cfg.validate();
  const SplatSizes sizes = splat_sizes(projected, width, height, cfg);
  const double m = std::min(width, height);
  Mat sum = Mat::Zero(height, width);
  for (Eigen::Index j = 0; j < projected.rows(); ++j) {
    const double u = (2.0 * projected(j, 0) - width) / m;
    const double v = (2.0 * projected(j, 1) - height) / m;
    const double sig = sizes.sigma[j];
    const double inv2 = 1.0 / (2.0 * sig * sig);
    const SplatWindow w = splat_window(u, v, sig, width, height);
    for (int r = w.r0; r <= w.r1; ++r) {
      const double dv = (2.0 * r + 1.0 - height) / m - v;
      for (int c = w.c0; c <= w.c1; ++c) {
        const double du = (2.0 * c + 1.0 - width) / m - u;
        sum(r, c) += std::exp(-(du * du + dv * dv) * inv2);
      }
    }
  }
  return sum;
}

Var splat_points(Tape& tape, Var projected, int width, int height, const SplatConfig& cfg) {
  const Mat& p = tape.value(projected);
  Mat sum = splat_unnormalized(p, width, height, cfg);
  const double peak = sum.size() > 0 ? sum.maxCoeff() : 0.0;
  Mat out = peak > 0.0 ? Mat(sum / peak) : Mat::Zero(height, width);
  if (!(peak > 0.0)) return tape.constant(std::move(out));
  return tape.record(std::move(out), {projected}, [projected, width, height, cfg, peak](Tape& t, const Mat& g) {
    Mat* gp = t.grad_buffer(projected);
    if (!gp) return;
    const Mat& p = t.value(projected);
    const SplatSizes sizes = splat_sizes(p, width, height, cfg);
    const double m = std::min(width, height);
    const double span = sizes.dmax - sizes.dmin;
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      const double u = (2.0 * p(j, 0) - width) / m;
      const double v = (2.0 * p(j, 1) - height) / m;
      const double sig = sizes.sigma[j];
      const double inv_s2 = 1.0 / (sig * sig);
      const SplatWindow w = splat_window(u, v, sig, width, height);
      double gu = 0.0, gv = 0.0, gs = 0.0;
      for (int r = w.r0; r <= w.r1; ++r) {
        const double dv = (2.0 * r + 1.0 - height) / m - v;
        for (int c = w.c0; c <= w.c1; ++c) {
          const double du = (2.0 * c + 1.0 - width) / m - u;
          const double d2 = du * du + dv * dv;
          const double e = std::exp(-0.5 * d2 * inv_s2) * g(r, c) / peak;
          // d e / d u_j = e * (u_i - u_j) / sigma^2
          gu += e * du * inv_s2;
          gv += e * dv * inv_s2;
          gs += e * d2 * inv_s2 / sig;
        }
      }
      (*gp)(j, 0) += gu * 2.0 / m;
      (*gp)(j, 1) += gv * 2.0 / m;
      if (!sizes.clamped[j] && !sizes.flat) {
        const double k = sizes.gain;
        (*gp)(j, 2) += gs * (-k / span);
        (*gp)(sizes.argmax, 2) += gs * k * (p(j, 2) - sizes.dmin) / (span * span);
        (*gp)(sizes.argmin, 2) += gs * k * (sizes.dmax - p(j, 2)) / (span * span);
      }
    }
  });
}

GrayImage splat_points(std::span<const Projection> points, int width, int height,
                       const SplatConfig& cfg) {
  Mat p(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) << points[i].pixel.x(), points[i].pixel.y(), points[i].depth;
  }
  Tape tape;
  return GrayImage(tape.value(splat_points(tape, tape.constant(std::move(p)), width, height, cfg)));
}

Var guidance_image(Tape& tape, Var intensity) {
  return add_scalar(tape, scale(tape, intensity, -1.0), 1.0);
}

GrayImage guidance_image(const GrayImage& intensity) {
  return GrayImage(Mat((1.0 - intensity.pixels.array()).matrix()));
}

// ---------------------------------------------------------------------------
// Stroke rasterization

namespace {

// Coverage below exp(-40) leaves 1 - c == 1 in double precision.
constexpr double kCoverageMargin = 40.0;

struct Polyline {
  std::vector<Vec2> points;
  double x0, x1, y0, y1;  // bounding box expanded by the coverage margin
};

std::vector<std::array<double, 4>> bernstein_table(int segments) {
  std::vector<std::array<double, 4>> table;
  for (int k = 0; k <= segments; ++k) table.push_back(bernstein(static_cast<double>(k) / segments));
  return table;
}

std::vector<Polyline> build_polylines(const Mat& curves, const std::vector<std::array<double, 4>>& basis,
                                      double margin) {
  std::vector<Polyline> lines(static_cast<std::size_t>(curves.rows()));
  for (Eigen::Index s = 0; s < curves.rows(); ++s) {
    Polyline& pl = lines[s];
    pl.x0 = pl.y0 = std::numeric_limits<double>::infinity();
    pl.x1 = pl.y1 = -std::numeric_limits<double>::infinity();
    for (const auto& b : basis) {
      Vec2 p = Vec2::Zero();
      for (int j = 0; j < 4; ++j) p += b[j] * Vec2(curves(s, 2 * j), curves(s, 2 * j + 1));
      pl.points.push_back(p);
      pl.x0 = std::min(pl.x0, p.x());
      pl.x1 = std::max(pl.x1, p.x());
      pl.y0 = std::min(pl.y0, p.y());
      pl.y1 = std::max(pl.y1, p.y());
    }
    pl.x0 -= margin;
    pl.x1 += margin;
    pl.y0 -= margin;
    pl.y1 += margin;
  }
  return lines;
}

struct Closest {
  double dist;
  int segment;
  double tau;
  Vec2 point;
};

Closest closest_on_polyline(const Polyline& pl, const Vec2& p) {
  Closest best{std::numeric_limits<double>::infinity(), 0, 0.0, pl.points[0]};
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < pl.points.size(); ++k) {
    const Vec2& a = pl.points[k];
    const Vec2 ab = pl.points[k + 1] - a;
    const double len2 = ab.squaredNorm();
    double tau = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    tau = std::clamp(tau, 0.0, 1.0);
    const Vec2 q = a + tau * ab;
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = {0.0, static_cast<int>(k), tau, q};
    }
  }
  best.dist = std::sqrt(best_d2);
  return best;
}

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr std::size_t kRowChunk = 8;

void check_curves(const Mat& curves, int width, int height, const StrokeRasterConfig& cfg) {
  if (width < 1 || height < 1) throw DomainError("raster_strokes: image size must be >= 1");
  if (curves.rows() > 0 && curves.cols() != 8) throw DomainError("raster_strokes: curves must be n x 8");
  cfg.validate();
}

}  // namespace

Mat pack_curves(std::span<const Bezier2D> curves) {
  Mat m(static_cast<Eigen::Index>(curves.size()), 8);
  for (std::size_t s = 0; s < curves.size(); ++s) {
    for (int j = 0; j < 4; ++j) {
      m(static_cast<Eigen::Index>(s), 2 * j) = curves[s].control_points[j].x();
      m(static_cast<Eigen::Index>(s), 2 * j + 1) = curves[s].control_points[j].y();
    }
  }
  return m;
}

Var raster_strokes(Tape& tape, Var curves, int width, int height, const StrokeRasterConfig& cfg) {
  const Mat& cv = tape.value(curves);
  check_curves(cv, width, height, cfg);
  const auto basis = bernstein_table(cfg.polyline_segments);
  const double half = 0.5 * cfg.stroke_width;
  const double margin = half + kCoverageMargin * cfg.softness;
  const auto lines = build_polylines(cv, basis, margin);

  Mat out = Mat::Ones(height, width);
  parallel_chunks(static_cast<std::size_t>(height), kRowChunk, [&](std::size_t, std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const double py = r + 0.5;
      for (int c = 0; c < width; ++c) {
        const double px = c + 0.5;
        double value = 1.0;
        for (const Polyline& pl : lines) {
          if (px < pl.x0 || px > pl.x1 || py < pl.y0 || py > pl.y1) continue;
          const Closest cl = closest_on_polyline(pl, Vec2(px, py));
          value *= 1.0 - logistic((half - cl.dist) / cfg.softness);
        }
        out(static_cast<Eigen::Index>(r), c) = value;
      }
    }
  });

  return tape.record(std::move(out), {curves}, [curves, width, height, cfg, basis, lines, half](Tape& t, const Mat& g) {
    Mat* gc = t.grad_buffer(curves);
    if (!gc) return;
    const std::size_t strokes = lines.size();
    const std::size_t npts = basis.size();
    const std::size_t chunks = (static_cast<std::size_t>(height) + kRowChunk - 1) / kRowChunk;
    // Per-chunk adjoints of polyline points, reduced in chunk order.
    std::vector<Mat> partial(chunks);
    parallel_chunks(static_cast<std::size_t>(height), kRowChunk, [&](std::size_t chunk, std::size_t r0, std::size_t r1) {
      Mat acc = Mat::Zero(static_cast<Eigen::Index>(strokes * npts), 2);
      std::vector<std::size_t> hit;
      std::vector<Closest> near;
      std::vector<double> keep;  // 1 - coverage
      std::vector<double> cov;
      for (std::size_t r = r0; r < r1; ++r) {
        const double py = r + 0.5;
        for (int c = 0; c < width; ++c) {
          const double gpix = g(static_cast<Eigen::Index>(r), c);
          if (gpix == 0.0) continue;
          const double px = c + 0.5;
          hit.clear();
          near.clear();
          keep.clear();
          cov.clear();
          for (std::size_t s = 0; s < strokes; ++s) {
            const Polyline& pl = lines[s];
            if (px < pl.x0 || px > pl.x1 || py < pl.y0 || py > pl.y1) continue;
            const Closest cl = closest_on_polyline(pl, Vec2(px, py));
            const double cs = logistic((half - cl.dist) / cfg.softness);
            hit.push_back(s);
            near.push_back(cl);
            cov.push_back(cs);
            keep.push_back(1.0 - cs);
          }
          const std::size_t h = hit.size();
          if (h == 0) continue;
          // prefix/suffix products of (1 - c) exclude each stroke in turn
          std::vector<double> prefix(h + 1, 1.0), suffix(h + 1, 1.0);
          for (std::size_t i = 0; i < h; ++i) prefix[i + 1] = prefix[i] * keep[i];
          for (std::size_t i = h; i-- > 0;) suffix[i] = suffix[i + 1] * keep[i];
          for (std::size_t i = 0; i < h; ++i) {
            const Closest& cl = near[i];
            if (!(cl.dist > 0.0)) continue;
            const double others = prefix[i] * suffix[i + 1];
            // d value / d c = -others; d c / d dist = -c (1 - c) / softness
            const double gdist = gpix * others * cov[i] * keep[i] / cfg.softness;
            const Vec2 dir = (cl.point - Vec2(px, py)) / cl.dist;
            const Eigen::Index base = static_cast<Eigen::Index>(hit[i] * npts + cl.segment);
            acc.row(base) += (gdist * (1.0 - cl.tau) * dir).transpose();
            acc.row(base + 1) += (gdist * cl.tau * dir).transpose();
          }
        }
      }
      partial[chunk] = std::move(acc);
    });
    Mat total = Mat::Zero(static_cast<Eigen::Index>(strokes * npts), 2);
    for (const Mat& p : partial) {
      if (p.size() > 0) total += p;
    }
    for (std::size_t s = 0; s < strokes; ++s) {
      for (std::size_t k = 0; k < npts; ++k) {
        const auto row = total.row(static_cast<Eigen::Index>(s * npts + k));
        for (int j = 0; j < 4; ++j) {
          (*gc)(static_cast<Eigen::Index>(s), 2 * j) += basis[k][j] * row(0);
          (*gc)(static_cast<Eigen::Index>(s), 2 * j + 1) += basis[k][j] * row(1);
        }
      }
    }
  });
}

GrayImage raster_strokes(std::span<const Bezier2D> curves, int width, int height,
                         const StrokeRasterConfig& cfg) {
  Tape tape;
  return GrayImage(tape.value(raster_strokes(tape, tape.constant(pack_curves(curves)), width, height, cfg)));
}

}  // namespace l3s
