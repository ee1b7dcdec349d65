#include "l3s/perceptual.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "l3s/error.hpp"

namespace l3s {

void RobustParams::validate() const {
  if (!(scale > 0.0)) throw DomainError("robust loss scale c must be > 0");
  if (!std::isfinite(alpha)) throw DomainError("robust loss alpha must be finite");
}

namespace {

// rho and d rho / d x for the general robust loss.
std::pair<double, double> rho_and_slope(double x, const RobustParams& p) {
  const double c = p.scale, a = p.alpha;
  const double z = x / c;
  if (a == 2.0) return {0.5 * z * z, z / c};
  if (a == 0.0) return {std::log1p(0.5 * z * z), (z / c) / (0.5 * z * z + 1.0)};
  const double b = std::abs(a - 2.0);
  const double inner = z * z / b + 1.0;
  const double value = b / a * (std::pow(inner, 0.5 * a) - 1.0);
  const double slope = (z / c) * std::pow(inner, 0.5 * a - 1.0);
  return {value, slope};
}

}  // namespace

double robust_rho(double x, const RobustParams& params) {
  params.validate();
  return rho_and_slope(x, params).first;
}

Var robust_rho(Tape& tape, Var x, const RobustParams& params) {
  params.validate();
  const Mat& xv = tape.value(x);
  Mat out(xv.rows(), xv.cols());
  Mat slope(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const auto [v, s] = rho_and_slope(xv.data()[i], params);
    out.data()[i] = v;
    slope.data()[i] = s;
  }
  return tape.record(std::move(out), {x}, [x, slope](Tape& t, const Mat& g) {
    t.accumulate(x, g.cwiseProduct(slope));
  });
}

const std::vector<Mat>& FeatureStore::for_frame(int frame) const {
  auto it = probes.find(frame);
  if (it == probes.end()) {
    throw ConfigError("external features: no feature probes for frame " + std::to_string(frame));
  }
  return it->second;
}

std::string to_string(DistanceBackend b) {
  switch (b) {
    case DistanceBackend::pixel_robust: return "pixel_robust";
    case DistanceBackend::pyramid_gradient: return "pyramid_gradient";
    case DistanceBackend::external_features: return "external_features";
  }
  return "unknown";
}

DistanceBackend distance_backend_from_string(const std::string& name) {
  if (name == "pixel_robust") return DistanceBackend::pixel_robust;
  if (name == "pyramid_gradient") return DistanceBackend::pyramid_gradient;
  if (name == "external_features" || name == "external") return DistanceBackend::external_features;
  throw ConfigError("unknown image distance backend '" + name + "'");
}

std::string to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::orientation_histogram: return "orientation_histogram";
    case EmbeddingKind::external_embedding: return "external_embedding";
  }
  return "unknown";
}

EmbeddingKind embedding_kind_from_string(const std::string& name) {
  if (name == "orientation_histogram") return EmbeddingKind::orientation_histogram;
  if (name == "external_embedding" || name == "external") return EmbeddingKind::external_embedding;
  throw ConfigError("unknown embedding backend '" + name + "'");
}

void ImageDistanceConfig::validate() const {
  robust.validate();
  if (pyramid_levels < 1) throw ConfigError("pyramid_gradient needs at least one level");
  if (kind == DistanceBackend::external_features && !features) {
    throw ConfigError("external_features backend requires a feature source");
  }
}

void EmbeddingConfig::validate() const {
  if (grid < 1 || bins < 1) throw ConfigError("orientation histogram grid and bins must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("embedding epsilon must be > 0");
  if (kind == EmbeddingKind::external_embedding && !features) {
    throw ConfigError("external_embedding backend requires a feature source");
  }
}

// ---------------------------------------------------------------------------
// Image distance backends

namespace {

// 5-tap binomial blur followed by decimation; taps outside the image are
// clamped to the border.
constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) { return std::clamp<Eigen::Index>(i, 0, n - 1); }

Mat downsample2(const Mat& a) {
  const Eigen::Index h = a.rows() / 2, w = a.cols() / 2;
  Mat out = Mat::Zero(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      double v = 0.0;
      for (int i = 0; i < 5; ++i) {
        const Eigen::Index rr = clamp_index(2 * r + i - 2, a.rows());
        for (int j = 0; j < 5; ++j) v += kTaps[i] * kTaps[j] * a(rr, clamp_index(2 * c + j - 2, a.cols()));
      }
      out(r, c) = v;
    }
  }
  return out;
}

void downsample2_adjoint(const Mat& g, Mat& parent) {
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      for (int i = 0; i < 5; ++i) {
        const Eigen::Index rr = clamp_index(2 * r + i - 2, parent.rows());
        for (int j = 0; j < 5; ++j) parent(rr, clamp_index(2 * c + j - 2, parent.cols())) += kTaps[i] * kTaps[j] * g(r, c);
      }
    }
  }
}

std::vector<Mat> pyramid(const Mat& image, int levels) {
  std::vector<Mat> out{image};
  while (static_cast<int>(out.size()) < levels && out.back().rows() >= 2 && out.back().cols() >= 2) {
    out.push_back(downsample2(out.back()));
  }
  return out;
}

// Level term and its gradient with respect to the render level `a`.
double level_term(const Mat& a, const Mat& b, Mat* grad) {
  const Eigen::Index h = a.rows(), w = a.cols();
  int channels = 1;
  if (w > 1) ++channels;
  if (h > 1) ++channels;
  const double inv_ch = 1.0 / channels;
  const Mat diff = a - b;
  double value = diff.squaredNorm() / static_cast<double>(diff.size());
  if (grad) *grad = diff * (2.0 * inv_ch / static_cast<double>(diff.size()));
  if (w > 1) {
    const Mat ex = (diff.rightCols(w - 1) - diff.leftCols(w - 1));
    const double n = static_cast<double>(ex.size());
    value += ex.squaredNorm() / n;
    if (grad) {
      const Mat ge = ex * (2.0 * inv_ch / n);
      grad->rightCols(w - 1) += ge;
      grad->leftCols(w - 1) -= ge;
    }
  }
  if (h > 1) {
    const Mat ey = (diff.bottomRows(h - 1) - diff.topRows(h - 1));
    const double n = static_cast<double>(ey.size());
    value += ey.squaredNorm() / n;
    if (grad) {
      const Mat ge = ey * (2.0 * inv_ch / n);
      grad->bottomRows(h - 1) += ge;
      grad->topRows(h - 1) -= ge;
    }
  }
  return value * inv_ch;
}

// Value of the pyramid distance and, optionally, its gradient w.r.t. render.
double pyramid_distance(const Mat& render, const Mat& target, int levels, Mat* grad) {
  const auto pr = pyramid(render, levels);
  const auto pt = pyramid(target, levels);
  const double inv_levels = 1.0 / static_cast<double>(pr.size());
  double value = 0.0;
  std::vector<Mat> level_grads(pr.size());
  for (std::size_t l = 0; l < pr.size(); ++l) {
    value += level_term(pr[l], pt[l], grad ? &level_grads[l] : nullptr);
  }
  if (grad) {
    for (std::size_t l = pr.size(); l-- > 1;) {
      downsample2_adjoint(level_grads[l], level_grads[l - 1]);
    }
    *grad = level_grads[0] * inv_levels;
  }
  return value * inv_levels;
}

void check_same_size(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError("image_distance: image sizes differ (" + std::to_string(a.cols()) + "x" +
                      std::to_string(a.rows()) + " vs " + std::to_string(b.cols()) + "x" +
                      std::to_string(b.rows()) + ")");
  }
}

const std::vector<Mat>& probes_for(const FeatureStore& store, int frame, const Mat& image) {
  const auto& probes = store.for_frame(frame);
  if (probes.empty()) throw ConfigError("external features: empty probe set for frame " + std::to_string(frame));
  for (const Mat& p : probes) {
    if (p.rows() != image.rows() || p.cols() != image.cols()) {
      throw ConfigError("external features: probe size does not match the image for frame " +
                        std::to_string(frame));
    }
  }
  return probes;
}

}  // namespace

Var image_distance(Tape& tape, const ImageDistanceConfig& cfg, const GrayImage& target, Var render,
                   int frame) {
  cfg.validate();
  const Mat& j = tape.value(render);
  const Mat& i = target.pixels;
  check_same_size(i, j);
  switch (cfg.kind) {
    case DistanceBackend::pixel_robust: {
      Mat diff = (j - i).cwiseAbs();
      Mat sign = (j - i).array().sign().matrix();
      Var d = tape.record(std::move(diff), {render}, [render, sign](Tape& t, const Mat& g) {
        t.accumulate(render, g.cwiseProduct(sign));
      });
      return mean(tape, robust_rho(tape, d, cfg.robust));
    }
    case DistanceBackend::pyramid_gradient: {
      Mat grad;
      const double v = pyramid_distance(j, i, cfg.pyramid_levels, &grad);
      return tape.record(Mat::Constant(1, 1, v), {render}, [render, grad](Tape& t, const Mat& g) {
        t.accumulate(render, grad * g(0, 0));
      });
    }
    case DistanceBackend::external_features: {
      const auto& probes = probes_for(*cfg.features, frame, j);
      const double n = static_cast<double>(probes.size());
      double v = 0.0;
      Mat grad = Mat::Zero(j.rows(), j.cols());
      for (const Mat& p : probes) {
        const double d = p.cwiseProduct(j - i).sum();
        v += d * d / n;
        grad += p * (2.0 * d / n);
      }
      return tape.record(Mat::Constant(1, 1, v), {render}, [render, grad](Tape& t, const Mat& g) {
        t.accumulate(render, grad * g(0, 0));
      });
    }
  }
  throw ConfigError("image_distance: unknown backend");
}

double image_distance(const ImageDistanceConfig& cfg, const GrayImage& a, const GrayImage& b, int frame) {
  Tape tape;
  return tape.item(image_distance(tape, cfg, a, tape.constant(b.pixels), frame));
}

// ---------------------------------------------------------------------------
// Cosine distance and embeddings

double cosine_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw DomainError("cosine_distance: length mismatch");
  const double nx = x.norm(), ny = y.norm();
  if (!(nx > 0.0) || !(ny > 0.0)) throw DomainError("cosine_distance: zero vector");
  return 1.0 - x.dot(y) / (nx * ny);
}

Var cosine_distance(Tape& tape, Var x, Var y) {
  const Mat& xv = tape.value(x);
  const Mat& yv = tape.value(y);
  if (xv.rows() != 1 || yv.rows() != 1 || xv.cols() != yv.cols()) {
    throw DomainError("cosine_distance: inputs must be row vectors of equal length");
  }
  const double nx = xv.norm(), ny = yv.norm();
  if (!(nx > 0.0) || !(ny > 0.0)) throw DomainError("cosine_distance: zero vector");
  const double dot = xv.cwiseProduct(yv).sum();
  const double value = 1.0 - dot / (nx * ny);
  return tape.record(Mat::Constant(1, 1, value), {x, y}, [x, y, nx, ny, dot](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    const Mat& yv = t.value(y);
    // d(x.y / (|x||y|)) / dx = y / (|x||y|) - (x.y) x / (|x|^3 |y|)
    if (t.requires_grad(x)) {
      t.accumulate(x, -g(0, 0) * (yv / (nx * ny) - dot * xv / (nx * nx * nx * ny)));
    }
    if (t.requires_grad(y)) {
      t.accumulate(y, -g(0, 0) * (xv / (nx * ny) - dot * yv / (ny * ny * ny * nx)));
    }
  });
}

namespace {

// Per-cell histogram of forward-difference gradients. Bin b accumulates the
// positive part of the gradient projected on direction 2 pi b / bins.
Mat orientation_histogram(const Mat& img, int grid, int bins) {
  const Eigen::Index h = img.rows(), w = img.cols();
  Mat hist = Mat::Zero(1, grid * grid * bins);
  for (Eigen::Index r = 0; r + 1 < h; ++r) {
    const int cr = static_cast<int>(r * grid / h);
    for (Eigen::Index c = 0; c + 1 < w; ++c) {
      const int cc = static_cast<int>(c * grid / w);
      const double gx = img(r, c + 1) - img(r, c);
      const double gy = img(r + 1, c) - img(r, c);
      if (gx == 0.0 && gy == 0.0) continue;
      for (int b = 0; b < bins; ++b) {
        const double theta = 2.0 * std::numbers::pi * b / bins;
        const double proj = gx * std::cos(theta) + gy * std::sin(theta);
        if (proj > 0.0) hist(0, (cr * grid + cc) * bins + b) += proj;
      }
    }
  }
  return hist;
}

void orientation_histogram_adjoint(const Mat& img, int grid, int bins, const Mat& hist_grad, Mat& out) {
  const Eigen::Index h = img.rows(), w = img.cols();
  for (Eigen::Index r = 0; r + 1 < h; ++r) {
    const int cr = static_cast<int>(r * grid / h);
    for (Eigen::Index c = 0; c + 1 < w; ++c) {
      const int cc = static_cast<int>(c * grid / w);
      const double gx = img(r, c + 1) - img(r, c);
      const double gy = img(r + 1, c) - img(r, c);
      double agx = 0.0, agy = 0.0;
      for (int b = 0; b < bins; ++b) {
        const double theta = 2.0 * std::numbers::pi * b / bins;
        const double ct = std::cos(theta), st = std::sin(theta);
        if (gx * ct + gy * st > 0.0) {
          const double hg = hist_grad(0, (cr * grid + cc) * bins + b);
          agx += hg * ct;
          agy += hg * st;
        }
      }
      out(r, c + 1) += agx;
      out(r, c) -= agx + agy;
      out(r + 1, c) += agy;
    }
  }
}

}  // namespace

Var global_embedding(Tape& tape, const EmbeddingConfig& cfg, Var image, int frame) {
  cfg.validate();
  const Mat& img = tape.value(image);
  if (cfg.kind == EmbeddingKind::external_embedding) {
    const auto& probes = probes_for(*cfg.features, frame, img);
    Mat out(1, static_cast<Eigen::Index>(probes.size()));
    for (std::size_t k = 0; k < probes.size(); ++k) out(0, static_cast<Eigen::Index>(k)) = probes[k].cwiseProduct(img).sum();
    std::vector<Mat> copy = probes;
    return tape.record(std::move(out), {image}, [image, copy](Tape& t, const Mat& g) {
      Mat* gi = t.grad_buffer(image);
      if (!gi) return;
      for (std::size_t k = 0; k < copy.size(); ++k) *gi += copy[k] * g(0, static_cast<Eigen::Index>(k));
    });
  }
  const int grid = cfg.grid, bins = cfg.bins;
  const Mat raw = orientation_histogram(img, grid, bins);
  const Mat shifted = (raw.array() + cfg.epsilon).matrix();
  const double norm = shifted.norm();
  Mat out = shifted / norm;
  return tape.record(out, {image}, [image, grid, bins, out, norm](Tape& t, const Mat& g) {
    Mat* gi = t.grad_buffer(image);
    if (!gi) return;
    // d(v/|v|) = (g - (g.e) e) / |v|
    const Mat hist_grad = (g - g.cwiseProduct(out).sum() * out) / norm;
    orientation_histogram_adjoint(t.value(image), grid, bins, hist_grad, *gi);
  });
}

Eigen::VectorXd global_embedding(const EmbeddingConfig& cfg, const GrayImage& image, int frame) {
  Tape tape;
  const Mat& row = tape.value(global_embedding(tape, cfg, tape.constant(image.pixels), frame));
  return Eigen::Map<const Eigen::VectorXd>(row.data(), row.size());
}

}  // namespace l3s
