#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "l3s/image.hpp"
#include "l3s/tape.hpp"

namespace l3s {

/// Parameters of the general robust loss (Barron). c is the scale of the
/// quadratic bowl, alpha the shape; alpha = 1 is the pseudo-Huber case.
struct RobustParams {
  double alpha = 1.0;
  double scale = 0.1;

  void validate() const;
};

double robust_rho(double x, const RobustParams& params);
/// Elementwise robust loss.
Var robust_rho(Tape& tape, Var x, const RobustParams& params);

/// Linear feature probes supplied from outside, keyed by frame index. Each
/// probe is an image-sized weight map; the feature of image X under probe W
/// is sum(W .* X). Offline tools can export linearized perceptual features
/// this way.
struct FeatureStore {
  std::map<int, std::vector<Mat>> probes;

  const std::vector<Mat>& for_frame(int frame) const;
};

enum class DistanceBackend { pixel_robust, pyramid_gradient, external_features };
enum class EmbeddingKind { orientation_histogram, external_embedding };

std::string to_string(DistanceBackend b);
DistanceBackend distance_backend_from_string(const std::string& name);
std::string to_string(EmbeddingKind k);
EmbeddingKind embedding_kind_from_string(const std::string& name);

struct ImageDistanceConfig {
  DistanceBackend kind = DistanceBackend::pyramid_gradient;
  RobustParams robust;        // per-pixel loss for pixel_robust
  int pyramid_levels = 3;
  std::shared_ptr<const FeatureStore> features;  // external_features

  void validate() const;
};

struct EmbeddingConfig {
  EmbeddingKind kind = EmbeddingKind::orientation_histogram;
  int grid = 4;
  int bins = 8;
  double epsilon = 1e-6;
  std::shared_ptr<const FeatureStore> features;  // external_embedding

  void validate() const;
};

/// Distance between a fixed target image and a (differentiable) render.
/// `frame` selects probes for the external backend.
Var image_distance(Tape& tape, const ImageDistanceConfig& cfg, const GrayImage& target, Var render,
                   int frame = -1);
double image_distance(const ImageDistanceConfig& cfg, const GrayImage& a, const GrayImage& b,
                      int frame = -1);

/// 1 - x.y / (|x| |y|). Throws DomainError on a zero vector.
double cosine_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
/// Row vectors; both may carry gradients.
Var cosine_distance(Tape& tape, Var x, Var y);

/// Global image embedding as a 1 x k row.
Var global_embedding(Tape& tape, const EmbeddingConfig& cfg, Var image, int frame = -1);
Eigen::VectorXd global_embedding(const EmbeddingConfig& cfg, const GrayImage& image, int frame = -1);

}  // namespace l3s
