#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "l3s/geometry.hpp"
#include "l3s/nn.hpp"
#include "l3s/perceptual.hpp"
#include "l3s/raster.hpp"
#include "l3s/scene_io.hpp"
#include "l3s/tape.hpp"

namespace l3s {

/// Stage-1 optimization settings. Loss weights and learning rates default to
/// the published values.
struct GuidanceConfig {
  int point_count = 10000;
  double w_frame = 0.1;
  double w_temporal = 0.05;
  double w_rigid = 1e-4;
  int iterations = 2000;
  double reset_at = 0.5;
  double lr_points = 1e-3;
  double lr_mlp = 5e-4;
  double resolution_scale = 0.25;
  int rigid_subsample = 512;
  std::uint64_t seed = 0;
  bool desk_network = false;  // small MLP profile instead of 8x256
  int spatial_frequencies = 10;
  int temporal_frequencies = 10;
  SplatConfig splat;
  RobustParams robust;

  void validate() const;
  MlpShape network_shape() const;
};

/// Canonical point cloud plus a time-conditioned displacement network.
struct GuidanceModel {
  Mat canonical_points;  // n x 3
  Mlp deform_net;
  EncoderConfig encoder;

  std::size_t point_count() const { return static_cast<std::size_t>(canonical_points.rows()); }
};

/// Neighbouring time pair for the velocity and rigidity terms.
struct TimeSample {
  double t = 0.0;
  double t_prev = 0.0;
  double dt = 0.0;
};

/// Draws t_prev uniformly in [t - dt, t) (or (t, t + dt] when t - dt < 0).
TimeSample sample_time_pair(double t, double dt, std::mt19937_64& rng);

/// Fresh model: `cfg.point_count` points uniform in `box`, zero-output
/// deformation head.
GuidanceModel init_guidance(const Box3& box, const GuidanceConfig& cfg);

struct GuidanceBinding {
  Var points;
  MlpBinding net;
};
GuidanceBinding bind_guidance(Tape& tape, const GuidanceModel& model, bool trainable);

/// Network displacement Delta P(t) (n x 3).
Var guidance_displacement(Tape& tape, const GuidanceModel& model, const GuidanceBinding& b, double t);
/// P + Delta P(t).
Var deform_points(Tape& tape, const GuidanceModel& model, const GuidanceBinding& b, double t);
std::vector<Vec3> deform_points(const GuidanceModel& model, double t);

/// rho(image_distance(frame, 1 - splat(project(points)))). Points behind the
/// camera are skipped; none visible renders an all-white guidance image.
Var guidance_frame_loss(Tape& tape, Var points, const GrayImage& frame, const Camera& camera,
                        const ImageDistanceConfig& backend, const GuidanceConfig& cfg, int frame_index = -1);
/// Mean over points of |Delta P(t) - Delta P(t')| / |t - t'|.
Var guidance_temporal_loss(Tape& tape, Var displacement_t, Var displacement_prev, const TimeSample& sample);
/// |q(R) - q(I)|_1 + |T|_1 for the Horn alignment of cloud_t (rows in
/// `subsample`) onto cloud_prev. Gradients flow into both clouds through the
/// exact derivative of the eigenvector solution. Degenerate subsets contribute 0.
Var rigid_loss(Tape& tape, Var cloud_t, Var cloud_prev, std::span<const int> subsample);

// Model-level conveniences (no gradients retained).
double guidance_frame_loss(const GuidanceModel& model, double t, const GrayImage& frame,
                           const Camera& camera, const ImageDistanceConfig& backend,
                           const GuidanceConfig& cfg, int frame_index = -1);
double guidance_temporal_loss(const GuidanceModel& model, const TimeSample& sample);
double rigid_loss(const GuidanceModel& model, const TimeSample& sample, int subsample, std::uint64_t seed);

struct GuidanceStep {
  int iteration = 0;
  double total = 0.0;
  double frame = 0.0;
  double temporal = 0.0;
  double rigid = 0.0;
  bool reset = false;
};

struct GuidanceTrainOptions {
  std::function<void(const GuidanceStep&)> on_step;
  /// Model used instead of init_guidance (tests, warm starts).
  const GuidanceModel* initial = nullptr;
};

GuidanceModel train_guidance(const FrameSet& frames, const Box3& box, const GuidanceConfig& cfg,
                             const ImageDistanceConfig& backend, const GuidanceTrainOptions& options = {});
GuidanceModel train_guidance(const SceneManifest& manifest, const GuidanceConfig& cfg,
                             const ImageDistanceConfig& backend, const GuidanceTrainOptions& options = {});

/// Bakes deform_points(t = 0) into the canonical cloud and re-initializes the
/// network with a zero head, so the render at t = 0 is unchanged.
void reset_guidance_network(GuidanceModel& model, std::uint64_t seed);

}  // namespace l3s
