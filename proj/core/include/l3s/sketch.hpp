#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "l3s/geometry.hpp"
#include "l3s/guidance.hpp"
#include "l3s/nn.hpp"
#include "l3s/perceptual.hpp"
#include "l3s/raster.hpp"
#include "l3s/scene_io.hpp"
#include "l3s/tape.hpp"

namespace l3s {

/// Soft gate on displacement magnitude: xi(v) = v * sigmoid(a (|v| - b)).
struct SuppressionParams {
  double a = 100.0;
  double b = 0.05;
  bool enabled = true;

  void validate() const;
};

Vec3 suppress(const Vec3& v, const SuppressionParams& params);
/// Row-wise suppression of an m x 3 displacement block.
Var suppress_rows(Tape& tape, Var v, const SuppressionParams& params);

enum class SketchStage { coarse, fine };

struct SketchConfig {
  int stroke_count = 16;
  double base_radius = 0.02;   // r
  double min_spacing = 1e-3;   // delta
  double w_frame = 0.01;       // lambda_s
  double w_temporal = 0.01;    // lambda_t
  double w_rigid_reg = 1e-3;   // lambda_r
  double w_local_reg = 1e-3;   // lambda_l
  int coarse_iterations = 1000;
  int fine_iterations = 1000;
  double coarse_scale = 0.5;
  double fine_scale = 1.0;
  double lr_strokes = 1e-3;
  double lr_rigid = 5e-4;
  double lr_local = 1e-3;
  bool freeze_rigid_in_fine = true;
  int outlier_k = 10;
  double outlier_z = 2.0;
  std::uint64_t seed = 0;
  SuppressionParams suppression;
  StrokeRasterConfig raster;  // at full manifest resolution
  RobustParams robust;
  EmbeddingConfig embedding;

  void validate() const;
};

/// Canonical strokes plus the three motion networks.
struct SketchModel {
  Mat canonical;  // 4n x 3; rows 4i..4i+3 are stroke i's control points
  Mat anchors;    // n x 3, first control point at initialization
  Mlp net_rotation;     // 4 outputs, quaternion increment
  Mlp net_translation;  // 3 outputs
  Mlp net_local;        // 3 outputs
  EncoderConfig encoder;
  SuppressionParams suppression;

  int stroke_count() const { return static_cast<int>(canonical.rows() / 4); }
  std::vector<Stroke3D> canonical_strokes() const;
};

/// Anchors by farthest point sampling of the filtered cloud; each following
/// control point is placed at distance r + U(0, r) in a random direction,
/// redrawn until consecutive points are at least delta apart.
std::vector<Stroke3D> init_strokes(std::span<const Vec3> cloud, const SketchConfig& cfg);

/// Initializes a model from a trained guidance model: strokes from its t = 0
/// cloud, translation network copied from the deformation network, zero heads
/// for rotation and local offsets. Throws ConfigError if shapes differ.
SketchModel init_sketch(const GuidanceModel& guidance, const SketchConfig& cfg);

struct SketchBinding {
  Var canonical;
  MlpBinding rotation;
  MlpBinding translation;
  MlpBinding local;
};
SketchBinding bind_sketch(Tape& tape, const SketchModel& model, bool strokes, bool rigid, bool local);

struct SketchPose {
  Var points;        // 4n x 3 control points at t
  Var displacement;  // 4n x 3 after suppression
  Var quaternions;   // n x 4, unit
  Var translations;  // n x 3
  Var local;         // 4n x 3 raw local offsets
};

/// q = R_i p + T_i per stroke i, delta = (q - p) + M_L(q, t), output
/// p + xi(delta).
SketchPose sketch_forward(Tape& tape, const SketchModel& model, const SketchBinding& b, double t);
std::vector<Stroke3D> sketch_at(const SketchModel& model, double t);

/// Drops strokes with a control point behind the camera and packs the rest
/// into n x 8 pixel coordinates.
Var project_strokes(Tape& tape, const Camera& camera, Var points);
Var render_sketch(Tape& tape, const Camera& camera, Var points, const StrokeRasterConfig& raster);
GrayImage render_sketch(const SketchModel& model, double t, const Camera& camera,
                        const StrokeRasterConfig& raster);

/// lambda_s rho(dist(I, S)) + cosine distance of global embeddings.
Var sketch_frame_loss(Tape& tape, Var render, const GrayImage& frame, const ImageDistanceConfig& backend,
                      const SketchConfig& cfg, int frame_index = -1);
/// Mean over control points of |xi(delta)(t) - xi(delta)(t')| / |t - t'|.
Var sketch_temporal_loss(Tape& tape, Var displacement_t, Var displacement_prev, const TimeSample& sample);
/// Coarse: mean_i |q_i - q_I|_2 + |T_i|_2 (sign-canonical q). Fine: mean |M_L|_2.
Var sketch_regularizer(Tape& tape, const SketchPose& pose, SketchStage stage);

struct SketchStep {
  SketchStage stage = SketchStage::coarse;
  int iteration = 0;
  double total = 0.0;
  double frame = 0.0;
  double temporal = 0.0;
  double regularizer = 0.0;
};

struct SketchTrainOptions {
  std::function<void(const SketchStep&)> on_step;
  const SketchModel* initial = nullptr;
};

/// Runs the coarse stage then the fine stage on frames loaded at the two
/// stage resolutions.
SketchModel train_sketch(const FrameSet& coarse_frames, const FrameSet& fine_frames,
                         const GuidanceModel& guidance, const SketchConfig& cfg,
                         const ImageDistanceConfig& backend, const SketchTrainOptions& options = {});
SketchModel train_sketch(const SceneManifest& manifest, const GuidanceModel& guidance,
                         const SketchConfig& cfg, const ImageDistanceConfig& backend,
                         const SketchTrainOptions& options = {});

}  // namespace l3s
