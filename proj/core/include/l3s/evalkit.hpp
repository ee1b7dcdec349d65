#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "l3s/geometry.hpp"
#include "l3s/scene_io.hpp"
#include "l3s/sketch.hpp"

namespace l3s {

/// Symmetric Chamfer distance: half the sum of the mean nearest-neighbour
/// distances a to b and b to a (non-squared). Throws DomainError on empty input.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);

/// Points of one time step.
struct TimedPoints {
  double t = 0.0;
  std::vector<Vec3> points;
};

/// Mean over ground-truth points and consecutive time pairs of
/// |dx_gt - dx_pred|, where each ground-truth point is matched to its nearest
/// predicted point at the earlier time (after moving the ground-truth cloud
/// onto the predicted centroid) and the predicted point's own motion is used. Both sequences must share time stamps; predicted point counts
/// must be constant.
double motion_velocity_distance(std::span<const TimedPoints> predicted, std::span<const TimedPoints> ground_truth);

/// Largest control-point excursion between any two of `times`.
double static_drift(const SketchModel& model, std::span<const double> times);

/// `samples` points per stroke, uniform in u over [0, 1].
std::vector<Vec3> sample_strokes(std::span<const Stroke3D> strokes, int samples = 32);

enum class SyntheticPreset { rigid_rotor, bender, static_scene };
std::string to_string(SyntheticPreset p);
SyntheticPreset synthetic_preset_from_string(const std::string& name);

struct SyntheticSpec {
  SyntheticPreset preset = SyntheticPreset::rigid_rotor;
  int strokes = 6;
  int frames = 16;
  int views = 20;
  int resolution = 128;
  std::uint64_t seed = 0;
  double stroke_width = 1.5;
  double camera_distance = 2.5;
  double fov_degrees = 40.0;
  int gt_samples = 32;

  void validate() const;
};

struct SyntheticScene {
  SceneManifest manifest;
  std::vector<double> times;
  std::vector<std::vector<Stroke3D>> strokes;  // per time
  std::vector<Camera> cameras;                 // per view

  std::vector<TimedPoints> sampled(int samples = 32) const;
};

/// Ground-truth curves and cameras only (no files).
SyntheticScene make_synthetic_scene(const SyntheticSpec& spec);
/// Renders and writes manifest.json, frames/*.png, gt_strokes.json and
/// gt_points/*.ply under `out_dir`. Frames are ordered time-major.
SyntheticScene write_synthetic_scene(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace l3s
