#include "l3s/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "l3s/error.hpp"
#include "l3s/raster.hpp"

namespace l3s {

namespace {

std::size_t nearest(std::span<const Vec3> pts, const Vec3& q, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (pts[i] - q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (dist) *dist = std::sqrt(best_d);
  return best;
}

double directed(std::span<const Vec3> a, std::span<const Vec3> b) {
  double s = 0.0;
  for (const Vec3& p : a) {
    double d = 0.0;
    nearest(b, p, &d);
    s += d;
  }
  return s / static_cast<double>(a.size());
}

}  // namespace

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw DomainError("chamfer_distance: empty point set");
  return 0.5 * (directed(a, b) + directed(b, a));
}

double motion_velocity_distance(std::span<const TimedPoints> predicted, std::span<const TimedPoints> ground_truth) {
  if (predicted.size() != ground_truth.size()) {
    throw DomainError("motion_velocity_distance: sequences have different lengths");
  }
  if (predicted.size() < 2) throw DomainError("motion_velocity_distance: needs at least two time steps");
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (std::abs(predicted[k].t - ground_truth[k].t) > 1e-9) {
      throw DomainError("motion_velocity_distance: time stamps differ at step " + std::to_string(k));
    }
    if (predicted[k].points.size() != predicted[0].points.size() || predicted[k].points.empty()) {
      throw DomainError("motion_velocity_distance: predicted point count must be constant and non-zero");
    }
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < predicted.size(); ++k) {
    const auto& g0 = ground_truth[k].points;
    const auto& g1 = ground_truth[k + 1].points;
    if (g0.size() != g1.size()) {
      throw DomainError("motion_velocity_distance: ground-truth point count changes at step " + std::to_string(k));
    }
    // match in centroid-relative coordinates so a fixed offset of the
    // prediction cannot change the correspondence
    Vec3 shift = Vec3::Zero();
    for (const Vec3& p : predicted[k].points) shift += p / static_cast<double>(predicted[k].points.size());
    for (const Vec3& p : g0) shift -= p / static_cast<double>(g0.size());
    for (std::size_t i = 0; i < g0.size(); ++i) {
      const std::size_t j = nearest(predicted[k].points, g0[i] + shift);
      const Vec3 dp = predicted[k + 1].points[j] - predicted[k].points[j];
      total += ((g1[i] - g0[i]) - dp).norm();
      ++count;
    }
  }
  if (count == 0) throw DomainError("motion_velocity_distance: empty ground truth");
  return total / static_cast<double>(count);
}

double static_drift(const SketchModel& model, std::span<const double> times) {
  std::vector<std::vector<Stroke3D>> poses;
  for (double t : times) poses.push_back(sketch_at(model, t));
  double drift = 0.0;
  for (std::size_t a = 0; a < poses.size(); ++a) {
    for (std::size_t b = a + 1; b < poses.size(); ++b) {
      for (std::size_t s = 0; s < poses[a].size(); ++s) {
        for (int j = 0; j < 4; ++j) {
          drift = std::max(drift, (poses[a][s].control_points[j] - poses[b][s].control_points[j]).norm());
        }
      }
    }
  }
  return drift;
}

std::vector<Vec3> sample_strokes(std::span<const Stroke3D> strokes, int samples) {
  if (samples < 2) throw DomainError("sample_strokes: need at least 2 samples per stroke");
  std::vector<Vec3> out;
  out.reserve(strokes.size() * samples);
  for (const Stroke3D& s : strokes) {
    for (int i = 0; i < samples; ++i) out.push_back(bezier_point(s, static_cast<double>(i) / (samples - 1)));
  }
  return out;
}

std::string to_string(SyntheticPreset p) {
  switch (p) {
    case SyntheticPreset::rigid_rotor: return "rigid_rotor";
    case SyntheticPreset::bender: return "bender";
    case SyntheticPreset::static_scene: return "static";
  }
  return "unknown";
}

SyntheticPreset synthetic_preset_from_string(const std::string& name) {
  if (name == "rigid_rotor") return SyntheticPreset::rigid_rotor;
  if (name == "bender") return SyntheticPreset::bender;
  if (name == "static") return SyntheticPreset::static_scene;
  throw ConfigError("unknown synthetic preset '" + name + "' (expected rigid_rotor, bender or static)");
}

void SyntheticSpec::validate() const {
  if (strokes < 1) throw ConfigError("synthetic: strokes must be >= 1");
  if (frames < 1) throw ConfigError("synthetic: frames must be >= 1");
  if (views < 1) throw ConfigError("synthetic: views must be >= 1");
  if (resolution < 8) throw ConfigError("synthetic: resolution must be >= 8");
  if (!(stroke_width > 0.0)) throw ConfigError("synthetic: stroke_width must be positive");
  if (!(camera_distance > 1.5)) throw ConfigError("synthetic: camera_distance must exceed 1.5");
  if (!(fov_degrees > 1.0 && fov_degrees < 170.0)) throw ConfigError("synthetic: fov out of range");
  if (gt_samples < 2) throw ConfigError("synthetic: gt_samples must be >= 2");
}

std::vector<TimedPoints> SyntheticScene::sampled(int samples) const {
  std::vector<TimedPoints> out(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    out[k].t = times[k];
    out[k].points = sample_strokes(strokes[k], samples);
  }
  return out;
}

namespace {

constexpr double kSceneHalf = 0.6;
constexpr double kStrokeReach = 0.35;

std::vector<Stroke3D> base_strokes(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-0.3, 0.3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Stroke3D> out(spec.strokes);
  for (auto& s : out) {
    const Vec3 p0(pos(rng), pos(rng), pos(rng));
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    dir.normalize();
    for (int j = 0; j < 4; ++j) {
      const Vec3 wobble(gauss(rng), gauss(rng), gauss(rng));
      const Vec3 p = p0 + dir * (0.12 * j) + 0.03 * wobble;
      s.control_points[j] = p.cwiseMax(-kStrokeReach).cwiseMin(kStrokeReach);
    }
  }
  return out;
}

}  // namespace

SyntheticScene make_synthetic_scene(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::vector<Stroke3D> base = base_strokes(spec, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec3> bend_dirs(base.size());
  for (Vec3& d : bend_dirs) d = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();

  SyntheticScene scene;
  for (int k = 0; k < spec.frames; ++k) {
    const double t = spec.frames == 1 ? 0.0 : static_cast<double>(k) / (spec.frames - 1);
    scene.times.push_back(t);
    std::vector<Stroke3D> pose = base;
    if (spec.preset == SyntheticPreset::rigid_rotor) {
      const Mat3 r = quat_to_matrix(Quaternion::from_axis_angle(Vec3(0.2, 0.1, 1.0).normalized(),
                                                                 std::numbers::pi / 3.0 * t));
      const Vec3 shift = t * Vec3(0.08, -0.05, 0.04);
      for (auto& s : pose) {
        for (auto& p : s.control_points) p = r * p + shift;
      }
    } else if (spec.preset == SyntheticPreset::bender) {
      const double amp = 0.15 * std::sin(std::numbers::pi * t);
      for (std::size_t i = 0; i < pose.size(); ++i) {
        for (int j = 0; j < 4; ++j) pose[i].control_points[j] += amp * (j / 3.0) * bend_dirs[i];
      }
    }
    scene.strokes.push_back(std::move(pose));
  }

  const double res = spec.resolution;
  const double f = 0.5 * res / std::tan(0.5 * spec.fov_degrees * std::numbers::pi / 180.0);
  constexpr double kGoldenAngle = 2.399963229728653;
  for (int v = 0; v < spec.views; ++v) {
    const double h = 0.15 + 0.7 * (v + 0.5) / spec.views;
    const double az = v * kGoldenAngle;
    const double ring = std::sqrt(1.0 - h * h);
    const Vec3 eye = spec.camera_distance * Vec3(ring * std::cos(az), ring * std::sin(az), h);
    scene.cameras.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), f, f, 0.5 * res, 0.5 * res,
                                            spec.resolution, spec.resolution));
  }

  scene.manifest.scene_box = Box3{Vec3::Constant(-kSceneHalf), Vec3::Constant(kSceneHalf)};
  char name[64];
  for (int k = 0; k < spec.frames; ++k) {
    for (int v = 0; v < spec.views; ++v) {
      std::snprintf(name, sizeof name, "frames/t%03d_v%02d.png", k, v);
      FrameRecord rec;
      rec.image_path = name;
      rec.t = scene.times[k];
      rec.camera = scene.cameras[v];
      rec.view = v;
      scene.manifest.frames.push_back(rec);
    }
  }
  return scene;
}

SyntheticScene write_synthetic_scene(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  SyntheticScene scene = make_synthetic_scene(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  std::filesystem::create_directories(out_dir / "gt_points", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  scene.manifest.base_dir = out_dir;

  StrokeRasterConfig raster;
  raster.stroke_width = spec.stroke_width;
  const std::size_t views = scene.cameras.size();
  for (std::size_t i = 0; i < scene.manifest.frames.size(); ++i) {
    const FrameRecord& rec = scene.manifest.frames[i];
    const auto& pose = scene.strokes[i / views];
    std::vector<Bezier2D> curves;
    for (const Stroke3D& s : pose) curves.push_back(project_curve(rec.camera, s));
    save_png(raster_strokes(curves, spec.resolution, spec.resolution, raster), out_dir / rec.image_path);
  }
  save_manifest(scene.manifest, out_dir / "manifest.json");

  AnimationFile anim;
  anim.times = scene.times;
  anim.strokes = scene.strokes;
  anim.suppression_enabled = false;
  export_animation(anim, out_dir / "gt_strokes.json");
  char name[64];
  for (std::size_t k = 0; k < scene.times.size(); ++k) {
    std::snprintf(name, sizeof name, "t%03zu.ply", k);
    write_ply(sample_strokes(scene.strokes[k], spec.gt_samples), out_dir / "gt_points" / name, scene.times[k]);
  }
  return scene;
}

}  // namespace l3s
