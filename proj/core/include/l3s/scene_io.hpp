#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "l3s/geometry.hpp"
#include "l3s/image.hpp"

namespace l3s {

struct Box3 {
  Vec3 min = Vec3::Constant(-0.5);
  Vec3 max = Vec3::Constant(0.5);

  Vec3 center() const { return 0.5 * (min + max); }
  double half_extent() const { return 0.5 * (max - min).maxCoeff(); }
  bool operator==(const Box3& o) const { return min == o.min && max == o.max; }
};

struct FrameRecord {
  std::string image_path;  // relative to the manifest directory unless absolute
  double t = 0.0;
  Camera camera;
  int view = -1;  // optional bookkeeping from the generator

  bool operator==(const FrameRecord& o) const;
};

/// Ordered frames of one posed video.
struct SceneManifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::vector<FrameRecord> frames;
  std::optional<Box3> scene_box;
  std::filesystem::path base_dir;  // not serialized

  std::filesystem::path image_path(std::size_t frame) const;
  /// Sorted distinct frame times.
  std::vector<double> unique_times() const;
  bool operator==(const SceneManifest& o) const {
    return version == o.version && frames == o.frames && scene_box == o.scene_box;
  }
};

/// Parses and validates a manifest. Throws IoError for missing files and
/// ConfigError for schema violations (the message names the offending
/// frame). With `check_images`, every referenced image must exist.
SceneManifest load_manifest(const std::filesystem::path& path, bool check_images = true);
void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path);

/// Imports a D-NeRF / Blender style transforms JSON. Source cameras are
/// OpenGL camera-to-world (+Y up, -Z forward); the result is world-to-camera
/// with +Y down and +Z forward.
SceneManifest import_dnerf(const std::filesystem::path& transforms_json,
                           const std::filesystem::path& image_dir);
/// Axis flip applied to a source camera-to-world matrix before inversion.
Mat4 dnerf_axis_flip();

/// Frames decoded to grayscale at `scale` times the manifest resolution,
/// with cameras scaled to match.
struct FrameSet {
  std::vector<GrayImage> images;
  std::vector<Camera> cameras;
  std::vector<double> times;
  std::vector<int> source_index;  // manifest frame index of each entry
  double dt = 0.0;                 // 1 / (distinct time count - 1), 0 when static

  std::size_t size() const { return images.size(); }
};
FrameSet load_frames(const SceneManifest& manifest, double scale);

/// Scene bounds: the manifest box when present, otherwise the region seen by
/// every camera around the least-squares intersection of the optical axes,
/// otherwise the unit cube.
Box3 estimate_scene_box(const SceneManifest& manifest);

// Images ---------------------------------------------------------------------

/// Writes an 8- or 16-bit grayscale PNG (values clamped to [0, 1]).
void save_png(const GrayImage& image, const std::filesystem::path& path, int bit_depth = 8);
/// Reads gray, gray+alpha, RGB or RGBA PNGs (8 or 16 bit); color is
/// converted with Rec. 601 luma weights.
GrayImage load_image(const std::filesystem::path& path);

// Vector and animation exports ------------------------------------------------

std::string svg_document(const std::vector<Bezier2D>& strokes, int width, int height,
                         double stroke_width);
void export_svg(const std::vector<Bezier2D>& strokes, int width, int height, double stroke_width,
                const std::filesystem::path& path);

struct AnimationFile {
  static constexpr int kVersion = 1;

  std::vector<double> times;
  std::vector<std::vector<Stroke3D>> strokes;  // per time
  double suppression_a = 100.0;
  double suppression_b = 0.05;
  bool suppression_enabled = true;
};
void export_animation(const AnimationFile& animation, const std::filesystem::path& path);
AnimationFile load_animation(const std::filesystem::path& path);

// Point clouds -----------------------------------------------------------------

/// ASCII PLY with an optional "comment time <t>" header line.
void write_ply(const std::vector<Vec3>& points, const std::filesystem::path& path,
               std::optional<double> time = std::nullopt);
std::vector<Vec3> read_ply(const std::filesystem::path& path, std::optional<double>* time = nullptr);

}  // namespace l3s
