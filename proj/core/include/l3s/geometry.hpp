#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace l3s {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rotation quaternion in (w, x, y, z) order.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  Eigen::Vector4d coeffs() const { return {w, x, y, z}; }
  static Quaternion identity() { return {}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle);
};

/// Cubic Bezier curve in scene space.
struct Stroke3D {
  std::array<Vec3, 4> control_points;
};

/// Cubic Bezier curve in pixel space.
struct Bezier2D {
  std::array<Vec2, 4> control_points;
};

/// Pinhole camera. `extrinsic` maps world to camera coordinates, +Z looks
/// forward, +Y points down the image. Pixel (col, row) covers the square
/// [col, col+1) x [row, row+1), so its center sits at (col + 0.5, row + 0.5).
struct Camera {
  Mat4 extrinsic = Mat4::Identity();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws DomainError when the rotation block is not in SO(3), the focal
  /// lengths are not positive, or the image is empty.
  void validate() const;

  Mat3 rotation() const { return extrinsic.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return extrinsic.topRightCorner<3, 1>(); }
  /// Camera center in world coordinates.
  Vec3 center() const;
  /// Camera looking along +Z in world coordinates.
  Vec3 forward() const;
  /// Same view rendered at `scale` times the resolution (intrinsics scale
  /// linearly, image size is rounded).
  Camera scaled(double scale) const;

  /// Builds a camera at `eye` looking at `target`, with `up` the approximate
  /// world up direction.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                        double fx, double fy, double cx, double cy, int width,
                        int height);
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

struct RigidAlignment {
  Quaternion rotation;
  Vec3 translation = Vec3::Zero();
  double rms_residual = 0.0;
};

/// Minimum camera-space depth accepted as "in front of the camera".
inline constexpr double kMinDepth = 1e-9;

Vec3 bezier_point(const Stroke3D& curve, double u);
Vec2 bezier_point(const Bezier2D& curve, double u);
std::vector<Vec3> bezier_polyline(const Stroke3D& curve, int segments);
std::vector<Vec2> bezier_polyline(const Bezier2D& curve, int segments);

/// Cubic Bernstein weights at `u`.
std::array<double, 4> bernstein(double u);

Projection project(const Camera& camera, const Vec3& point);
Bezier2D project_curve(const Camera& camera, const Stroke3D& curve);

Mat3 quat_to_matrix(const Quaternion& q);
Quaternion matrix_to_quat(const Mat3& rotation);
Quaternion quat_canonicalize(const Quaternion& q);
/// Distance between rotations as min(|q1 - q2|, |q1 + q2|) on unit inputs.
double quat_distance(const Quaternion& a, const Quaternion& b);

/// Closed-form least-squares rigid transform (Horn's quaternion method)
/// taking `src[i]` onto `dst[i]`.
RigidAlignment horn_align(std::span<const Vec3> src, std::span<const Vec3> dst);

/// Greedy maximin subset of `n` indices starting from `first`. Ties go to the
/// smallest index.
std::vector<std::size_t> farthest_point_sampling_from(std::span<const Vec3> points,
                                                      std::size_t n, std::size_t first);
/// As above with the first index drawn uniformly using `seed`.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points,
                                                 std::size_t n, std::uint64_t seed);

/// Statistical outlier removal: drops points whose mean distance to their `k`
/// nearest neighbours exceeds mean + z * stddev of that statistic. Order is
/// preserved. Inputs with at most k + 1 points are returned unchanged.
std::vector<Vec3> outlier_filter(std::span<const Vec3> points, int k = 10, double z = 2.0);

}  // namespace l3s
