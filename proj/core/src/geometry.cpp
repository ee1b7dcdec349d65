#include "l3s/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "l3s/error.hpp"

namespace l3s {

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return {std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s};
}

void Camera::validate() const {
  const Mat3 r = rotation();
  if (!((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6) ||
      !(std::abs(r.determinant() - 1.0) < 1e-6)) {
    throw DomainError("camera rotation block is not a proper rotation");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw DomainError("camera image size must be at least 1x1");
}

Vec3 Camera::center() const { return -rotation().transpose() * translation(); }

Vec3 Camera::forward() const { return rotation().transpose() * Vec3::UnitZ(); }

Camera Camera::scaled(double scale) const {
  Camera c = *this;
  c.fx *= scale;
  c.fy *= scale;
  c.cx *= scale;
  c.cy *= scale;
  c.width = std::max(1, static_cast<int>(std::lround(width * scale)));
  c.height = std::max(1, static_cast<int>(std::lround(height * scale)));
  return c;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                       double fy, double cx, double cy, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
  right.normalize();
  // Image y grows downward, so camera +Y is world "down".
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Camera c;
  c.extrinsic.setIdentity();
  c.extrinsic.topLeftCorner<3, 3>() = r;
  c.extrinsic.topRightCorner<3, 1>() = -r * eye;
  c.fx = fx;
  c.fy = fy;
  c.cx = cx;
  c.cy = cy;
  c.width = width;
  c.height = height;
  return c;
}

std::array<double, 4> bernstein(double u) {
  const double v = 1.0 - u;
  return {v * v * v, 3.0 * u * v * v, 3.0 * u * u * v, u * u * u};
}

namespace {

template <typename V>
V de_casteljau(const std::array<V, 4>& p, double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw DomainError("bezier parameter u=" + std::to_string(u) + " outside [0,1]");
  }
  if (u == 0.0) return p[0];
  if (u == 1.0) return p[3];
  const V a = p[0] + u * (p[1] - p[0]);
  const V b = p[1] + u * (p[2] - p[1]);
  const V c = p[2] + u * (p[3] - p[2]);
  const V d = a + u * (b - a);
  const V e = b + u * (c - b);
  return d + u * (e - d);
}

template <typename V>
std::vector<V> polyline(const std::array<V, 4>& p, int segments) {
  if (segments < 1) throw DomainError("bezier_polyline needs at least one segment");
  std::vector<V> out;
  out.reserve(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i <= segments; ++i) {
    out.push_back(de_casteljau(p, static_cast<double>(i) / segments));
  }
  return out;
}

}  // namespace

Vec3 bezier_point(const Stroke3D& curve, double u) { return de_casteljau(curve.control_points, u); }
Vec2 bezier_point(const Bezier2D& curve, double u) { return de_casteljau(curve.control_points, u); }

std::vector<Vec3> bezier_polyline(const Stroke3D& curve, int segments) {
  return polyline(curve.control_points, segments);
}
std::vector<Vec2> bezier_polyline(const Bezier2D& curve, int segments) {
  return polyline(curve.control_points, segments);
}

Projection project(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.rotation() * point + camera.translation();
  if (!(pc.z() > kMinDepth)) {
    throw BehindCameraError("point projects behind the camera (depth " +
                            std::to_string(pc.z()) + ")");
  }
  return {Vec2(camera.fx * pc.x() / pc.z() + camera.cx, camera.fy * pc.y() / pc.z() + camera.cy),
          pc.z()};
}

Bezier2D project_curve(const Camera& camera, const Stroke3D& curve) {
  Bezier2D out;
  for (std::size_t j = 0; j < 4; ++j) {
    out.control_points[j] = project(camera, curve.control_points[j]).pixel;
  }
  return out;
}

Mat3 quat_to_matrix(const Quaternion& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw DegeneracyError("cannot convert a zero quaternion to a rotation");
  const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quaternion matrix_to_quat(const Mat3& r) {
  // Shepperd's method, branch on the largest diagonal term.
  const double tr = r.trace();
  Quaternion q;
  if (tr > r(0, 0) && tr > r(1, 1) && tr > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  return quat_canonicalize(q);
}

Quaternion quat_canonicalize(const Quaternion& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw DegeneracyError("cannot canonicalize a zero quaternion");
  Quaternion u{q.w / n, q.x / n, q.y / n, q.z / n};
  bool flip = u.w < 0.0;
  if (u.w == 0.0) {
    const double first = u.x != 0.0 ? u.x : (u.y != 0.0 ? u.y : u.z);
    flip = first < 0.0;
  }
  if (flip) u = {-u.w, -u.x, -u.y, -u.z};
  // Avoid a negative zero in w.
  if (u.w == 0.0) u.w = 0.0;
  return u;
}

double quat_distance(const Quaternion& a, const Quaternion& b) {
  const Eigen::Vector4d ca = a.coeffs(), cb = b.coeffs();
  return std::min((ca - cb).norm(), (ca + cb).norm());
}

RigidAlignment horn_align(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw AlignmentError("horn_align: point sets differ in size (" + std::to_string(src.size()) +
                         " vs " + std::to_string(dst.size()) + ")");
  }
  if (src.size() < 3) throw AlignmentError("horn_align: needs at least 3 correspondences");
  const double n = static_cast<double>(src.size());
  Vec3 src_mean = Vec3::Zero(), dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Mat3 s = Mat3::Zero();
  Mat3 src_scatter = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - src_mean;
    const Vec3 b = dst[i] - dst_mean;
    s += a * b.transpose();
    src_scatter += a * a.transpose();
  }
  // Collinear (or coincident) sources leave the rotation about the line free.
  Eigen::SelfAdjointEigenSolver<Mat3> scatter_eig(src_scatter);
  const Vec3 ev = scatter_eig.eigenvalues();
  if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300)) || !(ev(2) > 0.0)) {
    throw AlignmentError("horn_align: degenerate (collinear) source configuration");
  }

  Eigen::Matrix4d nmat;
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  nmat << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
      syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
      szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
      sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(nmat);
  const Eigen::Vector4d top = eig.eigenvectors().col(3);

  RigidAlignment out;
  out.rotation = quat_canonicalize({top(0), top(1), top(2), top(3)});
  const Mat3 r = quat_to_matrix(out.rotation);
  out.translation = dst_mean - r * src_mean;
  double sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    sq += (r * src[i] + out.translation - dst[i]).squaredNorm();
  }
  out.rms_residual = std::sqrt(sq / n);
  return out;
}

std::vector<std::size_t> farthest_point_sampling_from(std::span<const Vec3> points,
                                                      std::size_t n, std::size_t first) {
  if (points.empty()) throw DomainError("farthest_point_sampling: empty point set");
  if (n < 1 || n > points.size()) {
    throw DomainError("farthest_point_sampling: n=" + std::to_string(n) + " not in [1, " +
                      std::to_string(points.size()) + "]");
  }
  if (first >= points.size()) throw DomainError("farthest_point_sampling: bad first index");
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picked{first};
  picked.reserve(n);
  std::size_t last = first;
  while (picked.size() < n) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist[i] = std::min(dist[i], (points[i] - points[last]).squaredNorm());
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    picked.push_back(best);
    last = best;
  }
  return picked;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t n,
                                                 std::uint64_t seed) {
  if (points.empty()) throw DomainError("farthest_point_sampling: empty point set");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  return farthest_point_sampling_from(points, n, pick(rng));
}

std::vector<Vec3> outlier_filter(std::span<const Vec3> points, int k, double z) {
  if (k < 1) throw DomainError("outlier_filter: k must be >= 1");
  if (!(z > 0.0)) throw DomainError("outlier_filter: z must be > 0");
  const std::size_t count = points.size();
  if (count <= static_cast<std::size_t>(k) + 1) return {points.begin(), points.end()};

  std::vector<double> mean_knn(count);
  std::vector<double> d(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < count; ++j) d[j] = (points[i] - points[j]).norm();
    d[i] = std::numeric_limits<double>::infinity();
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    std::sort(d.begin(), d.begin() + k);
    mean_knn[i] = std::accumulate(d.begin(), d.begin() + k, 0.0) / k;
  }
  const double mean = std::accumulate(mean_knn.begin(), mean_knn.end(), 0.0) / count;
  double var = 0.0;
  for (double m : mean_knn) var += (m - mean) * (m - mean);
  const double stddev = std::sqrt(var / count);
  // Relative slack keeps exactly tied statistics from splitting on rounding.
  const double limit = mean + z * stddev + 1e-12 * mean;

  std::vector<Vec3> kept;
  kept.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (mean_knn[i] <= limit) kept.push_back(points[i]);
  }
  return kept;
}

}  // namespace l3s
