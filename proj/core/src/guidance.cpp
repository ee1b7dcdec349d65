#include "l3s/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "l3s/error.hpp"

namespace l3s {

void GuidanceConfig::validate() const {
  if (point_count < 1) throw ConfigError("guidance: point_count must be >= 1");
  if (iterations < 0) throw ConfigError("guidance: iterations must be >= 0");
  if (!(w_frame >= 0.0) || !(w_temporal >= 0.0) || !(w_rigid >= 0.0)) {
    throw ConfigError("guidance: loss weights must be non-negative");
  }
  if (!(reset_at >= 0.0 && reset_at <= 1.0)) throw ConfigError("guidance: reset_at must lie in [0, 1]");
  if (!(lr_points > 0.0) || !(lr_mlp > 0.0)) throw ConfigError("guidance: learning rates must be positive");
  if (!(resolution_scale > 0.0)) throw ConfigError("guidance: resolution_scale must be positive");
  if (rigid_subsample < 3) throw ConfigError("guidance: rigid_subsample must be >= 3");
  if (spatial_frequencies < 1 || temporal_frequencies < 1) {
    throw ConfigError("guidance: encoding frequencies must be >= 1");
  }
  splat.validate();
  robust.validate();
}

MlpShape GuidanceConfig::network_shape() const {
  const int in = 6 * spatial_frequencies + 2 * temporal_frequencies;
  return desk_network ? desk_mlp_shape(in, 3) : default_mlp_shape(in, 3);
}

TimeSample sample_time_pair(double t, double dt, std::mt19937_64& rng) {
  if (!(dt > 0.0)) throw DomainError("sample_time_pair: dt must be positive");
  // u in (0, 1] so the pair never coincides.
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = 1.0 - uni(rng);
  TimeSample s;
  s.t = t;
  s.dt = dt;
  s.t_prev = (t - dt < 0.0) ? std::min(1.0, t + u * dt) : t - u * dt;
  return s;
}

GuidanceModel init_guidance(const Box3& box, const GuidanceConfig& cfg) {
  cfg.validate();
  GuidanceModel m;
  m.encoder.spatial_frequencies = cfg.spatial_frequencies;
  m.encoder.temporal_frequencies = cfg.temporal_frequencies;
  m.encoder.box_center = box.center();
  m.encoder.box_half_extent = box.half_extent();
  m.encoder.validate();

  std::mt19937_64 rng(cfg.seed);
  m.canonical_points.resize(cfg.point_count, 3);
  for (int k = 0; k < 3; ++k) {
    if (!(box.max(k) > box.min(k))) throw ConfigError("guidance: scene box is empty");
  }
  for (int i = 0; i < cfg.point_count; ++i) {
    for (int k = 0; k < 3; ++k) {
      std::uniform_real_distribution<double> d(box.min(k), box.max(k));
      m.canonical_points(i, k) = d(rng);
    }
  }
  m.deform_net = mlp_init(cfg.network_shape(), cfg.seed + 1, true);
  return m;
}

GuidanceBinding bind_guidance(Tape& tape, const GuidanceModel& model, bool trainable) {
  GuidanceBinding b;
  b.points = trainable ? tape.parameter(model.canonical_points) : tape.constant(model.canonical_points);
  b.net = bind_mlp(tape, model.deform_net, trainable);
  return b;
}

Var guidance_displacement(Tape& tape, const GuidanceModel& model, const GuidanceBinding& b, double t) {
  Var input = encode_space_time(tape, model.encoder, b.points, t);
  return mlp_forward(tape, model.deform_net, b.net, input);
}

Var deform_points(Tape& tape, const GuidanceModel& model, const GuidanceBinding& b, double t) {
  return add(tape, b.points, guidance_displacement(tape, model, b, t));
}

std::vector<Vec3> deform_points(const GuidanceModel& model, double t) {
  Tape tape;
  GuidanceBinding b = bind_guidance(tape, model, false);
  const Mat& p = tape.value(deform_points(tape, model, b, t));
  std::vector<Vec3> out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = p.row(i).transpose();
  return out;
}

Var guidance_frame_loss(Tape& tape, Var points, const GrayImage& frame, const Camera& camera,
                        const ImageDistanceConfig& backend, const GuidanceConfig& cfg, int frame_index) {
  if (camera.width != frame.width() || camera.height != frame.height()) {
    throw DomainError("guidance_frame_loss: camera resolution does not match the frame");
  }
  const Mat& pv = tape.value(points);
  const std::vector<int> rows = visible_rows(camera, pv);
  Var render;
  if (rows.empty()) {
    render = tape.constant(Mat::Ones(frame.height(), frame.width()));
  } else {
    Var vis = static_cast<Eigen::Index>(rows.size()) == pv.rows() ? points : gather_rows(tape, points, rows);
    Var projected = project_points(tape, camera, vis);
    Var intensity = splat_points(tape, projected, frame.width(), frame.height(), cfg.splat);
    render = guidance_image(tape, intensity);
  }
  Var d = image_distance(tape, backend, frame, render, frame_index);
  return robust_rho(tape, d, cfg.robust);
}

Var guidance_temporal_loss(Tape& tape, Var displacement_t, Var displacement_prev, const TimeSample& sample) {
  const double gap = std::abs(sample.t - sample.t_prev);
  if (!(gap > 0.0)) throw DomainError("guidance_temporal_loss: t and t' coincide");
  Var speed = mean(tape, row_norms(tape, sub(tape, displacement_t, displacement_prev)));
  return scale(tape, speed, 1.0 / gap);
}

namespace {

Eigen::Matrix4d horn_matrix(const Mat3& s) {
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
      syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
      szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
      sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  return n;
}

// d(R(q) v)/dq for the homogeneous rotation formula; exact on the unit sphere,
// which is all the eigenvector perturbation ever moves along.
Eigen::Matrix<double, 3, 4> rotate_jacobian(const Eigen::Vector4d& q, const Vec3& v) {
  const double w = q(0);
  const Vec3 u = q.tail<3>();
  Mat3 vx;
  vx << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  Eigen::Matrix<double, 3, 4> j;
  j.col(0) = 2.0 * w * v + 2.0 * u.cross(v);
  j.rightCols<3>() = -2.0 * v * u.transpose() + 2.0 * u.dot(v) * Mat3::Identity() +
                     2.0 * u * v.transpose() - 2.0 * w * vx;
  return j;
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Var rigid_loss(Tape& tape, Var cloud_t, Var cloud_prev, std::span<const int> subsample) {
  const Mat& a_all = tape.value(cloud_t);
  const Mat& b_all = tape.value(cloud_prev);
  if (a_all.cols() != 3 || b_all.cols() != 3 || a_all.rows() != b_all.rows()) {
    throw DomainError("rigid_loss: clouds must both be n x 3");
  }
  const int n = static_cast<int>(subsample.size());
  for (int idx : subsample) {
    if (idx < 0 || idx >= a_all.rows()) throw DomainError("rigid_loss: subsample index out of range");
  }
  if (n < 3) return tape.scalar(0.0);

  std::vector<int> rows(subsample.begin(), subsample.end());
  Vec3 a_mean = Vec3::Zero(), b_mean = Vec3::Zero();
  for (int r : rows) {
    a_mean += a_all.row(r).transpose();
    b_mean += b_all.row(r).transpose();
  }
  a_mean /= n;
  b_mean /= n;
  Mat3 s = Mat3::Zero(), scatter = Mat3::Zero();
  for (int r : rows) {
    const Vec3 a = a_all.row(r).transpose() - a_mean;
    const Vec3 b = b_all.row(r).transpose() - b_mean;
    s += a * b.transpose();
    scatter += a * a.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> scatter_eig(scatter);
  const Vec3 sev = scatter_eig.eigenvalues();
  if (!(sev(1) > 1e-12 * std::max(sev(2), 1e-300)) || !(sev(2) > 0.0)) return tape.scalar(0.0);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(horn_matrix(s));
  const Eigen::Vector4d lambda = eig.eigenvalues();
  const Eigen::Matrix4d vecs = eig.eigenvectors();
  const double gap_scale = std::max(std::abs(lambda(3)), 1e-300);
  // A repeated top eigenvalue leaves the rotation undetermined.
  if (!(lambda(3) - lambda(2) > 1e-12 * gap_scale)) return tape.scalar(0.0);

  Eigen::Vector4d q = vecs.col(3);
  const Quaternion qc = quat_canonicalize({q(0), q(1), q(2), q(3)});
  q = qc.coeffs();
  const Mat3 rot = quat_to_matrix(qc);
  const Vec3 trans = b_mean - rot * a_mean;

  const double value = std::abs(q(0) - 1.0) + q.tail<3>().cwiseAbs().sum() + trans.cwiseAbs().sum();

  auto backward = [=](Tape& tp, const Mat& g) {
    const double go = g(0, 0);
    Vec3 g_trans;
    for (int k = 0; k < 3; ++k) g_trans(k) = go * sgn(trans(k));
    Eigen::Vector4d g_q;
    g_q(0) = go * sgn(q(0) - 1.0);
    for (int k = 1; k < 4; ++k) g_q(k) = go * sgn(q(k));
    // T = b_mean - R(q) a_mean.
    g_q -= rotate_jacobian(q, a_mean).transpose() * g_trans;
    const Vec3 g_a_mean = -rot.transpose() * g_trans;
    const Vec3 g_b_mean = g_trans;

    // dq = sum_k v_k v_k^T dN q / (l_top - l_k), so dL/dN = sum_k c_k v_k q^T.
    Eigen::Matrix4d g_n = Eigen::Matrix4d::Zero();
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector4d v = vecs.col(k);
      g_n += (g_q.dot(v) / (lambda(3) - lambda(k))) * v * q.transpose();
    }
    Mat3 g_s;
    for (int x = 0; x < 3; ++x) {
      for (int y = 0; y < 3; ++y) {
        Mat3 e = Mat3::Zero();
        e(x, y) = 1.0;
        g_s(x, y) = (g_n.array() * horn_matrix(e).array()).sum();
      }
    }

    // S = sum a'_i b'^T_i over centered points.
    std::vector<Vec3> ga(n), gb(n);
    Vec3 ga_sum = Vec3::Zero(), gb_sum = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      const Vec3 a = a_all.row(rows[i]).transpose() - a_mean;
      const Vec3 b = b_all.row(rows[i]).transpose() - b_mean;
      ga[i] = g_s * b;
      gb[i] = g_s.transpose() * a;
      ga_sum += ga[i];
      gb_sum += gb[i];
    }
    const Vec3 a_shift = (g_a_mean - ga_sum) / n;
    const Vec3 b_shift = (g_b_mean - gb_sum) / n;
    if (Mat* buf = tp.grad_buffer(cloud_t)) {
      for (int i = 0; i < n; ++i) buf->row(rows[i]) += (ga[i] + a_shift).transpose();
    }
    if (Mat* buf = tp.grad_buffer(cloud_prev)) {
      for (int i = 0; i < n; ++i) buf->row(rows[i]) += (gb[i] + b_shift).transpose();
    }
  };
  return tape.record(Mat::Constant(1, 1, value), {cloud_t, cloud_prev}, backward);
}

namespace {

std::vector<int> draw_subsample(int n, int count, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  count = std::min(count, n);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace

double guidance_frame_loss(const GuidanceModel& model, double t, const GrayImage& frame,
                           const Camera& camera, const ImageDistanceConfig& backend,
                           const GuidanceConfig& cfg, int frame_index) {
  Tape tape;
  GuidanceBinding b = bind_guidance(tape, model, false);
  return tape.item(guidance_frame_loss(tape, deform_points(tape, model, b, t), frame, camera, backend,
                                       cfg, frame_index));
}

double guidance_temporal_loss(const GuidanceModel& model, const TimeSample& sample) {
  Tape tape;
  GuidanceBinding b = bind_guidance(tape, model, false);
  return tape.item(guidance_temporal_loss(tape, guidance_displacement(tape, model, b, sample.t),
                                          guidance_displacement(tape, model, b, sample.t_prev), sample));
}

double rigid_loss(const GuidanceModel& model, const TimeSample& sample, int subsample, std::uint64_t seed) {
  Tape tape;
  GuidanceBinding b = bind_guidance(tape, model, false);
  std::mt19937_64 rng(seed);
  const std::vector<int> rows = draw_subsample(static_cast<int>(model.point_count()), subsample, rng);
  return tape.item(rigid_loss(tape, deform_points(tape, model, b, sample.t),
                              deform_points(tape, model, b, sample.t_prev), rows));
}

void reset_guidance_network(GuidanceModel& model, std::uint64_t seed) {
  const std::vector<Vec3> baked = deform_points(model, 0.0);
  for (std::size_t i = 0; i < baked.size(); ++i) model.canonical_points.row(i) = baked[i].transpose();
  model.deform_net = mlp_init(model.deform_net.shape, seed, true);
}

GuidanceModel train_guidance(const FrameSet& frames, const Box3& box, const GuidanceConfig& cfg,
                             const ImageDistanceConfig& backend, const GuidanceTrainOptions& options) {
  cfg.validate();
  backend.validate();
  if (frames.size() == 0) throw ConfigError("guidance: no frames to train on");
  GuidanceModel model = options.initial ? *options.initial : init_guidance(box, cfg);
  if (!(model.deform_net.shape.input_dim == model.encoder.input_dim())) {
    throw ConfigError("guidance: network input does not match the encoder");
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick_frame(0, frames.size() - 1);
  Adam adam_points({cfg.lr_points});
  Adam adam_net({cfg.lr_mlp});
  const bool has_motion = frames.dt > 0.0;
  const bool need_pair = has_motion && (cfg.w_temporal > 0.0 || cfg.w_rigid > 0.0);
  const int reset_iter = static_cast<int>(std::floor(cfg.reset_at * cfg.iterations));

  for (int it = 0; it < cfg.iterations; ++it) {
    GuidanceStep info;
    info.iteration = it;
    if (it == reset_iter && reset_iter > 0 && cfg.reset_at < 1.0) {
      reset_guidance_network(model, cfg.seed + 2);
      adam_points.reset();
      adam_net.reset();
      info.reset = true;
    }

    const std::size_t f = pick_frame(rng);
    const double t = frames.times[f];
    Tape tape;
    GuidanceBinding b = bind_guidance(tape, model, true);
    Var disp_t = guidance_displacement(tape, model, b, t);
    Var pts_t = add(tape, b.points, disp_t);
    std::vector<Var> terms{guidance_frame_loss(tape, pts_t, frames.images[f], frames.cameras[f], backend, cfg,
                                               frames.source_index.empty() ? static_cast<int>(f)
                                                                           : frames.source_index[f])};
    std::vector<double> weights{cfg.w_frame};
    if (need_pair) {
      const TimeSample sample = sample_time_pair(t, frames.dt, rng);
      Var disp_p = guidance_displacement(tape, model, b, sample.t_prev);
      if (cfg.w_temporal > 0.0) {
        terms.push_back(guidance_temporal_loss(tape, disp_t, disp_p, sample));
        weights.push_back(cfg.w_temporal);
      }
      if (cfg.w_rigid > 0.0) {
        Var pts_p = add(tape, b.points, disp_p);
        const std::vector<int> rows =
            draw_subsample(static_cast<int>(model.point_count()), cfg.rigid_subsample, rng);
        terms.push_back(rigid_loss(tape, pts_t, pts_p, rows));
        weights.push_back(cfg.w_rigid);
      }
    }
    Var total = weighted_sum(tape, terms, weights);
    info.total = tape.item(total);
    info.frame = tape.item(terms[0]);
    std::size_t k = 1;
    if (need_pair && cfg.w_temporal > 0.0) info.temporal = tape.item(terms[k++]);
    if (need_pair && cfg.w_rigid > 0.0) info.rigid = tape.item(terms[k++]);
    if (!std::isfinite(info.total)) {
      throw Error("guidance: non-finite loss at iteration " + std::to_string(it));
    }
    tape.backward(total);

    Mat* pp = &model.canonical_points;
    const Mat gp = tape.grad(b.points);
    adam_points.step(std::span<Mat* const>(&pp, 1), std::span<const Mat>(&gp, 1));
    std::vector<Mat*> net_params = model.deform_net.parameters();
    std::vector<Mat> net_grads;
    net_grads.reserve(net_params.size());
    for (Var v : b.net.params) net_grads.push_back(tape.grad(v));
    adam_net.step(net_params, net_grads);

    if (options.on_step) options.on_step(info);
  }
  return model;
}

GuidanceModel train_guidance(const SceneManifest& manifest, const GuidanceConfig& cfg,
                             const ImageDistanceConfig& backend, const GuidanceTrainOptions& options) {
  cfg.validate();
  const FrameSet frames = load_frames(manifest, cfg.resolution_scale);
  return train_guidance(frames, estimate_scene_box(manifest), cfg, backend, options);
}

}  // namespace l3s
