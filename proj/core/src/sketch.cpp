#include "l3s/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "l3s/error.hpp"

namespace l3s {

void SuppressionParams::validate() const {
  if (!(a > 0.0)) throw ConfigError("suppression: a must be positive");
  if (!(b >= 0.0)) throw ConfigError("suppression: b must be non-negative");
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Vec3 suppress(const Vec3& v, const SuppressionParams& p) {
  if (!p.enabled) return v;
  return v * sigmoid(p.a * (v.norm() - p.b));
}

Var suppress_rows(Tape& tape, Var v, const SuppressionParams& p) {
  const Mat& vv = tape.value(v);
  if (vv.cols() != 3) throw DomainError("suppress_rows: input must be m x 3");
  if (!p.enabled) return v;
  const Eigen::Index m = vv.rows();
  Eigen::VectorXd gate(m), norms(m);
  Mat out(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    norms(i) = vv.row(i).norm();
    gate(i) = sigmoid(p.a * (norms(i) - p.b));
    out.row(i) = vv.row(i) * gate(i);
  }
  return tape.record(std::move(out), {v}, [v, gate, norms, a = p.a](Tape& t, const Mat& g) {
    Mat* gv = t.grad_buffer(v);
    const Mat& vv = t.value(v);
    for (Eigen::Index i = 0; i < vv.rows(); ++i) {
      Eigen::RowVector3d gi = gate(i) * g.row(i);
      if (norms(i) > 0.0) {
        const double s = gate(i);
        gi += (vv.row(i).dot(g.row(i)) * s * (1.0 - s) * a / norms(i)) * vv.row(i);
      }
      gv->row(i) += gi;
    }
  });
}

void SketchConfig::validate() const {
  if (stroke_count < 1) throw ConfigError("sketch: stroke_count must be >= 1");
  if (!(base_radius > 0.0)) throw ConfigError("sketch: base_radius must be positive");
  if (!(min_spacing >= 0.0)) throw ConfigError("sketch: min_spacing must be non-negative");
  if (!(base_radius >= min_spacing)) throw ConfigError("sketch: base_radius must be >= min_spacing");
  if (!(w_frame >= 0.0) || !(w_temporal >= 0.0) || !(w_rigid_reg >= 0.0) || !(w_local_reg >= 0.0)) {
    throw ConfigError("sketch: loss weights must be non-negative");
  }
  if (coarse_iterations < 0 || fine_iterations < 0) throw ConfigError("sketch: iterations must be >= 0");
  if (!(coarse_scale > 0.0) || !(fine_scale > 0.0)) throw ConfigError("sketch: stage scales must be positive");
  if (!(lr_strokes > 0.0) || !(lr_rigid > 0.0) || !(lr_local > 0.0)) {
    throw ConfigError("sketch: learning rates must be positive");
  }
  if (outlier_k < 1 || !(outlier_z > 0.0)) throw ConfigError("sketch: bad outlier filter settings");
  suppression.validate();
  raster.validate();
  robust.validate();
  embedding.validate();
}

std::vector<Stroke3D> SketchModel::canonical_strokes() const {
  std::vector<Stroke3D> out(stroke_count());
  for (int i = 0; i < stroke_count(); ++i) {
    for (int j = 0; j < 4; ++j) out[i].control_points[j] = canonical.row(4 * i + j).transpose();
  }
  return out;
}

std::vector<Stroke3D> init_strokes(std::span<const Vec3> cloud, const SketchConfig& cfg) {
  cfg.validate();
  const std::vector<Vec3> filtered = outlier_filter(cloud, cfg.outlier_k, cfg.outlier_z);
  if (filtered.size() < static_cast<std::size_t>(cfg.stroke_count)) {
    throw ConfigError("sketch: " + std::to_string(filtered.size()) + " points left after filtering, " +
                      std::to_string(cfg.stroke_count) + " strokes requested");
  }
  const auto anchors = farthest_point_sampling(filtered, static_cast<std::size_t>(cfg.stroke_count), cfg.seed);
  std::mt19937_64 rng(cfg.seed + 7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> offset(0.0, cfg.base_radius);
  std::vector<Stroke3D> strokes(anchors.size());
  for (std::size_t s = 0; s < anchors.size(); ++s) {
    strokes[s].control_points[0] = filtered[anchors[s]];
    for (int j = 1; j < 4; ++j) {
      Vec3 step = Vec3::Zero();
      do {
        Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
        if (!(dir.norm() > 1e-12)) continue;
        step = dir.normalized() * (cfg.base_radius + offset(rng));
      } while (!(step.norm() >= cfg.min_spacing));
      strokes[s].control_points[j] = strokes[s].control_points[j - 1] + step;
    }
  }
  return strokes;
}

SketchModel init_sketch(const GuidanceModel& guidance, const SketchConfig& cfg) {
  cfg.validate();
  const MlpShape& gshape = guidance.deform_net.shape;
  if (gshape.output_dim != 3 || gshape.input_dim != guidance.encoder.input_dim()) {
    throw ConfigError("sketch: guidance network shape does not match its encoder");
  }
  SketchModel m;
  m.encoder = guidance.encoder;
  m.suppression = cfg.suppression;
  // points the guidance stage pushed out of the scene box explain no frame
  const std::vector<Vec3> all = deform_points(guidance, 0.0);
  std::vector<Vec3> cloud;
  for (const Vec3& p : all) {
    if (((p - m.encoder.box_center).array().abs() <= m.encoder.box_half_extent).all()) cloud.push_back(p);
  }
  if (static_cast<int>(cloud.size()) < std::max(cfg.stroke_count, cfg.outlier_k + 1)) cloud = all;
  const std::vector<Stroke3D> strokes = init_strokes(cloud, cfg);
  const int n = static_cast<int>(strokes.size());
  m.canonical.resize(4 * n, 3);
  m.anchors.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    m.anchors.row(i) = strokes[i].control_points[0].transpose();
    for (int j = 0; j < 4; ++j) m.canonical.row(4 * i + j) = strokes[i].control_points[j].transpose();
  }
  m.net_translation = guidance.deform_net;
  MlpShape rshape = gshape;
  rshape.output_dim = 4;
  m.net_rotation = mlp_init(rshape, cfg.seed + 11, true);
  m.net_local = mlp_init(gshape, cfg.seed + 12, true);
  return m;
}

SketchBinding bind_sketch(Tape& tape, const SketchModel& model, bool strokes, bool rigid, bool local) {
  SketchBinding b;
  b.canonical = strokes ? tape.parameter(model.canonical) : tape.constant(model.canonical);
  b.rotation = bind_mlp(tape, model.net_rotation, rigid);
  b.translation = bind_mlp(tape, model.net_translation, rigid);
  b.local = bind_mlp(tape, model.net_local, local);
  return b;
}

namespace {

// Unit quaternion from a network increment on top of the identity.
Var quat_from_increment(Tape& tape, Var h) {
  const Mat& hv = tape.value(h);
  if (hv.cols() != 4) throw DomainError("quat_from_increment: input must be n x 4");
  Mat raw = hv;
  raw.col(0).array() += 1.0;
  Eigen::VectorXd norms(raw.rows());
  Mat q(raw.rows(), 4);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    norms(i) = raw.row(i).norm();
    if (!(norms(i) > 0.0)) throw DegeneracyError("rotation network produced a zero quaternion");
    q.row(i) = raw.row(i) / norms(i);
  }
  Mat qcopy = q;
  return tape.record(std::move(q), {h}, [h, qcopy, norms](Tape& t, const Mat& g) {
    Mat* gh = t.grad_buffer(h);
    for (Eigen::Index i = 0; i < qcopy.rows(); ++i) {
      gh->row(i) += (g.row(i) - qcopy.row(i) * qcopy.row(i).dot(g.row(i))) / norms(i);
    }
  });
}

Mat3 rotation_of(const Mat& q, Eigen::Index i) {
  return quat_to_matrix({q(i, 0), q(i, 1), q(i, 2), q(i, 3)});
}

// Partial derivatives of the unit-quaternion rotation formula.
std::array<Mat3, 4> rotation_partials(double w, double x, double y, double z) {
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

// Row r of `points` belongs to stroke r / 4: out = R_i p + T_i.
Var rigid_apply(Tape& tape, Var quats, Var trans, Var points) {
  const Mat& q = tape.value(quats);
  const Mat& tr = tape.value(trans);
  const Mat& p = tape.value(points);
  const Eigen::Index n = q.rows();
  if (q.cols() != 4 || tr.rows() != n || tr.cols() != 3 || p.rows() != 4 * n || p.cols() != 3) {
    throw DomainError("rigid_apply: shape mismatch");
  }
  std::vector<Mat3> rots(n);
  Mat out(4 * n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    rots[i] = rotation_of(q, i);
    for (int j = 0; j < 4; ++j) {
      out.row(4 * i + j) = (rots[i] * p.row(4 * i + j).transpose() + tr.row(i).transpose()).transpose();
    }
  }
  return tape.record(std::move(out), {quats, trans, points}, [quats, trans, points, rots](Tape& t, const Mat& g) {
    const Mat& q = t.value(quats);
    const Mat& p = t.value(points);
    Mat* gq = t.grad_buffer(quats);
    Mat* gt = t.grad_buffer(trans);
    Mat* gp = t.grad_buffer(points);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const auto d = rotation_partials(q(i, 0), q(i, 1), q(i, 2), q(i, 3));
      for (int j = 0; j < 4; ++j) {
        const Eigen::Index r = 4 * i + j;
        const Vec3 gr = g.row(r).transpose();
        const Vec3 pr = p.row(r).transpose();
        if (gp) gp->row(r) += (rots[i].transpose() * gr).transpose();
        if (gt) gt->row(i) += gr.transpose();
        if (gq) {
          for (int c = 0; c < 4; ++c) (*gq)(i, c) += gr.dot(d[c] * pr);
        }
      }
    }
  });
}

// |s q - (1, 0, 0, 0)| per row with s the sign making w >= 0.
Var quat_identity_distance(Tape& tape, Var quats) {
  const Mat& q = tape.value(quats);
  Mat out(q.rows(), 1);
  Mat diff(q.rows(), 4);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double s = q(i, 0) >= 0.0 ? 1.0 : -1.0;
    diff.row(i) = s * q.row(i);
    diff(i, 0) -= 1.0;
    out(i, 0) = diff.row(i).norm();
  }
  Mat dist = out;
  return tape.record(std::move(out), {quats}, [quats, diff, dist](Tape& t, const Mat& g) {
    Mat* gq = t.grad_buffer(quats);
    const Mat& q = t.value(quats);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      if (!(dist(i, 0) > 0.0)) continue;
      const double s = q(i, 0) >= 0.0 ? 1.0 : -1.0;
      gq->row(i) += (g(i, 0) * s / dist(i, 0)) * diff.row(i);
    }
  });
}

std::vector<Stroke3D> rows_to_strokes(const Mat& p) {
  std::vector<Stroke3D> out(p.rows() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int j = 0; j < 4; ++j) out[i].control_points[j] = p.row(4 * i + j).transpose();
  }
  return out;
}

}  // namespace

SketchPose sketch_forward(Tape& tape, const SketchModel& model, const SketchBinding& b, double t) {
  SketchPose pose;
  Var anchors = tape.constant(model.anchors);
  Var anchor_input = encode_space_time(tape, model.encoder, anchors, t);
  pose.quaternions = quat_from_increment(tape, mlp_forward(tape, model.net_rotation, b.rotation, anchor_input));
  pose.translations = mlp_forward(tape, model.net_translation, b.translation, anchor_input);
  Var moved = rigid_apply(tape, pose.quaternions, pose.translations, b.canonical);
  pose.local = mlp_forward(tape, model.net_local, b.local, encode_space_time(tape, model.encoder, moved, t));
  Var delta = add(tape, sub(tape, moved, b.canonical), pose.local);
  pose.displacement = suppress_rows(tape, delta, model.suppression);
  pose.points = add(tape, b.canonical, pose.displacement);
  return pose;
}

std::vector<Stroke3D> sketch_at(const SketchModel& model, double t) {
  Tape tape;
  SketchBinding b = bind_sketch(tape, model, false, false, false);
  return rows_to_strokes(tape.value(sketch_forward(tape, model, b, t).points));
}

Var project_strokes(Tape& tape, const Camera& camera, Var points) {
  const Mat& p = tape.value(points);
  if (p.cols() != 3 || p.rows() % 4 != 0) throw DomainError("project_strokes: points must be 4n x 3");
  const Mat3 rot = camera.rotation();
  const Vec3 tr = camera.translation();
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < p.rows() / 4; ++i) {
    bool visible = true;
    for (int j = 0; j < 4; ++j) {
      const double depth = rot.row(2).dot(p.row(4 * i + j)) + tr(2);
      visible = visible && depth > kMinDepth;
    }
    if (visible) {
      for (int j = 0; j < 4; ++j) rows.push_back(static_cast<int>(4 * i + j));
    }
  }
  if (rows.empty()) return tape.constant(Mat(0, 8));
  Var vis = static_cast<Eigen::Index>(rows.size()) == p.rows() ? points : gather_rows(tape, points, rows);
  Var xy = slice_cols(tape, project_points(tape, camera, vis), 0, 2);
  return reshape(tape, xy, static_cast<int>(rows.size() / 4), 8);
}

Var render_sketch(Tape& tape, const Camera& camera, Var points, const StrokeRasterConfig& raster) {
  return raster_strokes(tape, project_strokes(tape, camera, points), camera.width, camera.height, raster);
}

GrayImage render_sketch(const SketchModel& model, double t, const Camera& camera,
                        const StrokeRasterConfig& raster) {
  Tape tape;
  SketchBinding b = bind_sketch(tape, model, false, false, false);
  return GrayImage(tape.value(render_sketch(tape, camera, sketch_forward(tape, model, b, t).points, raster)));
}

namespace {

Var frame_loss_with_target(Tape& tape, Var render, const GrayImage& frame, const Eigen::VectorXd& target_embedding,
                           const ImageDistanceConfig& backend, const SketchConfig& cfg, int frame_index) {
  Var d = robust_rho(tape, image_distance(tape, backend, frame, render, frame_index), cfg.robust);
  Var target = tape.constant(target_embedding.transpose());
  Var e = cosine_distance(tape, target, global_embedding(tape, cfg.embedding, render, frame_index));
  const std::array<Var, 2> terms{d, e};
  const std::array<double, 2> weights{cfg.w_frame, 1.0};
  return weighted_sum(tape, terms, weights);
}

}  // namespace

Var sketch_frame_loss(Tape& tape, Var render, const GrayImage& frame, const ImageDistanceConfig& backend,
                      const SketchConfig& cfg, int frame_index) {
  return frame_loss_with_target(tape, render, frame, global_embedding(cfg.embedding, frame, frame_index), backend,
                                cfg, frame_index);
}

Var sketch_temporal_loss(Tape& tape, Var displacement_t, Var displacement_prev, const TimeSample& sample) {
  return guidance_temporal_loss(tape, displacement_t, displacement_prev, sample);
}

Var sketch_regularizer(Tape& tape, const SketchPose& pose, SketchStage stage) {
  if (stage == SketchStage::coarse) {
    return mean(tape, add(tape, quat_identity_distance(tape, pose.quaternions), row_norms(tape, pose.translations)));
  }
  return mean(tape, row_norms(tape, pose.local));
}

namespace {

void step_params(Adam& adam, std::vector<Mat*> params, const Tape& tape, const std::vector<Var>& vars) {
  std::vector<Mat> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(tape.grad(v));
  adam.step(params, grads);
}

void run_stage(SketchModel& model, const FrameSet& frames, SketchStage stage, int iterations,
               const SketchConfig& cfg, const ImageDistanceConfig& backend, double scale,
               const SketchTrainOptions& options, std::mt19937_64& rng) {
  if (iterations == 0) return;
  if (frames.size() == 0) throw ConfigError("sketch: no frames to train on");
  const StrokeRasterConfig raster = cfg.raster.scaled(scale);
  std::vector<Eigen::VectorXd> targets(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const int idx = frames.source_index.empty() ? static_cast<int>(f) : frames.source_index[f];
    targets[f] = global_embedding(cfg.embedding, frames.images[f], idx);
  }
  const bool train_rigid = stage == SketchStage::coarse || !cfg.freeze_rigid_in_fine;
  const bool train_local = stage == SketchStage::fine;
  const bool use_pair = frames.dt > 0.0 && cfg.w_temporal > 0.0;
  const double reg_weight = stage == SketchStage::coarse ? cfg.w_rigid_reg : cfg.w_local_reg;
  Adam adam_strokes({cfg.lr_strokes});
  Adam adam_rigid({cfg.lr_rigid});
  Adam adam_local({cfg.lr_local});
  std::uniform_int_distribution<std::size_t> pick_frame(0, frames.size() - 1);

  for (int it = 0; it < iterations; ++it) {
    const std::size_t f = pick_frame(rng);
    const int idx = frames.source_index.empty() ? static_cast<int>(f) : frames.source_index[f];
    const double t = frames.times[f];
    Tape tape;
    SketchBinding b = bind_sketch(tape, model, true, train_rigid, train_local);
    SketchPose pose = sketch_forward(tape, model, b, t);
    Var render = render_sketch(tape, frames.cameras[f], pose.points, raster);
    std::vector<Var> terms{frame_loss_with_target(tape, render, frames.images[f], targets[f], backend, cfg, idx),
                           sketch_regularizer(tape, pose, stage)};
    std::vector<double> weights{1.0, reg_weight};
    if (use_pair) {
      const TimeSample sample = sample_time_pair(t, frames.dt, rng);
      SketchPose prev = sketch_forward(tape, model, b, sample.t_prev);
      terms.push_back(sketch_temporal_loss(tape, pose.displacement, prev.displacement, sample));
      weights.push_back(cfg.w_temporal);
    }
    Var total = weighted_sum(tape, terms, weights);
    SketchStep info;
    info.stage = stage;
    info.iteration = it;
    info.total = tape.item(total);
    info.frame = tape.item(terms[0]);
    info.regularizer = tape.item(terms[1]);
    if (use_pair) info.temporal = tape.item(terms[2]);
    if (!std::isfinite(info.total)) {
      throw Error("sketch: non-finite loss at iteration " + std::to_string(it));
    }
    tape.backward(total);

    step_params(adam_strokes, {&model.canonical}, tape, {b.canonical});
    // strokes pushed out of every view get no gradient back; keep them in the box
    const Eigen::RowVector3d lo = (model.encoder.box_center.array() - model.encoder.box_half_extent).matrix().transpose();
    const Eigen::RowVector3d hi = (model.encoder.box_center.array() + model.encoder.box_half_extent).matrix().transpose();
    model.canonical = model.canonical.cwiseMax(lo.replicate(model.canonical.rows(), 1)).cwiseMin(hi.replicate(model.canonical.rows(), 1));
    if (train_rigid) {
      std::vector<Mat*> params = model.net_rotation.parameters();
      std::vector<Var> vars = b.rotation.params;
      for (Mat* m : model.net_translation.parameters()) params.push_back(m);
      vars.insert(vars.end(), b.translation.params.begin(), b.translation.params.end());
      step_params(adam_rigid, params, tape, vars);
    }
    if (train_local) step_params(adam_local, model.net_local.parameters(), tape, b.local.params);
    if (options.on_step) options.on_step(info);
  }
}

}  // namespace

SketchModel train_sketch(const FrameSet& coarse_frames, const FrameSet& fine_frames,
                         const GuidanceModel& guidance, const SketchConfig& cfg,
                         const ImageDistanceConfig& backend, const SketchTrainOptions& options) {
  cfg.validate();
  backend.validate();
  SketchModel model = options.initial ? *options.initial : init_sketch(guidance, cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  run_stage(model, coarse_frames, SketchStage::coarse, cfg.coarse_iterations, cfg, backend, cfg.coarse_scale,
            options, rng);
  run_stage(model, fine_frames, SketchStage::fine, cfg.fine_iterations, cfg, backend, cfg.fine_scale, options,
            rng);
  return model;
}

SketchModel train_sketch(const SceneManifest& manifest, const GuidanceModel& guidance, const SketchConfig& cfg,
                         const ImageDistanceConfig& backend, const SketchTrainOptions& options) {
  cfg.validate();
  const FrameSet coarse = load_frames(manifest, cfg.coarse_scale);
  const FrameSet fine = load_frames(manifest, cfg.fine_scale);
  return train_sketch(coarse, fine, guidance, cfg, backend, options);
}

}  // namespace l3s
