#pragma once

#include "l3s/sketch.hpp"

namespace fixture {

using l3s::Mat;

// Small net whose single hidden unit is relu(sin(pi t)); the head starts at
// zero so callers set layers[1].weight (gain) and layers[1].bias.
inline l3s::Mlp time_unit_net(int outputs) {
  l3s::Mlp net = l3s::mlp_init({8, 1, 1, -1, outputs}, 0, true);
  net.layers[0].weight.setZero();
  net.layers[0].weight(0, 6) = 1.0;  // gamma(t) starts at column 6
  net.layers[0].bias.setZero();
  return net;
}

// Sketch model over the given control points (4n x 3) with L = 1 encodings
// and identity motion.
inline l3s::SketchModel hand_model(const Mat& canonical) {
  l3s::SketchModel m;
  m.canonical = canonical;
  m.anchors = Mat(canonical.rows() / 4, 3);
  for (Eigen::Index i = 0; i < m.anchors.rows(); ++i) m.anchors.row(i) = canonical.row(4 * i);
  m.encoder.spatial_frequencies = 1;
  m.encoder.temporal_frequencies = 1;
  m.encoder.box_center = l3s::Vec3::Zero();
  m.encoder.box_half_extent = 1.0;
  m.net_rotation = time_unit_net(4);
  m.net_translation = time_unit_net(3);
  m.net_local = time_unit_net(3);
  return m;
}

inline Mat one_stroke() {
  Mat c(4, 3);
  c << 0.1, 0.0, 0.0, 0.2, 0.1, 0.05, 0.3, 0.0, 0.1, 0.4, -0.1, 0.0;
  return c;
}

}  // namespace fixture
