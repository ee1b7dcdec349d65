#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "l3s/geometry.hpp"
#include "l3s/tape.hpp"

namespace l3s {

/// Frequency counts of the sin/cos positional encoding plus the box used to
/// map scene coordinates into [-1, 1] before encoding.
struct EncoderConfig {
  int spatial_frequencies = 10;
  int temporal_frequencies = 10;
  Vec3 box_center = Vec3::Zero();
  double box_half_extent = 0.5;

  void validate() const;
  int input_dim() const { return 6 * spatial_frequencies + 2 * temporal_frequencies; }
  bool operator==(const EncoderConfig&) const = default;
};

/// Per input component, 2L values ordered (sin 2^0 pi x, cos 2^0 pi x,
/// sin 2^1 pi x, ...). Input n x d, output n x (2 L d).
Mat positional_encode(const Mat& x, int frequencies);
Var positional_encode(Tape& tape, Var x, int frequencies);

/// Network input for a set of points (n x 3, scene units) at time t:
/// [gamma(normalized points), gamma(t)] per row.
Var encode_space_time(Tape& tape, const EncoderConfig& enc, Var points, double t);

struct MlpShape {
  int input_dim = 80;
  int width = 256;
  int depth = 8;        // hidden layers
  int skip_layer = 4;   // input is concatenated after this hidden layer; -1 disables
  int output_dim = 3;

  void validate() const;
  /// Closed-form parameter count implied by the layer shapes.
  std::size_t parameter_count() const;
  bool operator==(const MlpShape&) const = default;
};

/// Paper-scale default: 8 hidden layers of width 256 with a skip at layer 4.
MlpShape default_mlp_shape(int input_dim, int output_dim);
/// Small profile used for desk-scale runs and tests.
MlpShape desk_mlp_shape(int input_dim, int output_dim);

struct LinearLayer {
  Mat weight;  // out x in
  Mat bias;    // 1 x out
};

struct Mlp {
  MlpShape shape;
  std::vector<LinearLayer> layers;  // depth hidden layers + output layer

  std::size_t parameter_count() const;
  /// Weights then bias per layer, in layer order.
  std::vector<Mat*> parameters();
  std::vector<const Mat*> parameters() const;
};

/// Uniform fan-in initialization U(-1/sqrt(in), 1/sqrt(in)), deterministic in
/// `seed`. With `zero_final` the output layer starts at exactly zero.
Mlp mlp_init(const MlpShape& shape, std::uint64_t seed, bool zero_final);

/// Tape leaves for an Mlp's parameters, in Mlp::parameters() order.
struct MlpBinding {
  std::vector<Var> params;
};
MlpBinding bind_mlp(Tape& tape, const Mlp& net, bool trainable);

/// ReLU on hidden layers, linear output layer.
Var mlp_forward(Tape& tape, const Mlp& net, const MlpBinding& binding, Var input);
/// Forward pass without recording gradients.
Mat mlp_eval(const Mlp& net, const Mat& input);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter matrices.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Throws DomainError when shapes differ from previous calls or between
  /// params and grads.
  void step(std::span<Mat* const> params, std::span<const Mat> grads);
  void reset();

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  std::vector<Mat> first_;
  std::vector<Mat> second_;
  std::int64_t steps_ = 0;
};

/// f(x, grad): returns f(x); when `grad` is non-empty fills the analytic
/// gradient.
using GradFunction = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct GradCheckReport {
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  std::vector<std::size_t> failing;
  std::vector<double> analytic;
  std::vector<double> numeric;

  double pass_fraction() const {
    return checked == 0 ? 1.0 : 1.0 - static_cast<double>(failing.size()) / checked;
  }
};

/// Central finite differences per coordinate. Relative error is
/// |a - n| / max(|a|, |n|, floor). `coords` restricts the check; empty means
/// all coordinates.
GradCheckReport grad_check(const GradFunction& f, std::span<const double> x, double step,
                           double tolerance, std::span<const std::size_t> coords = {},
                           double floor = 1e-7);

}  // namespace l3s
