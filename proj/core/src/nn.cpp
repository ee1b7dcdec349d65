#include "l3s/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "l3s/error.hpp"

namespace l3s {

void EncoderConfig::validate() const {
  if (spatial_frequencies < 1 || temporal_frequencies < 1) {
    throw ConfigError("encoder frequency counts must be >= 1");
  }
  if (!(box_half_extent > 0.0)) throw ConfigError("encoder box half extent must be > 0");
}

Mat positional_encode(const Mat& x, int frequencies) {
  if (frequencies < 1) throw DomainError("positional_encode: L must be >= 1");
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat out(n, 2 * frequencies * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      double freq = std::numbers::pi;
      for (int l = 0; l < frequencies; ++l, freq *= 2.0) {
        const double a = freq * x(i, c);
        out(i, c * 2 * frequencies + 2 * l) = std::sin(a);
        out(i, c * 2 * frequencies + 2 * l + 1) = std::cos(a);
      }
    }
  }
  return out;
}

Var positional_encode(Tape& tape, Var x, int frequencies) {
  Mat out = positional_encode(tape.value(x), frequencies);
  return tape.record(out, {x}, [x, frequencies, out](Tape& t, const Mat& g) {
    Mat* gx = t.grad_buffer(x);
    if (!gx) return;
    const Eigen::Index n = gx->rows(), d = gx->cols();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < d; ++c) {
        double freq = std::numbers::pi;
        double acc = 0.0;
        for (int l = 0; l < frequencies; ++l, freq *= 2.0) {
          const Eigen::Index k = c * 2 * frequencies + 2 * l;
          // d sin = freq cos, d cos = -freq sin
          acc += freq * (g(i, k) * out(i, k + 1) - g(i, k + 1) * out(i, k));
        }
        (*gx)(i, c) += acc;
      }
    }
  });
}

Var encode_space_time(Tape& tape, const EncoderConfig& enc, Var points, double t) {
  const Mat& p = tape.value(points);
  if (p.cols() != 3) throw DomainError("encode_space_time: points must be n x 3");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0,1]");
  const Eigen::Index n = p.rows();
  const double inv = 1.0 / enc.box_half_extent;
  Mat offset = Mat::Zero(n, 3);
  offset.rowwise() -= enc.box_center.transpose();
  // normalized = (p - center) / half_extent
  Var shifted = add(tape, points, tape.constant(std::move(offset)));
  Var normalized = scale(tape, shifted, inv);
  Var spatial = positional_encode(tape, normalized, enc.spatial_frequencies);
  Mat tcol = Mat::Constant(1, 1, t);
  Mat temporal_row = positional_encode(tcol, enc.temporal_frequencies);
  Mat temporal = temporal_row.replicate(n, 1);
  return concat_cols(tape, spatial, tape.constant(std::move(temporal)));
}

void MlpShape::validate() const {
  if (input_dim < 1 || width < 1 || depth < 1) throw ConfigError("mlp: dimensions must be >= 1");
  if (output_dim != 3 && output_dim != 4) throw ConfigError("mlp: output dimension must be 3 or 4");
  if (skip_layer >= depth - 1 || skip_layer < -1) {
    throw ConfigError("mlp: skip layer " + std::to_string(skip_layer) + " out of range");
  }
}

std::size_t MlpShape::parameter_count() const {
  const std::size_t in = input_dim, w = width, out = output_dim;
  std::size_t total = in * w + w;                       // first hidden layer
  total += static_cast<std::size_t>(depth - 1) * (w * w + w);
  if (skip_layer >= 0) total += in * w;                 // widened layer after the skip
  total += w * out + out;                               // output layer
  return total;
}

MlpShape default_mlp_shape(int input_dim, int output_dim) {
  return {input_dim, 256, 8, 4, output_dim};
}

MlpShape desk_mlp_shape(int input_dim, int output_dim) {
  return {input_dim, 64, 4, -1, output_dim};
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<Mat*> Mlp::parameters() {
  std::vector<Mat*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Mat*> Mlp::parameters() const {
  std::vector<const Mat*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Mlp mlp_init(const MlpShape& shape, std::uint64_t seed, bool zero_final) {
  shape.validate();
  std::mt19937_64 rng(seed);
  Mlp net;
  net.shape = shape;
  auto make = [&](int in, int out, bool zero) {
    LinearLayer l{Mat::Zero(out, in), Mat::Zero(1, out)};
    if (!zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = u(rng);
    }
    return l;
  };
  for (int i = 0; i < shape.depth; ++i) {
    int in = i == 0 ? shape.input_dim : shape.width;
    if (shape.skip_layer >= 0 && i == shape.skip_layer + 1) in += shape.input_dim;
    net.layers.push_back(make(in, shape.width, false));
  }
  net.layers.push_back(make(shape.width, shape.output_dim, zero_final));
  return net;
}

MlpBinding bind_mlp(Tape& tape, const Mlp& net, bool trainable) {
  MlpBinding b;
  for (const Mat* p : net.parameters()) {
    b.params.push_back(trainable ? tape.parameter(*p) : tape.constant(*p));
  }
  return b;
}

Var mlp_forward(Tape& tape, const Mlp& net, const MlpBinding& binding, Var input) {
  const MlpShape& s = net.shape;
  if (tape.value(input).cols() != s.input_dim) {
    throw DomainError("mlp_forward: input has " + std::to_string(tape.value(input).cols()) +
                      " columns, network expects " + std::to_string(s.input_dim));
  }
  if (binding.params.size() != 2 * net.layers.size()) throw DomainError("mlp_forward: bad binding");
  Var h = input;
  for (int i = 0; i < s.depth; ++i) {
    if (s.skip_layer >= 0 && i == s.skip_layer + 1) h = concat_cols(tape, h, input);
    h = relu(tape, linear(tape, h, binding.params[2 * i], binding.params[2 * i + 1]));
  }
  return linear(tape, h, binding.params[2 * s.depth], binding.params[2 * s.depth + 1]);
}

Mat mlp_eval(const Mlp& net, const Mat& input) {
  const MlpShape& s = net.shape;
  if (input.cols() != s.input_dim) throw DomainError("mlp_eval: input width mismatch");
  Mat h = input;
  for (int i = 0; i < s.depth; ++i) {
    if (s.skip_layer >= 0 && i == s.skip_layer + 1) {
      Mat cat(h.rows(), h.cols() + input.cols());
      cat << h, input;
      h = std::move(cat);
    }
    Mat next = h * net.layers[i].weight.transpose();
    next.rowwise() += net.layers[i].bias.row(0);
    h = next.cwiseMax(0.0);
  }
  Mat out = h * net.layers[s.depth].weight.transpose();
  out.rowwise() += net.layers[s.depth].bias.row(0);
  return out;
}

void Adam::step(std::span<Mat* const> params, std::span<const Mat> grads) {
  if (params.size() != grads.size()) throw DomainError("adam: parameter/gradient count mismatch");
  if (first_.empty()) {
    for (Mat* p : params) {
      first_.push_back(Mat::Zero(p->rows(), p->cols()));
      second_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (first_.size() != params.size()) throw DomainError("adam: parameter list changed size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        first_[i].rows() != grads[i].rows() || first_[i].cols() != grads[i].cols()) {
      throw DomainError("adam: shape mismatch at parameter " + std::to_string(i));
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    first_[i] = b1 * first_[i] + (1.0 - b1) * grads[i];
    second_[i] = b2 * second_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
    auto m_hat = first_[i].array() / c1;
    auto v_hat = second_[i].array() / c2;
    params[i]->array() -= config_.learning_rate * m_hat / (v_hat.sqrt() + config_.epsilon);
  }
}

void Adam::reset() {
  first_.clear();
  second_.clear();
  steps_ = 0;
}

GradCheckReport grad_check(const GradFunction& f, std::span<const double> x, double step,
                           double tolerance, std::span<const std::size_t> coords, double floor) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> analytic(point.size(), 0.0);
  f(point, analytic);

  std::vector<std::size_t> which(coords.begin(), coords.end());
  if (which.empty()) {
    which.resize(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) which[i] = i;
  }
  GradCheckReport report;
  for (std::size_t c : which) {
    if (c >= point.size()) throw DomainError("grad_check: coordinate out of range");
    const double orig = point[c];
    point[c] = orig + step;
    const double fp = f(point, {});
    point[c] = orig - step;
    const double fm = f(point, {});
    point[c] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    const double rel = std::abs(a - numeric) / denom;
    ++report.checked;
    report.analytic.push_back(a);
    report.numeric.push_back(numeric);
    report.max_relative_error = std::max(report.max_relative_error, rel);
    if (!(rel <= tolerance)) report.failing.push_back(c);
  }
  return report;
}

}  // namespace l3s
