#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace l3s {

/// Dense row-major matrix of doubles; every tape value has this type.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a value recorded on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode gradient tape.
///
/// Values are recorded in evaluation order together with a closure that maps
/// the output adjoint onto the adjoints of its inputs. `backward` walks the
/// records once in reverse order. Nodes that cannot reach a parameter carry no
/// closure and are skipped.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  Var constant(Mat value);
  Var parameter(Mat value);
  Var scalar(double value) { return constant(Mat::Constant(1, 1, value)); }

  /// Records an operation result. `backward` is dropped when no parent
  /// requires a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, Backward backward);
  Var record(Mat value, std::span<const Var> parents, Backward backward);

  const Mat& value(Var v) const { return nodes_[index(v)].value; }
  double item(Var v) const;
  bool requires_grad(Var v) const { return nodes_[index(v)].requires_grad; }

  /// Accumulated adjoint; an all-zero matrix of the value's shape when
  /// nothing reached this node.
  Mat grad(Var v) const;
  /// Adds `g` into the adjoint of `v` (no-op for constants).
  void accumulate(Var v, const Mat& g);
  /// Mutable adjoint buffer for in-place accumulation, or nullptr for
  /// constants.
  Mat* grad_buffer(Var v);

  /// Seeds d(root)/d(root) = 1 and propagates. `root` must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  /// Number of closures executed by the last backward call.
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::size_t index(Var v) const;

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// Generic differentiable operations. Shapes follow Eigen conventions; all
// throw DomainError on mismatch.

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);  // elementwise
Var scale(Tape& tape, Var a, double s);
Var add_scalar(Tape& tape, Var a, double s);
/// Sum of 1x1 values weighted by `weights`.
Var weighted_sum(Tape& tape, std::span<const Var> terms, std::span<const double> weights);
Var sum(Tape& tape, Var a);
Var mean(Tape& tape, Var a);
/// x * W^T + b with x (n x in), W (out x in), b (1 x out).
Var linear(Tape& tape, Var x, Var weight, Var bias);
Var relu(Tape& tape, Var a);
Var concat_cols(Tape& tape, Var a, Var b);
Var slice_cols(Tape& tape, Var a, int begin, int count);
/// Row gather: out.row(i) = a.row(rows[i]).
Var gather_rows(Tape& tape, Var a, std::span<const int> rows);
/// Reinterprets the row-major storage with a new shape.
Var reshape(Tape& tape, Var a, int rows, int cols);
/// Per-row Euclidean norm (n x 1); subgradient 0 at the origin.
Var row_norms(Tape& tape, Var a);
/// Same value as `a` with no gradient path.
Var detach(Tape& tape, Var a);

}  // namespace l3s
