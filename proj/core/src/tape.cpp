#include "l3s/tape.hpp"

#include <string>
#include <utility>

#include "l3s/error.hpp"

namespace l3s {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
  }
}

}  // namespace

std::size_t Tape::index(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw DomainError("tape: invalid variable handle");
  }
  return static_cast<std::size_t>(v.id);
}

Var Tape::constant(Mat value) {
  nodes_.push_back({std::move(value), Mat(), false, {}});
  return {static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Mat value) {
  nodes_.push_back({std::move(value), Mat(), true, {}});
  return {static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Mat value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_[index(p)].requires_grad;
  nodes_.push_back({std::move(value), Mat(), needs, needs ? std::move(backward) : Backward{}});
  return {static_cast<std::int32_t>(nodes_.size() - 1)};
}

double Tape::item(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw DomainError("tape: item() on a non-scalar value");
  return m(0, 0);
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[index(v)];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat* Tape::grad_buffer(Var v) {
  Node& n = nodes_[index(v)];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::accumulate(Var v, const Mat& g) {
  if (Mat* buf = grad_buffer(v)) {
    require_same_shape(*buf, g, "tape accumulate");
    *buf += g;
  }
}

void Tape::backward(Var root) {
  const std::size_t r = index(root);
  if (nodes_[r].value.size() != 1) throw DomainError("tape: backward() needs a scalar root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  visits_ = 0;
  if (!nodes_[r].requires_grad) return;
  nodes_[r].grad = Mat::Ones(1, 1);
  for (std::size_t i = r + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    ++visits_;
    n.backward(*this, n.grad);
  }
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  return tape.record(tape.value(a) + tape.value(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "sub");
  return tape.record(tape.value(a) - tape.value(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "mul");
  return tape.record(tape.value(a).cwiseProduct(tape.value(b)), {a, b},
                     [a, b](Tape& t, const Mat& g) {
                       if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
                       if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
                     });
}

Var scale(Tape& tape, Var a, double s) {
  return tape.record(tape.value(a) * s, {a}, [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

Var add_scalar(Tape& tape, Var a, double s) {
  return tape.record(tape.value(a).array() + s, {a},
                     [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

Var weighted_sum(Tape& tape, std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) throw DomainError("weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * tape.item(terms[i]);
  std::vector<Var> parents(terms.begin(), terms.end());
  std::vector<double> w(weights.begin(), weights.end());
  return tape.record(Mat::Constant(1, 1, total), parents,
                     [parents, w](Tape& t, const Mat& g) {
                       for (std::size_t i = 0; i < parents.size(); ++i) {
                         t.accumulate(parents[i], g * w[i]);
                       }
                     });
}

Var sum(Tape& tape, Var a) {
  const Mat& v = tape.value(a);
  const auto rows = v.rows(), cols = v.cols();
  return tape.record(Mat::Constant(1, 1, v.sum()), {a}, [a, rows, cols](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(rows, cols, g(0, 0)));
  });
}

Var mean(Tape& tape, Var a) {
  const Mat& v = tape.value(a);
  if (v.size() == 0) throw DomainError("mean: empty input");
  const auto rows = v.rows(), cols = v.cols();
  const double inv = 1.0 / static_cast<double>(v.size());
  return tape.record(Mat::Constant(1, 1, v.sum() * inv), {a},
                     [a, rows, cols, inv](Tape& t, const Mat& g) {
                       t.accumulate(a, Mat::Constant(rows, cols, g(0, 0) * inv));
                     });
}

Var linear(Tape& tape, Var x, Var weight, Var bias) {
  const Mat& xv = tape.value(x);
  const Mat& w = tape.value(weight);
  const Mat& b = tape.value(bias);
  if (xv.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows()) {
    throw DomainError("linear: shape mismatch (input " + std::to_string(xv.cols()) +
                      " columns, weight " + std::to_string(w.rows()) + "x" +
                      std::to_string(w.cols()) + ")");
  }
  Mat out = xv * w.transpose();
  out.rowwise() += b.row(0);
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape& t, const Mat& g) {
    if (Mat* gx = t.grad_buffer(x)) gx->noalias() += g * t.value(weight);
    if (Mat* gw = t.grad_buffer(weight)) gw->noalias() += g.transpose() * t.value(x);
    if (Mat* gb = t.grad_buffer(bias)) *gb += g.colwise().sum();
  });
}

Var relu(Tape& tape, Var a) {
  Mat out = tape.value(a).cwiseMax(0.0);
  return tape.record(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    if (Mat* ga = t.grad_buffer(a)) {
      *ga += (t.value(a).array() > 0.0).select(g, 0.0).matrix();
    }
  });
}

Var concat_cols(Tape& tape, Var a, Var b) {
  const Mat& av = tape.value(a);
  const Mat& bv = tape.value(b);
  if (av.rows() != bv.rows()) throw DomainError("concat_cols: row count mismatch");
  Mat out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const auto ac = av.cols(), bc = bv.cols();
  return tape.record(std::move(out), {a, b}, [a, b, ac, bc](Tape& t, const Mat& g) {
    if (Mat* ga = t.grad_buffer(a)) *ga += g.leftCols(ac);
    if (Mat* gb = t.grad_buffer(b)) *gb += g.rightCols(bc);
  });
}

Var slice_cols(Tape& tape, Var a, int begin, int count) {
  const Mat& av = tape.value(a);
  if (begin < 0 || count < 0 || begin + count > av.cols()) throw DomainError("slice_cols: range");
  return tape.record(av.middleCols(begin, count), {a}, [a, begin, count](Tape& t, const Mat& g) {
    if (Mat* ga = t.grad_buffer(a)) ga->middleCols(begin, count) += g;
  });
}

Var gather_rows(Tape& tape, Var a, std::span<const int> rows) {
  const Mat& av = tape.value(a);
  Mat out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw DomainError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return tape.record(std::move(out), {a}, [a, idx](Tape& t, const Mat& g) {
    if (Mat* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < idx.size(); ++i) ga->row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var reshape(Tape& tape, Var a, int rows, int cols) {
  const Mat& av = tape.value(a);
  if (static_cast<Eigen::Index>(rows) * cols != av.size()) throw DomainError("reshape: size mismatch");
  Mat out = Eigen::Map<const Mat>(av.data(), rows, cols);
  const auto r0 = av.rows(), c0 = av.cols();
  return tape.record(std::move(out), {a}, [a, r0, c0](Tape& t, const Mat& g) {
    t.accumulate(a, Eigen::Map<const Mat>(g.data(), r0, c0));
  });
}

Var row_norms(Tape& tape, Var a) {
  const Mat& av = tape.value(a);
  Mat out = av.rowwise().norm();
  return tape.record(out, {a}, [a, out](Tape& t, const Mat& g) {
    if (Mat* ga = t.grad_buffer(a)) {
      const Mat& av = t.value(a);
      for (Eigen::Index i = 0; i < av.rows(); ++i) {
        if (out(i, 0) > 0.0) ga->row(i) += (g(i, 0) / out(i, 0)) * av.row(i);
      }
    }
  });
}

Var detach(Tape& tape, Var a) { return tape.constant(tape.value(a)); }

}  // namespace l3s
