#include "lgkde/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgkde/error.hpp"

namespace lgkde::ad {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw Error("use of an unbound autodiff variable");
  return tape_->value(*this);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("expected a 1x1 node, got " + v.shape_string());
  }
  return v[0];
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("autodiff variable does not belong to this tape");
  }
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, "leaf", true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, "constant", false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::span<const Var> parents, std::string_view op,
                 BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.parents.reserve(parents.size());
  for (const Var& p : parents) {
    check_owned(p);
    node.parents.push_back(p.id_);
    node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

Matrix Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

std::string_view Tape::op(Var v) const {
  check_owned(v);
  return nodes_[v.id_].op;
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  Matrix& buf = grad_buffer(id);
  if (!buf.same_shape(g)) {
    throw DimensionError(std::string("gradient shape ") + g.shape_string() +
                         " does not match node '" + std::string(nodes_[id].op) + "' of shape " +
                         buf.shape_string());
  }
  buf += g;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  Node& root = nodes_[loss.id_];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw DimensionError("backward requires a 1x1 loss, got " + root.value.shape_string());
  }
  if (!root.requires_grad) return;
  // Leaves accumulate across calls; interior nodes start fresh.
  for (std::size_t i = 0; i <= loss.id_; ++i)
    if (nodes_[i].backward) nodes_[i].grad = Matrix();
  grad_buffer(loss.id_)[0] += 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(n.grad, *this);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Matrix();
}

void Tape::note_branch(std::uint64_t value) noexcept {
  branch_hash_ ^= value + 0x9e3779b97f4a7c15ULL + (branch_hash_ << 6) + (branch_hash_ >> 2);
}

namespace {

void require_same_shape(const Var& a, const Var& b, std::string_view op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + " shape mismatch: " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error("use of an unbound autodiff variable");
  return *a.tape();
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Var apply(UnaryOp op, Var a) {
  switch (op) {
    case UnaryOp::exp:
      return exp(a);
    case UnaryOp::relu:
      return relu(a);
    case UnaryOp::square:
      return square(a);
    case UnaryOp::sqrt:
      return sqrt(a);
  }
  throw Error("unknown unary op");
}

Var apply(BinaryOp op, Var a, Var b) {
  switch (op) {
    case BinaryOp::add:
      return add(a, b);
    case BinaryOp::sub:
      return sub(a, b);
    case BinaryOp::mul:
      return mul(a, b);
    case BinaryOp::div:
      return div(a, b);
  }
  throw Error("unknown binary op");
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return t.record(lgkde::matmul(a.value(), b.value()), parents, "matmul",
                  [ia, ib](const Matrix& g, Tape& tape) {
                    if (tape.requires_grad(ia)) tape.accumulate(ia, matmul_bt(g, tape.value(ib)));
                    if (tape.requires_grad(ib)) tape.accumulate(ib, matmul_at(tape.value(ia), g));
                  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return tape_of(a).record(std::move(out), parents, "add", [ia, ib](const Matrix& g, Tape& tape) {
    tape.accumulate(ia, g);
    tape.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return tape_of(a).record(std::move(out), parents, "sub", [ia, ib](const Matrix& g, Tape& tape) {
    tape.accumulate(ia, g);
    if (tape.requires_grad(ib)) {
      Matrix neg = g;
      neg *= -1.0;
      tape.accumulate(ib, neg);
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return tape_of(a).record(std::move(out), parents, "mul", [ia, ib](const Matrix& g, Tape& tape) {
    const Matrix& x = tape.value(ia);
    const Matrix& y = tape.value(ib);
    if (tape.requires_grad(ia)) {
      Matrix& ga = tape.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (tape.requires_grad(ib)) {
      Matrix& gb = tape.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same_shape(a, b, "div");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return tape_of(a).record(std::move(out), parents, "div", [ia, ib](const Matrix& g, Tape& tape) {
    const Matrix& x = tape.value(ia);
    const Matrix& y = tape.value(ib);
    if (tape.requires_grad(ia)) {
      Matrix& ga = tape.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
    }
    if (tape.requires_grad(ib)) {
      Matrix& gb = tape.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * x[i] / (y[i] * y[i]);
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  out *= s;
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents, "scale", [ia, s](const Matrix& g, Tape& tape) {
    Matrix& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Matrix out = map(a.value(), [s](double x) { return x + s; });
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents, "add_scalar",
                           [ia](const Matrix& g, Tape& tape) { tape.accumulate(ia, g); });
}

Var exp(Var a) {
  Matrix out = map(a.value(), [](double x) { return std::exp(x); });
  Tape& t = tape_of(a);
  const std::size_t ia = a.id(), io = t.size();
  Var parents[] = {a};
  return t.record(std::move(out), parents, "exp", [ia, io](const Matrix& g, Tape& tape) {
    const Matrix& y = tape.value(io);
    Matrix& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var relu(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  std::uint64_t word = 0, mask_hash = 0x84222325ULL;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x[i] > 0.0;
    out[i] = on ? x[i] : 0.0;
    word = (word << 1) | static_cast<std::uint64_t>(on);
    if ((i & 63U) == 63U) {
      mask_hash = mask_hash * 1099511628211ULL ^ word;
      word = 0;
    }
  }
  mask_hash = mask_hash * 1099511628211ULL ^ word;
  Tape& t = tape_of(a);
  t.note_branch(mask_hash);
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return t.record(std::move(out), parents, "relu", [ia](const Matrix& g, Tape& tape) {
    const Matrix& xin = tape.value(ia);
    Matrix& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xin[i] > 0.0) ga[i] += g[i];
  });
}

Var square(Var a) {
  Matrix out = map(a.value(), [](double x) { return x * x; });
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents, "square", [ia](const Matrix& g, Tape& tape) {
    const Matrix& x = tape.value(ia);
    Matrix& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var sqrt(Var a) {
  const Matrix& x = a.value();
  for (double v : x.values()) {
    if (v < 0.0) throw NumericalError("sqrt of a negative entry");
  }
  Matrix out = map(x, [](double v) { return std::sqrt(v); });
  Tape& t = tape_of(a);
  const std::size_t ia = a.id(), io = t.size();
  Var parents[] = {a};
  return t.record(std::move(out), parents, "sqrt", [ia, io](const Matrix& g, Tape& tape) {
    const Matrix& y = tape.value(io);
    Matrix& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > 0.0) ga[i] += g[i] / (2.0 * y[i]);
  });
}

Var sum(Var a) {
  const Matrix& x = a.value();
  const double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(Matrix(1, 1, s), parents, "sum", [ia](const Matrix& g, Tape& tape) {
    Matrix& ga = tape.grad_buffer(ia);
    for (double& v : ga.values()) v += g[0];
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(a.value().transposed(), parents, "transpose",
                           [ia](const Matrix& g, Tape& tape) {
                             tape.accumulate(ia, g.transposed());
                           });
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("softmax of an empty sequence");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

Var softmax(Var logits) {
  const Matrix& x = logits.value();
  if (x.rows() != 1 && x.cols() != 1) {
    throw DimensionError("softmax expects a vector, got " + x.shape_string());
  }
  std::vector<double> y = softmax(x.values());
  Tape& t = tape_of(logits);
  const std::size_t ia = logits.id(), io = t.size();
  Var parents[] = {logits};
  return t.record(Matrix(x.rows(), x.cols(), std::move(y)), parents, "softmax",
                  [ia, io](const Matrix& g, Tape& tape) {
                    const Matrix& yv = tape.value(io);
                    double dot = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
                    Matrix& ga = tape.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += yv[i] * (g[i] - dot);
                  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("vstack of nothing");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionError("vstack column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t r = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + r * cols);
    ids.push_back(p.id());
    offsets.push_back(r);
    r += v.rows();
  }
  return tape_of(parts.front())
      .record(std::move(out), parts, "vstack",
              [ids = std::move(ids), offsets = std::move(offsets)](const Matrix& g, Tape& tape) {
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  if (!tape.requires_grad(ids[k])) continue;
                  Matrix& gp = tape.grad_buffer(ids[k]);
                  const double* src = g.values().data() + offsets[k] * g.cols();
                  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
                }
              });
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("hstack of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("hstack row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, c0 + j) = v(i, j);
    ids.push_back(p.id());
    offsets.push_back(c0);
    c0 += v.cols();
  }
  return tape_of(parts.front())
      .record(std::move(out), parts, "hstack",
              [ids = std::move(ids), offsets = std::move(offsets)](const Matrix& g, Tape& tape) {
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  if (!tape.requires_grad(ids[k])) continue;
                  Matrix& gp = tape.grad_buffer(ids[k]);
                  for (std::size_t i = 0; i < gp.rows(); ++i)
                    for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offsets[k] + j);
                }
              });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = a.value();
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         x.shape_string());
  }
  std::vector<double> vals(x.values().begin() + begin * x.cols(),
                           x.values().begin() + (begin + count) * x.cols());
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(Matrix(count, x.cols(), std::move(vals)), parents, "slice_rows",
                           [ia, begin](const Matrix& g, Tape& tape) {
                             Matrix& ga = tape.grad_buffer(ia);
                             double* dst = ga.values().data() + begin * ga.cols();
                             for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                           });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& x = a.value();
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw DimensionError("gather_rows index out of range");
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  Var parents[] = {a};
  return tape_of(a).record(
      std::move(out), parents, "gather_rows",
      [ia, idx = std::vector<std::size_t>(rows.begin(), rows.end())](const Matrix& g,
                                                                     Tape& tape) {
        Matrix& ga = tape.grad_buffer(ia);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(idx[i], j) += g(i, j);
      });
}

Var standardize_columns(Var a, double eps) {
  const Matrix& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw DimensionError("standardize_columns of an empty matrix");
  std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
  for (std::size_t j = 0; j < d; ++j)
    inv_std[j] = 1.0 / std::sqrt(var[j] / static_cast<double>(n) + eps);
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = (x(i, j) - mean[j]) * inv_std[j];
  Tape& t = tape_of(a);
  const std::size_t ia = a.id(), io = t.size();
  Var parents[] = {a};
  return t.record(std::move(out), parents, "standardize_columns",
                  [ia, io, inv_std](const Matrix& g, Tape& tape) {
                    const Matrix& xh = tape.value(io);
                    const std::size_t rows = g.rows(), cols = g.cols();
                    const double nn = static_cast<double>(rows);
                    Matrix& ga = tape.grad_buffer(ia);
                    for (std::size_t j = 0; j < cols; ++j) {
                      double sg = 0.0, sgx = 0.0;
                      for (std::size_t i = 0; i < rows; ++i) {
                        sg += g(i, j);
                        sgx += g(i, j) * xh(i, j);
                      }
                      for (std::size_t i = 0; i < rows; ++i)
                        ga(i, j) += inv_std[j] / nn * (nn * g(i, j) - sg - xh(i, j) * sgx);
                    }
                  });
}

}  // namespace lgkde::ad
