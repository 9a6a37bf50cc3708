#include "dispa/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dispa::ad {

// ---- Matrix ----------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw ShapeError("Matrix: data length does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row_vector(std::span<const double> v) { return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end())); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& o) {
  if (!same_shape(o)) throw ShapeError("Matrix +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

// C += A * B
void gemm_nn(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data().data() + i * c.cols();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = b.data().data() + p * b.cols();
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T
void gemm_nt(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data().data() + i * a.cols();
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data().data() + j * b.cols();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) += s;
    }
  }
}

// C += A^T * B
void gemm_tn(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data().data() + p * a.cols();
    const double* brow = b.data().data() + p * b.cols();
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.data().data() + i * c.cols();
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || a.tape() != b.tape()) throw Error(std::string(op) + ": tensors on different tapes");
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  Matrix c(a.rows(), b.cols());
  gemm_nn(c, a, b);
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---- Tensor / Tape -----------------------------------------------------------

std::size_t Tensor::rows() const { return tape_->value(id_).rows(); }
std::size_t Tensor::cols() const { return tape_->value(id_).cols(); }
const Matrix& Tensor::value() const { return tape_->value(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

const Matrix& Gradients::operator[](const Tensor& leaf) const {
  if (leaf.node_id() >= by_node_.size() || (by_node_[leaf.node_id()].empty() && leaf.value().size() != 0)) {
    throw Error("Gradients: tensor is not a requires_grad leaf of this tape");
  }
  return by_node_[leaf.node_id()];
}

Matrix Gradients::take(const Tensor& leaf) {
  (void)(*this)[leaf];
  return std::move(by_node_[leaf.node_id()]);
}

Tensor Tape::constant(Matrix value) {
  if (!value.all_finite()) throw NonFiniteError("constant contains NaN or Inf");
  nodes_.push_back(Node{std::move(value), false, true, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::variable(Matrix value) {
  if (!value.all_finite()) throw NonFiniteError("variable contains NaN or Inf");
  nodes_.push_back(Node{std::move(value), true, true, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Tensor>(parents.begin(), parents.size()), std::move(backward));
}

Tensor Tape::record(Matrix value, std::span<const Tensor> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NonFiniteError("op produced NaN or Inf");
  bool rg = false;
  for (const auto& p : parents) {
    if (p.tape() != this) throw Error("record: parent belongs to another tape");
    rg = rg || nodes_[p.node_id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), rg, false, rg ? std::move(backward) : BackwardFn{}});
  return Tensor(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty() && nodes_[id].value.size() != 0) g = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
  return g;
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw Error("backward: loss belongs to another tape");
  const Matrix& lv = value(loss.node_id());
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1, got " + shape_str(lv));
  grads_.assign(nodes_.size(), Matrix{});
  grad_buffer(loss.node_id())(0, 0) = 1.0;
  for (std::size_t i = loss.node_id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.leaf || grads_[i].empty() || !n.backward) continue;
    n.backward(*this, grads_[i]);
  }
  Gradients out;
  out.by_node_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].leaf && nodes_[i].requires_grad) {
      out.by_node_[i] = grads_[i].empty() ? Matrix(nodes_[i].value.rows(), nodes_[i].value.cols())
                                          : std::move(grads_[i]);
    }
  }
  grads_.clear();
  return out;
}

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  const auto ia = a.node_id(), ib = b.node_id();
  Matrix v = matmul(a.value(), b.value());
  return t.record(std::move(v), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) gemm_nt(tp.grad_buffer(ia), g, tp.value(ib));
    if (tp.requires_grad(ib)) gemm_tn(tp.grad_buffer(ib), tp.value(ia), g);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "matmul_nt");
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + shape_str(a.value()) + " * (" + shape_str(b.value()) + ")^T");
  Tape& t = *a.tape();
  const auto ia = a.node_id(), ib = b.node_id();
  Matrix v(a.rows(), b.rows());
  gemm_nt(v, a.value(), b.value());
  return t.record(std::move(v), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) gemm_nn(tp.grad_buffer(ia), g, tp.value(ib));
    if (tp.requires_grad(ib)) gemm_tn(tp.grad_buffer(ib), g, tp.value(ia));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "add");
  if (!a.value().same_shape(b.value())) throw ShapeError("add: shape mismatch");
  Matrix v = a.value();
  v += b.value();
  const auto ia = a.node_id(), ib = b.node_id();
  return a.tape()->record(std::move(v), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_buffer(ia) += g;
    if (tp.requires_grad(ib)) tp.grad_buffer(ib) += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b, "sub");
  if (!a.value().same_shape(b.value())) throw ShapeError("sub: shape mismatch");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] -= b.value().data()[i];
  const auto ia = a.node_id(), ib = b.node_id();
  return a.tape()->record(std::move(v), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_buffer(ia) += g;
    if (tp.requires_grad(ib)) {
      auto& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
  Matrix v = a.value();
  for (std::size_t r = 0; r < v.rows(); ++r) {
    for (std::size_t c = 0; c < v.cols(); ++c) v(r, c) += row.value()(0, c);
  }
  const auto ia = a.node_id(), ir = row.node_id();
  return a.tape()->record(std::move(v), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.grad_buffer(ia) += g;
    if (tp.requires_grad(ir)) {
      auto& gr = tp.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
      }
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Matrix v = a.value();
  v *= s;
  const auto ia = a.node_id();
  return a.tape()->record(std::move(v), {a}, [ia, s](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += s * g.data()[i];
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_same_tape(a, s, "mul_scalar");
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("mul_scalar: scale must be 1x1");
  const double sv = s.value()(0, 0);
  Matrix v = a.value();
  v *= sv;
  const auto ia = a.node_id(), is = s.node_id();
  return a.tape()->record(std::move(v), {a, s}, [ia, is](Tape& tp, const Matrix& g) {
    const double sv = tp.value(is)(0, 0);
    if (tp.requires_grad(ia)) {
      auto& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += sv * g.data()[i];
    }
    if (tp.requires_grad(is)) {
      const auto& av = tp.value(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * av.data()[i];
      tp.grad_buffer(is)(0, 0) += acc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  const auto ia = a.node_id();
  return a.tape()->record(transpose(a.value()), {a}, [ia](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    ids.push_back(p.node_id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix v(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pv.cols(); ++c) v(r, offsets[k] + c) = pv(r, c);
    }
  }
  return parts[0].tape()->record(std::move(v), parts, [ids, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      auto& gk = tp.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r) {
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
      }
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw ShapeError("slice_cols: range exceeds width");
  const auto& av = a.value();
  Matrix v(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) v(r, c) = av(r, begin + c);
  }
  const auto ia = a.node_id();
  return a.tape()->record(std::move(v), {a}, [ia, begin](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
    }
  });
}

Tensor mean_rows(const Tensor& a) {
  const auto& av = a.value();
  if (av.rows() == 0) throw ShapeError("mean_rows: no rows");
  Matrix v(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) v(0, c) += av(r, c);
  }
  const double inv = 1.0 / static_cast<double>(av.rows());
  v *= inv;
  const auto ia = a.node_id();
  return a.tape()->record(std::move(v), {a}, [ia, inv](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(0, c) * inv;
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const auto ia = a.node_id();
  return a.tape()->record(Matrix(1, 1, s), {a}, [ia](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    for (auto& x : ga.data()) x += g(0, 0);
  });
}

Tensor relu(const Tensor& a) {
  Matrix v = a.value();
  for (auto& x : v.data()) {
    if (x == 0.0) a.tape()->note_nonsmooth();
    x = x > 0.0 ? x : 0.0;
  }
  const auto ia = a.node_id();
  return a.tape()->record(std::move(v), {a}, [ia](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    const auto& av = tp.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    }
  });
}

Tensor exp(const Tensor& a) {
  Matrix v = a.value();
  for (auto& x : v.data()) x = std::exp(x);
  Tape& t = *a.tape();
  const auto ia = a.node_id();
  const std::size_t io = t.size();  // id the output node will receive
  return t.record(std::move(v), {a}, [ia, io](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    const auto& y = tp.value(io);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * y.data()[i];
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo > hi");
  Matrix v = a.value();
  for (auto& x : v.data()) {
    if (x == lo || x == hi) a.tape()->note_nonsmooth();
    x = std::clamp(x, lo, hi);
  }
  const auto ia = a.node_id();
  return a.tape()->record(std::move(v), {a}, [ia, lo, hi](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    const auto& av = tp.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = av.data()[i];
      if (x > lo && x < hi) ga.data()[i] += g.data()[i];
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  Matrix v = a.value();
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    if (row.empty()) continue;
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& x : row) {
      x = std::exp(x - m);
      z += x;
    }
    for (auto& x : row) x /= z;
  }
  Tape& t = *a.tape();
  const auto ia = a.node_id();
  const std::size_t io = t.size();
  return t.record(std::move(v), {a}, [ia, io](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    const auto& y = tp.value(io);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  const auto& av = a.value();
  const std::size_t n = av.cols();
  if (n == 0) throw ShapeError("layer_norm_rows: zero width");
  Matrix v(av.rows(), n);
  std::vector<double> inv_sd(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += av(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (av(r, c) - mean) * (av(r, c) - mean);
    var /= static_cast<double>(n);
    inv_sd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) v(r, c) = (av(r, c) - mean) * inv_sd[r];
  }
  Tape& t = *a.tape();
  const auto ia = a.node_id();
  const std::size_t io = t.size();
  return t.record(std::move(v), {a}, [ia, io, inv_sd = std::move(inv_sd)](Tape& tp, const Matrix& g) {
    auto& ga = tp.grad_buffer(ia);
    const auto& y = tp.value(io);
    const double inv_n = 1.0 / static_cast<double>(g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gm = 0.0, gy = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) {
        gm += g(r, c);
        gy += g(r, c) * y(r, c);
      }
      gm *= inv_n;
      gy *= inv_n;
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += inv_sd[r] * (g(r, c) - gm - y(r, c) * gy);
    }
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_tape(pred, target, "mse");
  if (!pred.value().same_shape(target.value())) throw ShapeError("mse: shape mismatch");
  const auto& p = pred.value();
  const auto& q = target.value();
  if (p.size() == 0) throw ShapeError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.data()[i] - q.data()[i];
    s += d * d;
  }
  const double n = static_cast<double>(p.size());
  const auto ip = pred.node_id(), it = target.node_id();
  return pred.tape()->record(Matrix(1, 1, s / n), {pred, target}, [ip, it, n](Tape& tp, const Matrix& g) {
    const auto& p = tp.value(ip);
    const auto& q = tp.value(it);
    const double k = 2.0 * g(0, 0) / n;
    if (tp.requires_grad(ip)) {
      auto& gp = tp.grad_buffer(ip);
      for (std::size_t i = 0; i < p.size(); ++i) gp.data()[i] += k * (p.data()[i] - q.data()[i]);
    }
    if (tp.requires_grad(it)) {
      auto& gt = tp.grad_buffer(it);
      for (std::size_t i = 0; i < p.size(); ++i) gt.data()[i] -= k * (p.data()[i] - q.data()[i]);
    }
  });
}

// ---- grad_check ---------------------------------------------------------------

namespace {

double eval_scalar(const ScalarFunction& f, const std::vector<Matrix>& point, bool* nonsmooth) {
  Tape t;
  std::vector<Tensor> in;
  in.reserve(point.size());
  for (const auto& m : point) in.push_back(t.constant(m));
  const Tensor out = f(t, in);
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check: function must return 1x1");
  if (nonsmooth != nullptr) *nonsmooth = *nonsmooth || t.hit_nonsmooth();
  return out.value()(0, 0);
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Matrix>& point, double eps) {
  GradCheckResult res;
  Tape t;
  std::vector<Tensor> in;
  in.reserve(point.size());
  for (const auto& m : point) in.push_back(t.variable(m));
  const Tensor out = f(t, in);
  if (t.hit_nonsmooth()) {
    res.skipped = true;
    return res;
  }
  const Gradients grads = t.backward(out);

  bool kink = false;
  std::vector<Matrix> probe = point;
  for (std::size_t k = 0; k < point.size(); ++k) {
    const Matrix& analytic = grads[in[k]];
    for (std::size_t i = 0; i < point[k].size(); ++i) {
      const double x0 = point[k].data()[i];
      probe[k].data()[i] = x0 + eps;
      const double fp = eval_scalar(f, probe, &kink);
      probe[k].data()[i] = x0 - eps;
      const double fm = eval_scalar(f, probe, &kink);
      probe[k].data()[i] = x0;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double an = analytic.data()[i];
      res.max_rel_error = std::max(res.max_rel_error, std::abs(an - numeric) / std::max(1.0, std::abs(an)));
    }
  }
  if (kink) {
    res.skipped = true;
    res.max_rel_error = 0.0;
  }
  return res;
}

}  // namespace dispa::ad
