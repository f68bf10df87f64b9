#include "dsdpg/tape.hpp"

#include <cmath>
#include <cstring>

#include "dsdpg/simd.hpp"

namespace dsdpg::ad {

namespace {

// sigmoid through exp(-|x|) so the exponential never overflows
void sigmoid_fill(double* out, const double* x, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = -std::fabs(x[i]);
  simd::vexp(t.data(), t.data(), n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] >= 0.0 ? 1.0 / (1.0 + t[i]) : t[i] / (1.0 + t[i]);
}

double huber_val(double x, double d) {
  const double ax = std::fabs(x);
  return ax <= d ? 0.5 * x * x : d * (ax - 0.5 * d);
}

}  // namespace

void Tape::finite_or_throw(const Tensor& t, const char* where) const {
  if (!check_finite_) return;
  const double* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(p[i]))
      throw TapeError(std::string("non-finite value in ") + where);
}

void Tape::check_shape(int a, int b) const {
  if (!nodes_[a].val.same_shape(nodes_[b].val))
    throw TapeError("shape mismatch between operands");
}

int Tape::push(Op op, Tensor v, std::int32_t a, std::int32_t b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.val = std::move(v);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

void Tape::rollback(std::size_t mark) {
  if (mark > nodes_.size()) throw TapeError("rollback past end");
  while (nodes_.size() > mark) nodes_.pop_back();
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  const std::size_t m = trans_a ? A.cols() : A.rows();
  const std::size_t k = trans_a ? A.rows() : A.cols();
  const std::size_t kb = trans_b ? B.cols() : B.rows();
  const std::size_t n = trans_b ? B.rows() : B.cols();
  if (k != kb) throw TapeError("matmul: inner dimensions disagree");
  Tensor C(m, n);
  simd::matmul(C.data(), A.data(), B.data(), m, k, n, trans_a, trans_b);
  finite_or_throw(C, "matmul");
  int id = push(Op::MatMul, std::move(C), a, b);
  nodes_[id].ta = trans_a;
  nodes_[id].tb = trans_b;
  return id;
}

int Tape::add(int a, int b) {
  check(a);
  check(b);
  check_shape(a, b);
  Tensor r = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += B[i];
  finite_or_throw(r, "add");
  return push(Op::Add, std::move(r), a, b);
}

int Tape::sub(int a, int b) {
  check(a);
  check(b);
  check_shape(a, b);
  Tensor r = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= B[i];
  finite_or_throw(r, "sub");
  return push(Op::Sub, std::move(r), a, b);
}

int Tape::mul(int a, int b) {
  check(a);
  check(b);
  check_shape(a, b);
  Tensor r = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= B[i];
  finite_or_throw(r, "mul");
  return push(Op::Mul, std::move(r), a, b);
}

int Tape::divide(int a, int b) {
  check(a);
  check(b);
  check_shape(a, b);
  Tensor r = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] /= B[i];
  finite_or_throw(r, "div");
  return push(Op::Div, std::move(r), a, b);
}

int Tape::scale(int a, double c) {
  check(a);
  Tensor r = nodes_[a].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= c;
  finite_or_throw(r, "scale");
  int id = push(Op::Scale, std::move(r), a);
  nodes_[id].x0 = c;
  return id;
}

int Tape::add_scalar(int a, double c) {
  check(a);
  Tensor r = nodes_[a].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += c;
  finite_or_throw(r, "add_scalar");
  int id = push(Op::AddScalar, std::move(r), a);
  nodes_[id].x0 = c;
  return id;
}

int Tape::swish(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(X.rows(), X.cols());
  sigmoid_fill(r.data(), X.data(), X.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= X[i];
  finite_or_throw(r, "swish");
  return push(Op::Swish, std::move(r), a);
}

int Tape::tanh(int a) {
  check(a);
  Tensor r = nodes_[a].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::tanh(r[i]);
  finite_or_throw(r, "tanh");
  return push(Op::Tanh, std::move(r), a);
}

int Tape::sigmoid(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(X.rows(), X.cols());
  sigmoid_fill(r.data(), X.data(), X.size());
  finite_or_throw(r, "sigmoid");
  return push(Op::Sigmoid, std::move(r), a);
}

int Tape::exp(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(X.rows(), X.cols());
  simd::vexp(r.data(), X.data(), X.size());
  finite_or_throw(r, "exp");
  return push(Op::Exp, std::move(r), a);
}

int Tape::sqrt(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(X.rows(), X.cols());
  simd::vsqrt(r.data(), X.data(), X.size());
  finite_or_throw(r, "sqrt");
  return push(Op::Sqrt, std::move(r), a);
}

int Tape::clamp(int a, double lo, double hi) {
  check(a);
  Tensor r = nodes_[a].val;
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = r[i] < lo ? lo : (r[i] > hi ? hi : r[i]);
  int id = push(Op::Clamp, std::move(r), a);
  nodes_[id].x0 = lo;
  nodes_[id].x1 = hi;
  return id;
}

int Tape::huber(int a, double delta) {
  check(a);
  Tensor r = nodes_[a].val;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = huber_val(r[i], delta);
  finite_or_throw(r, "huber");
  int id = push(Op::Huber, std::move(r), a);
  nodes_[id].x0 = delta;
  return id;
}

int Tape::sum_all(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
  finite_or_throw(Tensor::scalar(s), "sum_all");
  return push(Op::SumAll, Tensor::scalar(s), a);
}

int Tape::row_sum(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(X.rows(), 1);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) s += X(i, j);
    r(i, 0) = s;
  }
  finite_or_throw(r, "row_sum");
  return push(Op::RowSum, std::move(r), a);
}

int Tape::col_sum(int a) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(1, X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) r(0, j) += X(i, j);
  finite_or_throw(r, "col_sum");
  return push(Op::ColSum, std::move(r), a);
}

int Tape::broadcast_rows(int a, std::size_t m) {
  check(a);
  const Tensor& X = nodes_[a].val;
  if (X.rows() != 1) throw TapeError("broadcast_rows expects a row vector");
  Tensor r(m, X.cols());
  for (std::size_t i = 0; i < m; ++i)
    std::memcpy(r.data() + i * X.cols(), X.data(), X.cols() * sizeof(double));
  int id = push(Op::BroadcastRows, std::move(r), a);
  nodes_[id].i0 = static_cast<std::int32_t>(m);
  return id;
}

int Tape::broadcast_cols(int a, std::size_t n) {
  check(a);
  const Tensor& X = nodes_[a].val;
  if (X.cols() != 1) throw TapeError("broadcast_cols expects a column vector");
  Tensor r(X.rows(), n);
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) r(i, j) = X(i, 0);
  int id = push(Op::BroadcastCols, std::move(r), a);
  nodes_[id].i0 = static_cast<std::int32_t>(n);
  return id;
}

int Tape::broadcast_scalar(int a, std::size_t m, std::size_t n) {
  check(a);
  const Tensor& X = nodes_[a].val;
  if (X.size() != 1) throw TapeError("broadcast_scalar expects a scalar");
  Tensor r(m, n, X[0]);
  int id = push(Op::BroadcastScalar, std::move(r), a);
  nodes_[id].i0 = static_cast<std::int32_t>(m);
  nodes_[id].i1 = static_cast<std::int32_t>(n);
  return id;
}

int Tape::concat_cols(int a, int b) {
  check(a);
  check(b);
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  if (A.rows() != B.rows()) throw TapeError("concat_cols: row counts disagree");
  Tensor r(A.rows(), A.cols() + B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    std::memcpy(r.data() + i * r.cols(), A.data() + i * A.cols(),
                A.cols() * sizeof(double));
    std::memcpy(r.data() + i * r.cols() + A.cols(), B.data() + i * B.cols(),
                B.cols() * sizeof(double));
  }
  return push(Op::ConcatCols, std::move(r), a, b);
}

int Tape::slice_cols(int a, std::size_t j0, std::size_t j1) {
  check(a);
  const Tensor& X = nodes_[a].val;
  if (j0 > j1 || j1 > X.cols()) throw TapeError("slice_cols: bad range");
  Tensor r(X.rows(), j1 - j0);
  for (std::size_t i = 0; i < X.rows(); ++i)
    std::memcpy(r.data() + i * r.cols(), X.data() + i * X.cols() + j0,
                r.cols() * sizeof(double));
  int id = push(Op::SliceCols, std::move(r), a);
  nodes_[id].i0 = static_cast<std::int32_t>(j0);
  nodes_[id].i1 = static_cast<std::int32_t>(j1);
  return id;
}

int Tape::repeat_rows(int a, std::size_t times) {
  check(a);
  const Tensor& X = nodes_[a].val;
  Tensor r(X.rows() * times, X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t t = 0; t < times; ++t)
      std::memcpy(r.data() + (i * times + t) * X.cols(), X.data() + i * X.cols(),
                  X.cols() * sizeof(double));
  int id = push(Op::RepeatRows, std::move(r), a);
  nodes_[id].i0 = static_cast<std::int32_t>(times);
  return id;
}

int Tape::fold_rows_sum(int a, std::size_t group) {
  check(a);
  const Tensor& X = nodes_[a].val;
  if (group == 0 || X.rows() % group != 0)
    throw TapeError("fold_rows_sum: rows not divisible by group");
  Tensor r(X.rows() / group, X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) r(i / group, j) += X(i, j);
  finite_or_throw(r, "fold_rows_sum");
  int id = push(Op::FoldRowsSum, std::move(r), a);
  nodes_[id].i0 = static_cast<std::int32_t>(group);
  return id;
}

int Tape::custom(std::shared_ptr<const CustomOp> op, std::vector<int> inputs) {
  if (inputs.empty() || inputs.size() > 3)
    throw TapeError("custom op supports 1..3 inputs");
  std::vector<const Tensor*> in;
  for (int i : inputs) in.push_back(&nodes_[check(i)].val);
  Tensor r = op->forward(in);
  finite_or_throw(r, op->name());
  int id = push(Op::Custom, std::move(r), inputs[0],
                inputs.size() > 1 ? inputs[1] : -1);
  if (inputs.size() > 2) nodes_[id].c = inputs[2];
  nodes_[id].custom = std::move(op);
  return id;
}

void Tape::accumulate(std::vector<int>& gmap, int parent, int grad) {
  if (parent < 0 || grad < 0) return;
  if (nodes_[parent].op == Op::Const) return;  // constants need no gradient
  if (static_cast<std::size_t>(parent) >= gmap.size()) return;
  gmap[parent] = gmap[parent] < 0 ? grad : add(gmap[parent], grad);
}

std::vector<int> Tape::vjp_of(int id, int g) {
  // copy what we need: emissions below may reallocate nodes_
  const Op op = nodes_[id].op;
  const int a = nodes_[id].a, b = nodes_[id].b, c = nodes_[id].c;
  const bool ta = nodes_[id].ta, tb = nodes_[id].tb;
  const std::int32_t i0 = nodes_[id].i0, i1 = nodes_[id].i1;
  const double x0 = nodes_[id].x0, x1 = nodes_[id].x1;
  const std::size_t rows = nodes_[id].val.rows(), cols = nodes_[id].val.cols();
  const auto custom_op = nodes_[id].custom;

  switch (op) {
    case Op::Leaf:
    case Op::Const:
      return {};
    case Op::MatMul: {
      int da = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
      int db = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
      return {da, db};
    }
    case Op::Add:
      return {g, g};
    case Op::Sub:
      return {g, scale(g, -1.0)};
    case Op::Mul:
      return {mul(g, b), mul(g, a)};
    case Op::Div: {
      int da = divide(g, b);
      int db = scale(mul(da, id), -1.0);  // -g * (a/b) / b
      return {da, db};
    }
    case Op::Scale:
      return {scale(g, x0)};
    case Op::AddScalar:
      return {g};
    case Op::Swish: {
      // d/dx (x sigmoid(x)) = s + y - y*s with s = sigmoid(x), y = swish(x)
      int s = sigmoid(a);
      int dydx = sub(add(s, id), mul(id, s));
      return {mul(g, dydx)};
    }
    case Op::Tanh: {
      int dydx = add_scalar(scale(mul(id, id), -1.0), 1.0);
      return {mul(g, dydx)};
    }
    case Op::Sigmoid: {
      int dydx = sub(id, mul(id, id));
      return {mul(g, dydx)};
    }
    case Op::Exp:
      return {mul(g, id)};
    case Op::Sqrt:
      return {scale(divide(g, id), 0.5)};
    case Op::Clamp: {
      // mask is constant on this tape: values never change after emission
      const Tensor& X = nodes_[a].val;
      Tensor m(X.rows(), X.cols());
      for (std::size_t i = 0; i < X.size(); ++i)
        m[i] = (X[i] > x0 && X[i] < x1) ? 1.0 : 0.0;
      return {mul(g, constant(std::move(m)))};
    }
    case Op::Huber:
      return {mul(g, clamp(a, -x0, x0))};
    case Op::SumAll: {
      const Tensor& X = nodes_[a].val;
      return {broadcast_scalar(g, X.rows(), X.cols())};
    }
    case Op::RowSum:
      return {broadcast_cols(g, nodes_[a].val.cols())};
    case Op::ColSum:
      return {broadcast_rows(g, nodes_[a].val.rows())};
    case Op::BroadcastRows:
      return {col_sum(g)};
    case Op::BroadcastCols:
      return {row_sum(g)};
    case Op::BroadcastScalar:
      return {sum_all(g)};
    case Op::ConcatCols: {
      const std::size_t p = nodes_[a].val.cols();
      return {slice_cols(g, 0, p), slice_cols(g, p, cols)};
    }
    case Op::SliceCols: {
      const Tensor& X = nodes_[a].val;
      int out = g;
      if (i0 > 0) out = concat_cols(constant(Tensor(rows, i0)), out);
      if (static_cast<std::size_t>(i1) < X.cols())
        out = concat_cols(out, constant(Tensor(rows, X.cols() - i1)));
      return {out};
    }
    case Op::RepeatRows:
      return {fold_rows_sum(g, static_cast<std::size_t>(i0))};
    case Op::FoldRowsSum:
      return {repeat_rows(g, static_cast<std::size_t>(i0))};
    case Op::Custom: {
      std::vector<int> inputs{a};
      if (b >= 0) inputs.push_back(b);
      if (c >= 0) inputs.push_back(c);
      return custom_op->vjp(*this, g, inputs, id);
    }
  }
  throw TapeError("vjp: unhandled op");
}

std::vector<int> Tape::gradients(int out, const std::vector<int>& wrt) {
  check(out);
  std::vector<int> gmap(static_cast<std::size_t>(out) + 1, -1);
  gmap[out] = constant(Tensor(nodes_[out].val.rows(), nodes_[out].val.cols(), 1.0));
  for (int id = out; id >= 0; --id) {
    const int g = gmap[id];
    if (g < 0) continue;
    const Op op = nodes_[id].op;
    if (op == Op::Leaf || op == Op::Const) continue;
    const int a = nodes_[id].a, b = nodes_[id].b, c = nodes_[id].c;
    std::vector<int> pg = vjp_of(id, g);
    if (!pg.empty()) accumulate(gmap, a, pg[0]);
    if (pg.size() > 1) accumulate(gmap, b, pg[1]);
    if (pg.size() > 2) accumulate(gmap, c, pg[2]);
  }
  std::vector<int> res;
  res.reserve(wrt.size());
  for (int w : wrt) {
    check(w);
    if (static_cast<std::size_t>(w) < gmap.size() && gmap[w] >= 0) {
      res.push_back(gmap[w]);
    } else {
      res.push_back(constant(Tensor(nodes_[w].val.rows(), nodes_[w].val.cols())));
    }
  }
  for (int r : res) finite_or_throw(nodes_[r].val, "reverse sweep");
  return res;
}

int input_gradient(Tape& t, int out, int input) {
  if (t.val(out).size() != 1)
    throw TapeError("input_gradient: output must be scalar");
  return t.gradients(out, {input})[0];
}

double finite_diff_error(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double eps, const Tensor& grad) {
  if (eps <= 0.0) throw std::invalid_argument("finite_diff: eps must be > 0");
  if (!x.same_shape(grad)) throw std::invalid_argument("finite_diff: shape mismatch");
  double worst = 0.0;
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + eps;
    const double fp = f(xp);
    xp[i] = xi - eps;
    const double fm = f(xp);
    xp[i] = xi;
    const double cd = (fp - fm) / (2.0 * eps);
    const double err = std::fabs(cd - grad[i]) / (std::fabs(grad[i]) + 1e-12);
    if (err > worst) worst = err;
  }
  return worst;
}

double finite_diff_check(const std::function<int(Tape&, int)>& build,
                         const Tensor& x, double eps) {
  Tape t;
  int leaf = t.leaf(x);
  int out = build(t, leaf);
  if (t.val(out).size() != 1)
    throw TapeError("finite_diff_check: build must produce a scalar");
  Tensor grad = t.val(t.gradients(out, {leaf})[0]);
  auto f = [&build](const Tensor& xv) {
    Tape s;
    return s.val(build(s, s.leaf(xv))).item();
  };
  return finite_diff_error(f, x, eps, grad);
}

}  // namespace dsdpg::ad
