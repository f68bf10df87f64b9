#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsdpg/tensor.hpp"

namespace dsdpg::ad {

class TapeError : public std::runtime_error {
 public:
  explicit TapeError(const std::string& m) : std::runtime_error(m) {}
};

enum class Op : std::uint8_t {
  Leaf,
  Const,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Scale,      // x0 * a
  AddScalar,  // a + x0
  Swish,
  Tanh,
  Sigmoid,
  Exp,
  Sqrt,
  Clamp,  // [x0, x1]
  Huber,  // delta = x0, elementwise
  SumAll,
  RowSum,
  ColSum,
  BroadcastRows,    // [1,n] -> [i0,n]
  BroadcastCols,    // [m,1] -> [m,i0]
  BroadcastScalar,  // [1,1] -> [i0,i1]
  ConcatCols,
  SliceCols,     // cols [i0, i1)
  RepeatRows,    // row i -> rows i*t .. i*t+t-1, t = i0
  FoldRowsSum,   // inverse of RepeatRows: sum groups of t = i0 rows
  Custom,
};

class Tape;

// Extension point for ops whose pullback is cheaper hand-coded than composed
// from primitives (the blockwise MMD lives here). vjp() emits gradient nodes;
// returning -1 for an input means "no gradient".
struct CustomOp {
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  virtual Tensor forward(const std::vector<const Tensor*>& in) const = 0;
  virtual std::vector<int> vjp(Tape& t, int grad, const std::vector<int>& inputs,
                               int out) const = 0;
};

struct Node {
  Op op = Op::Const;
  std::int32_t a = -1, b = -1, c = -1;  // parents
  bool ta = false, tb = false;          // matmul transpose flags
  std::int32_t i0 = 0, i1 = 0;
  double x0 = 0.0, x1 = 0.0;
  Tensor val;
  std::shared_ptr<const CustomOp> custom;
};

// Reverse-mode tape over matrix-valued nodes. Values are computed eagerly at
// emission. gradients() emits the pullback as new nodes, so a gradient is
// itself differentiable (double backpropagation); callers that only need
// numbers copy the results out and rollback() the emitted region.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  int leaf(Tensor v) { return push(Op::Leaf, std::move(v)); }
  int constant(Tensor v) { return push(Op::Const, std::move(v)); }
  int constant_scalar(double x) { return push(Op::Const, Tensor::scalar(x)); }

  const Tensor& val(int id) const { return nodes_[check(id)].val; }
  Op op_of(int id) const { return nodes_[check(id)].op; }
  std::size_t size() const { return nodes_.size(); }
  void rollback(std::size_t mark);

  int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int divide(int a, int b);
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int swish(int a);
  int tanh(int a);
  int sigmoid(int a);
  int exp(int a);
  int sqrt(int a);
  int clamp(int a, double lo, double hi);
  int huber(int a, double delta);
  int sum_all(int a);
  int row_sum(int a);
  int col_sum(int a);
  int broadcast_rows(int a, std::size_t m);
  int broadcast_cols(int a, std::size_t n);
  int broadcast_scalar(int a, std::size_t m, std::size_t n);
  int concat_cols(int a, int b);
  int slice_cols(int a, std::size_t j0, std::size_t j1);
  int repeat_rows(int a, std::size_t times);
  int fold_rows_sum(int a, std::size_t group);
  int custom(std::shared_ptr<const CustomOp> op, std::vector<int> inputs);

  // Pullback from `out` seeded with ones. Returns one gradient node per wrt
  // entry (a zero tensor when out does not depend on it). `out` is normally
  // scalar; for a matrix output the seed is elementwise ones, which for
  // row-independent batched graphs yields per-row gradients.
  std::vector<int> gradients(int out, const std::vector<int>& wrt);

 private:
  int push(Op op, Tensor v, std::int32_t a = -1, std::int32_t b = -1);
  int check(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw TapeError("Tape: node id out of range");
    return id;
  }
  void check_shape(int a, int b) const;
  void finite_or_throw(const Tensor& t, const char* where) const;
  void accumulate(std::vector<int>& gmap, int parent, int grad);
  std::vector<int> vjp_of(int id, int grad);

  std::deque<Node> nodes_;  // deque: node references stay valid across emission
  bool check_finite_ = true;
};

// ∂out/∂input as new tape nodes (the spec's input_gradient). `out` must be a
// scalar node reachable from `input`.
int input_gradient(Tape& t, int out, int input);

// max_i |central_diff_i - grad_i| / (|grad_i| + 1e-12) for a scalar f at x.
double finite_diff_error(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double eps, const Tensor& grad);

// Convenience wrapper: builds f on a tape, takes the AD gradient and compares
// it against central differences.
double finite_diff_check(const std::function<int(Tape&, int)>& build,
                         const Tensor& x, double eps);

}  // namespace dsdpg::ad
