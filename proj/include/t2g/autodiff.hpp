#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace t2g::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode differentiation over dense matrices. Nodes are recorded in
// evaluation order; backward() walks them in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  // Values that never receive gradients.
  Var constant(Matrix value);
  // Values whose gradient is wanted.
  Var leaf(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  // Zero matrix when nothing flowed into v.
  Matrix grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
  void backward(Var loss);

  // Records an operation; `fn` receives the output gradient and must call
  // accumulate() for each parent that needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward fn);
  void accumulate(Var v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
// Same shapes, or b a single row broadcast over the rows of a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var silu(Var a);
Var concat_cols(Var a, Var b);
// Columns [begin, begin + count).
Var slice_cols(Var a, int begin, int count);
// Row-wise max over consecutive equal blocks of rows: (B*n) x C -> B x C.
// Ties route the gradient to the first maximal row.
Var block_max(Var a, int blocks);
// Each row repeated n times consecutively: B x C -> (B*n) x C.
Var repeat_rows(Var a, int n);
// Mean over ragged row ranges [offsets[i], offsets[i+1]).
Var segment_mean(Var a, const std::vector<int>& offsets);
// Rows of `table` picked by index.
Var gather_rows(Var table, const std::vector<int>& index);
// Multi-head scaled dot-product attention of B query rows over `tokens`
// key/value rows each: q is B x d, k and v are (B*tokens) x d.
Var attention(Var q, Var k, Var v, int heads, int tokens);
// sum over all entries of (a - target)^2, divided by the row count.
Var squared_error(Var a, Var target);
// Mean binary cross-entropy of logits against {0,1} targets.
Var bce_with_logits(Var logits, const Matrix& targets);
Var sum(Var a);

}  // namespace t2g::ad
