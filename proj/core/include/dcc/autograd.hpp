#pragma once

// Minimal reverse-mode automatic differentiation over row-major float
// matrices. Every op records its parents and a closure that pushes the
// node's gradient back into them; nodes that do not depend on any
// trainable leaf carry no closure, so inference builds no graph.

#include "dcc/types.hpp"

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace dcc::ag {

using Matrix = MatrixF;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

  void zero_grad();
  /// Drops the recorded history so this becomes a leaf holding the same value.
  Var detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Seeds d(loss)/d(output) for every pair and back-propagates once through
/// the union of their graphs. Leaves accumulate into `grad`.
void backward(std::span<const std::pair<Var, Matrix>> seeds);
/// Scalar convenience: `out` must be 1x1; seeds 1.
void backward(const Var& out);

Var matmul(const Var& a, const Var& b);
/// x (n, in) * w (in, out) + b (1, out)
Var linear(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, float s);
/// x (groups * n, d) + table (n, d) tiled over groups.
Var add_tiled(const Var& x, const Var& table);
Var relu(const Var& x);
Var gelu(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
/// Scaled dot-product self-attention inside each contiguous block of
/// `n_tokens` rows; q, k, v are (groups * n_tokens, d) and d % n_heads == 0.
Var attention(const Var& q, const Var& k, const Var& v, int n_tokens, int n_heads);
/// (groups * n_tokens, d) -> (groups, d) by averaging each block.
Var mean_pool(const Var& x, int n_tokens);
Var mean_of(std::span<const Var> xs);
Var concat_rows(std::span<const Var> xs);
Var concat_cols(std::span<const Var> xs);
Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count);
/// Mean softmax cross-entropy over rows; returns a 1x1 node.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace dcc::ag
