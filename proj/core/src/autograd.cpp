#include "dcc/autograd.hpp"

#include "dcc/errors.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace dcc::ag {

namespace {

constexpr float kInvSqrt2 = 0.70710678118654752440f;
constexpr float kInvSqrt2Pi = 0.39894228040143267794f;

bool any_requires_grad(std::span<const Var> xs) {
  for (const auto& x : xs) {
    if (x.requires_grad()) return true;
  }
  return false;
}

Var make_result(Matrix value, std::span<const Var> parents, std::function<void(Node&)> fn) {
  Var out(std::move(value), false);
  if (any_requires_grad(parents)) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (const auto& p : parents) node.parents.push_back(p.node());
    node.backward = std::move(fn);
  }
  return out;
}

void require(bool cond, const char* op, const std::string& detail) {
  if (!cond) throw ShapeError(std::string(op) + ": " + detail);
}

std::string dims(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + ")";
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Var Var::detach() const { return Var(node_->value, false); }

void backward(std::span<const std::pair<Var, Matrix>> seeds) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;

  for (const auto& [var, seed] : seeds) {
    Node* root = var.node().get();
    if (!root || !root->requires_grad) continue;
    if (seed.rows() != root->value.rows() || seed.cols() != root->value.cols()) {
      throw ShapeError("backward: seed " + dims(seed) + " vs value " + dims(root->value));
    }
    if (visited.insert(root).second) stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* parent = node->parents[next++].get();
        if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  for (const auto& [var, seed] : seeds) {
    Node* root = var.node().get();
    if (root && root->requires_grad) root->accumulate(seed);
  }

  // `order` is post-order (parents before children); walk it backwards.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) {
      node->backward(*node);
      // Interior gradients are not needed after propagation.
      if (!node->parents.empty()) node->grad.resize(0, 0);
    }
  }
}

void backward(const Var& out) {
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward: output is not a scalar");
  std::pair<Var, Matrix> seed{out, Matrix::Ones(1, 1)};
  backward(std::span<const std::pair<Var, Matrix>>(&seed, 1));
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul", dims(a.value()) + " x " + dims(b.value()));
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  Var ps[] = {a, b};
  return make_result(std::move(out), ps, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x.cols() == w.rows(), "linear", dims(x.value()) + " x " + dims(w.value()));
  require(b.rows() == 1 && b.cols() == w.cols(), "linear", "bias " + dims(b.value()));
  Matrix out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  Var ps[] = {x, w, b};
  return make_result(std::move(out), ps, [](Node& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    auto& pb = *n.parents[2];
    if (px.requires_grad) {
      Matrix gx(n.grad.rows(), pw.value.rows());
      gx.noalias() = n.grad * pw.value.transpose();
      px.accumulate(gx);
    }
    if (pw.requires_grad) {
      Matrix gw(pw.value.rows(), pw.value.cols());
      gw.noalias() = px.value.transpose() * n.grad;
      pw.accumulate(gw);
    }
    if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", dims(a.value()) + " + " + dims(b.value()));
  Var ps[] = {a, b};
  return make_result(a.value() + b.value(), ps, [](Node& n) {
    for (auto& p : n.parents) {
      if (p->requires_grad) p->accumulate(n.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", dims(a.value()) + " - " + dims(b.value()));
  Var ps[] = {a, b};
  return make_result(a.value() - b.value(), ps, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-n.grad);
  });
}

Var scale(const Var& a, float s) {
  Var ps[] = {a};
  return make_result(a.value() * s, ps, [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

Var add_tiled(const Var& x, const Var& table) {
  const auto n = table.rows();
  require(x.cols() == table.cols() && n > 0 && x.rows() % n == 0, "add_tiled",
          dims(x.value()) + " with table " + dims(table.value()));
  Matrix out = x.value();
  const auto groups = x.rows() / n;
  for (Eigen::Index g = 0; g < groups; ++g) out.middleRows(g * n, n) += table.value();
  Var ps[] = {x, table};
  return make_result(std::move(out), ps, [n, groups](Node& node) {
    auto& px = *node.parents[0];
    auto& pt = *node.parents[1];
    if (px.requires_grad) px.accumulate(node.grad);
    if (pt.requires_grad) {
      Matrix gt = Matrix::Zero(n, node.grad.cols());
      for (Eigen::Index g = 0; g < groups; ++g) gt += node.grad.middleRows(g * n, n);
      pt.accumulate(gt);
    }
  });
}

Var relu(const Var& x) {
  Var ps[] = {x};
  return make_result(x.value().cwiseMax(0.0f), ps, [](Node& n) {
    auto& p = *n.parents[0];
    p.accumulate((p.value.array() > 0.0f).select(n.grad, 0.0f));
  });
}

Var gelu(const Var& x) {
  Matrix out = x.value().unaryExpr([](float v) { return 0.5f * v * (1.0f + std::erf(v * kInvSqrt2)); });
  Var ps[] = {x};
  return make_result(std::move(out), ps, [](Node& n) {
    auto& p = *n.parents[0];
    Matrix d = p.value.unaryExpr([](float v) {
      return 0.5f * (1.0f + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5f * v * v);
    });
    p.accumulate(n.grad.cwiseProduct(d));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
  const auto d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm",
          "affine params must be (1," + std::to_string(d) + ")");
  Matrix xhat(x.rows(), d);
  Eigen::VectorXf inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.value().row(r);
    const float mu = row.mean();
    const float var = (row.array() - mu).square().mean();
    inv_std[r] = 1.0f / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mu) * inv_std[r];
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  Var ps[] = {x, gamma, beta};
  return make_result(std::move(out), ps, [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    auto& pb = *n.parents[2];
    if (pg.requires_grad) pg.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
    if (px.requires_grad) {
      Matrix dxhat = n.grad.array().rowwise() * pg.value.row(0).array();
      Matrix gx(dxhat.rows(), dxhat.cols());
      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
        const float m1 = dxhat.row(r).mean();
        const float m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        gx.row(r) = inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
      px.accumulate(gx);
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int n_tokens, int n_heads) {
  const auto d = q.cols();
  require(k.rows() == q.rows() && v.rows() == q.rows() && k.cols() == d && v.cols() == d, "attention",
          "q/k/v shapes differ");
  require(n_tokens > 0 && q.rows() % n_tokens == 0, "attention", "rows not a multiple of n_tokens");
  require(n_heads > 0 && d % n_heads == 0, "attention", "width not divisible by heads");
  const Eigen::Index groups = q.rows() / n_tokens;
  const Eigen::Index dh = d / n_heads;
  const float s = 1.0f / std::sqrt(static_cast<float>(dh));

  // probs[(g * n_heads + h)] is the (n, n) attention matrix.
  std::vector<Matrix> probs(static_cast<std::size_t>(groups * n_heads));
  Matrix out(q.rows(), d);
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (int h = 0; h < n_heads; ++h) {
      const auto qg = q.value().block(g * n_tokens, h * dh, n_tokens, dh);
      const auto kg = k.value().block(g * n_tokens, h * dh, n_tokens, dh);
      const auto vg = v.value().block(g * n_tokens, h * dh, n_tokens, dh);
      Matrix sc(n_tokens, n_tokens);
      sc.noalias() = qg * kg.transpose();
      sc *= s;
      for (Eigen::Index r = 0; r < n_tokens; ++r) {
        const float mx = sc.row(r).maxCoeff();
        sc.row(r) = (sc.row(r).array() - mx).exp();
        sc.row(r) /= sc.row(r).sum();
      }
      out.block(g * n_tokens, h * dh, n_tokens, dh).noalias() = sc * vg;
      probs[static_cast<std::size_t>(g * n_heads + h)] = std::move(sc);
    }
  }
  Var ps[] = {q, k, v};
  return make_result(std::move(out), ps,
                     [probs = std::move(probs), n_tokens, n_heads, groups, dh, s](Node& n) {
                       auto& pq = *n.parents[0];
                       auto& pk = *n.parents[1];
                       auto& pv = *n.parents[2];
                       Matrix gq = Matrix::Zero(pq.value.rows(), pq.value.cols());
                       Matrix gk = Matrix::Zero(gq.rows(), gq.cols());
                       Matrix gv = Matrix::Zero(gq.rows(), gq.cols());
                       for (Eigen::Index g = 0; g < groups; ++g) {
                         for (int h = 0; h < n_heads; ++h) {
                           const Matrix& p = probs[static_cast<std::size_t>(g * n_heads + h)];
                           const auto rows = Eigen::seqN(g * n_tokens, n_tokens);
                           const auto cols = Eigen::seqN(h * dh, dh);
                           const Matrix dout = n.grad(rows, cols);
                           gv(rows, cols).noalias() += p.transpose() * dout;
                           Matrix dp(n_tokens, n_tokens);
                           dp.noalias() = dout * pv.value(rows, cols).transpose();
                           const Eigen::VectorXf rowdot = dp.cwiseProduct(p).rowwise().sum();
                           Matrix ds = p.cwiseProduct(dp.colwise() - rowdot);
                           ds *= s;
                           gq(rows, cols).noalias() += ds * pk.value(rows, cols);
                           gk(rows, cols).noalias() += ds.transpose() * pq.value(rows, cols);
                         }
                       }
                       if (pq.requires_grad) pq.accumulate(gq);
                       if (pk.requires_grad) pk.accumulate(gk);
                       if (pv.requires_grad) pv.accumulate(gv);
                     });
}

Var mean_pool(const Var& x, int n_tokens) {
  require(n_tokens > 0 && x.rows() % n_tokens == 0, "mean_pool", "rows not a multiple of n_tokens");
  const Eigen::Index groups = x.rows() / n_tokens;
  Matrix out(groups, x.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    out.row(g) = x.value().middleRows(g * n_tokens, n_tokens).colwise().mean();
  }
  Var ps[] = {x};
  return make_result(std::move(out), ps, [n_tokens, groups](Node& n) {
    auto& p = *n.parents[0];
    Matrix g(p.value.rows(), p.value.cols());
    const float inv = 1.0f / static_cast<float>(n_tokens);
    for (Eigen::Index i = 0; i < groups; ++i) {
      g.middleRows(i * n_tokens, n_tokens).rowwise() = n.grad.row(i) * inv;
    }
    p.accumulate(g);
  });
}

Var mean_of(std::span<const Var> xs) {
  require(!xs.empty(), "mean_of", "empty list");
  Matrix out = xs[0].value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require(xs[i].rows() == out.rows() && xs[i].cols() == out.cols(), "mean_of",
            dims(xs[i].value()) + " vs " + dims(out));
    out += xs[i].value();
  }
  const float inv = 1.0f / static_cast<float>(xs.size());
  out *= inv;
  return make_result(std::move(out), xs, [inv](Node& n) {
    const Matrix g = n.grad * inv;
    for (auto& p : n.parents) {
      if (p->requires_grad) p->accumulate(g);
    }
  });
}

Var concat_rows(std::span<const Var> xs) {
  require(!xs.empty(), "concat_rows", "empty list");
  Eigen::Index rows = 0;
  for (const auto& x : xs) {
    require(x.cols() == xs[0].cols(), "concat_rows", "column mismatch");
    rows += x.rows();
  }
  Matrix out(rows, xs[0].cols());
  Eigen::Index at = 0;
  for (const auto& x : xs) {
    out.middleRows(at, x.rows()) = x.value();
    at += x.rows();
  }
  return make_result(std::move(out), xs, [](Node& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      const auto r = p->value.rows();
      if (p->requires_grad) p->accumulate(n.grad.middleRows(at, r));
      at += r;
    }
  });
}

Var concat_cols(std::span<const Var> xs) {
  require(!xs.empty(), "concat_cols", "empty list");
  Eigen::Index cols = 0;
  for (const auto& x : xs) {
    require(x.rows() == xs[0].rows(), "concat_cols", "row mismatch");
    cols += x.cols();
  }
  Matrix out(xs[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& x : xs) {
    out.middleCols(at, x.cols()) = x.value();
    at += x.cols();
  }
  return make_result(std::move(out), xs, [](Node& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      const auto c = p->value.cols();
      if (p->requires_grad) p->accumulate(n.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.rows(), "slice_rows", "range out of bounds");
  Var ps[] = {x};
  return make_result(x.value().middleRows(begin, count), ps, [begin, count](Node& n) {
    auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, count) = n.grad;
    p.accumulate(g);
  });
}

Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.cols(), "slice_cols", "range out of bounds");
  Var ps[] = {x};
  return make_result(x.value().middleCols(begin, count), ps, [begin, count](Node& n) {
    auto& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(begin, count) = n.grad;
    p.accumulate(g);
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows() && logits.rows() > 0,
          "softmax_cross_entropy", "one label per row required");
  Matrix probs(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < logits.cols(), "softmax_cross_entropy", "label out of range");
    const float mx = logits.value().row(r).maxCoeff();
    probs.row(r) = (logits.value().row(r).array() - mx).exp();
    const float z = probs.row(r).sum();
    probs.row(r) /= z;
    total += static_cast<double>(std::log(z) + mx - logits.value()(r, y));
  }
  Matrix out(1, 1);
  out(0, 0) = static_cast<float>(total / static_cast<double>(logits.rows()));
  std::vector<int> ys(labels.begin(), labels.end());
  Var ps[] = {logits};
  return make_result(std::move(out), ps, [probs = std::move(probs), ys = std::move(ys)](Node& n) {
    Matrix g = probs;
    for (std::size_t r = 0; r < ys.size(); ++r) g(static_cast<Eigen::Index>(r), ys[r]) -= 1.0f;
    g *= n.grad(0, 0) / static_cast<float>(ys.size());
    n.parents[0]->accumulate(g);
  });
}

}  // namespace dcc::ag
