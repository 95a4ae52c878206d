#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// Backward functions are expressed in terms of the public ops, so the
// gradients returned by grad() are themselves differentiable. Objectives
// that need gradients-of-gradients (gradient alignment penalties,
// second-order meta updates) rely on this.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace dgbench::ad {

struct Node;

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var constant(Eigen::MatrixXd v);
  static Var leaf(Eigen::MatrixXd v);  // differentiable input

  const Eigen::MatrixXd& val() const;
  double scalar() const;  // value of a 1x1 var
  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const;
  Node* node() const { return node_.get(); }
  std::shared_ptr<Node> shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Vjp = std::function<std::vector<Var>(const Var&)>;

struct Node {
  Eigen::MatrixXd value;
  std::vector<std::shared_ptr<Node>> parents;
  Vjp vjp;  // maps upstream grad to per-parent grads; empty for leaves
  bool requires_grad = false;
};

// elementwise / structural ops
Var add(const Var& a, const Var& b);         // same shape
Var addrow(const Var& a, const Var& row);    // broadcast 1xN row over rows
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);         // elementwise, same shape
Var smul(const Var& a, double c);
Var vscale(const Var& a, const Var& s);      // a * s, s is 1x1
Var cdiv(const Var& a, const Var& b);        // elementwise divide
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var log_(const Var& a);
Var exp_(const Var& a);
Var sqrt_(const Var& a);
Var sum(const Var& a);                       // -> 1x1
Var mean(const Var& a);                      // -> 1x1
Var colsum(const Var& a);                    // -> 1xN
Var broadcast_rows(const Var& row, Eigen::Index rows);
Var hstack(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n);
Var pad_cols(const Var& a, Eigen::Index total, Eigen::Index start);
Var gather_rows(const Var& table, const std::vector<int>& idx);
Var scatter_rows(const Var& a, const std::vector<int>& idx, Eigen::Index rows);
Var sqnorm(const Var& a);                    // sum of squares -> 1x1

// Binary cross-entropy with logits, mean over all entries.
// targets is a constant matrix of {0,1} with the same shape as logits.
Var bce_with_logits(const Var& logits, const Eigen::MatrixXd& targets);

// Gradients of a 1x1 loss with respect to wrt. Entries of wrt not reached
// by the graph get zero gradients of matching shape. The returned vars are
// part of the graph and can be differentiated again.
std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt);

}  // namespace dgbench::ad
