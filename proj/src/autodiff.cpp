#include "dgbench/autodiff.hpp"

#include <cassert>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace dgbench::ad {

namespace {

Var make(Eigen::MatrixXd value, std::vector<Var> parents, Vjp vjp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  n->parents.reserve(parents.size());
  for (const auto& p : parents) {
    rg = rg || p.requires_grad();
    n->parents.push_back(p.shared());
  }
  n->requires_grad = rg;
  if (rg) n->vjp = std::move(vjp);
  return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Var ones_like(const Var& a) {
  return Var::constant(Eigen::MatrixXd::Ones(a.val().rows(), a.val().cols()));
}

}  // namespace

Var Var::constant(Eigen::MatrixXd v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return Var(std::move(n));
}

Var Var::leaf(Eigen::MatrixXd v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return Var(std::move(n));
}

const Eigen::MatrixXd& Var::val() const { return node_->value; }

double Var::scalar() const {
  assert(node_->value.size() == 1);
  return node_->value(0, 0);
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make(a.val() + b.val(), {a, b},
              [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var addrow(const Var& a, const Var& row) {
  if (row.val().rows() != 1 || row.val().cols() != a.val().cols())
    throw std::invalid_argument("addrow: row must be 1xN matching a's cols");
  Eigen::MatrixXd out = a.val().rowwise() + row.val().row(0);
  return make(std::move(out), {a, row}, [](const Var& g) {
    return std::vector<Var>{g, colsum(g)};
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make(a.val() - b.val(), {a, b},
              [](const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var neg(const Var& a) {
  return make(-a.val(), {a},
              [](const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make(a.val().cwiseProduct(b.val()), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{mul(g, b), mul(g, a)};
  });
}

Var smul(const Var& a, double c) {
  return make(a.val() * c, {a},
              [c](const Var& g) { return std::vector<Var>{smul(g, c)}; });
}

Var vscale(const Var& a, const Var& s) {
  if (s.val().size() != 1) throw std::invalid_argument("vscale: s must be 1x1");
  return make(a.val() * s.val()(0, 0), {a, s}, [a, s](const Var& g) {
    return std::vector<Var>{vscale(g, s), sum(mul(g, a))};
  });
}

Var cdiv(const Var& a, const Var& b) {
  check_same_shape(a, b, "cdiv");
  Var out = make(a.val().cwiseQuotient(b.val()), {a, b}, nullptr);
  // vjp needs the output var itself; a weak reference avoids a node cycle
  if (out.requires_grad()) {
    out.node()->vjp = [w = std::weak_ptr<Node>(out.shared()), b](const Var& g) {
      Var out(w.lock());
      return std::vector<Var>{cdiv(g, b), neg(cdiv(mul(g, out), b))};
    };
  }
  return out;
}

Var matmul(const Var& a, const Var& b) {
  if (a.val().cols() != b.val().rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  return make(a.val() * b.val(), {a, b}, [a, b](const Var& g) {
    return std::vector<Var>{matmul(g, transpose(b)), matmul(transpose(a), g)};
  });
}

Var transpose(const Var& a) {
  return make(a.val().transpose(), {a},
              [](const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var sigmoid(const Var& a) {
  Eigen::MatrixXd s = a.val().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
  });
  Var out = make(std::move(s), {a}, nullptr);
  if (out.requires_grad()) {
    out.node()->vjp = [w = std::weak_ptr<Node>(out.shared())](const Var& g) {
      Var out(w.lock());
      return std::vector<Var>{mul(g, mul(out, sub(ones_like(out), out)))};
    };
  }
  return out;
}

Var tanh_(const Var& a) {
  Var out = make(a.val().array().tanh().matrix(), {a}, nullptr);
  if (out.requires_grad()) {
    out.node()->vjp = [w = std::weak_ptr<Node>(out.shared())](const Var& g) {
      Var out(w.lock());
      return std::vector<Var>{mul(g, sub(ones_like(out), mul(out, out)))};
    };
  }
  return out;
}

Var relu(const Var& a) {
  Eigen::MatrixXd mask =
      (a.val().array() > 0.0).cast<double>().matrix();
  Var m = Var::constant(mask);
  return make(a.val().cwiseProduct(mask), {a}, [m](const Var& g) {
    return std::vector<Var>{mul(g, m)};
  });
}

Var softplus(const Var& a) {
  Eigen::MatrixXd s = a.val().unaryExpr([](double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return make(std::move(s), {a}, [a](const Var& g) {
    return std::vector<Var>{mul(g, sigmoid(a))};
  });
}

Var log_(const Var& a) {
  return make(a.val().array().log().matrix(), {a}, [a](const Var& g) {
    return std::vector<Var>{cdiv(g, a)};
  });
}

Var exp_(const Var& a) {
  Var out = make(a.val().array().exp().matrix(), {a}, nullptr);
  if (out.requires_grad()) {
    out.node()->vjp = [w = std::weak_ptr<Node>(out.shared())](const Var& g) {
      Var out(w.lock());
      return std::vector<Var>{mul(g, out)};
    };
  }
  return out;
}

Var sqrt_(const Var& a) {
  Var out = make(a.val().array().sqrt().matrix(), {a}, nullptr);
  if (out.requires_grad()) {
    out.node()->vjp = [w = std::weak_ptr<Node>(out.shared())](const Var& g) {
      Var out(w.lock());
      return std::vector<Var>{cdiv(smul(g, 0.5), out)};
    };
  }
  return out;
}

Var sum(const Var& a) {
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = a.val().sum();
  Eigen::Index r = a.val().rows(), c = a.val().cols();
  return make(std::move(s), {a}, [r, c](const Var& g) {
    return std::vector<Var>{vscale(Var::constant(Eigen::MatrixXd::Ones(r, c)), g)};
  });
}

Var mean(const Var& a) {
  return smul(sum(a), 1.0 / static_cast<double>(a.val().size()));
}

Var colsum(const Var& a) {
  Eigen::Index r = a.val().rows();
  return make(a.val().colwise().sum(), {a}, [r](const Var& g) {
    return std::vector<Var>{broadcast_rows(g, r)};
  });
}

Var broadcast_rows(const Var& row, Eigen::Index rows) {
  if (row.val().rows() != 1)
    throw std::invalid_argument("broadcast_rows: input must be 1xN");
  Eigen::MatrixXd out = row.val().replicate(rows, 1);
  return make(std::move(out), {row}, [](const Var& g) {
    return std::vector<Var>{colsum(g)};
  });
}

Var hstack(const Var& a, const Var& b) {
  if (a.val().rows() != b.val().rows())
    throw std::invalid_argument("hstack: row count mismatch");
  Eigen::Index ca = a.val().cols(), cb = b.val().cols();
  Eigen::MatrixXd out(a.val().rows(), ca + cb);
  out << a.val(), b.val();
  return make(std::move(out), {a, b}, [ca, cb](const Var& g) {
    return std::vector<Var>{slice_cols(g, 0, ca), slice_cols(g, ca, cb)};
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  Eigen::Index total = a.val().cols();
  return make(a.val().middleCols(start, n), {a}, [total, start](const Var& g) {
    return std::vector<Var>{pad_cols(g, total, start)};
  });
}

Var pad_cols(const Var& a, Eigen::Index total, Eigen::Index start) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.val().rows(), total);
  out.middleCols(start, a.val().cols()) = a.val();
  Eigen::Index n = a.val().cols();
  return make(std::move(out), {a}, [start, n](const Var& g) {
    return std::vector<Var>{slice_cols(g, start, n)};
  });
}

Var gather_rows(const Var& table, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), table.val().cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.val().row(idx[i]);
  Eigen::Index rows = table.val().rows();
  return make(std::move(out), {table}, [idx, rows](const Var& g) {
    return std::vector<Var>{scatter_rows(g, idx, rows)};
  });
}

Var scatter_rows(const Var& a, const std::vector<int>& idx, Eigen::Index rows) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, a.val().cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += a.val().row(static_cast<Eigen::Index>(i));
  return make(std::move(out), {a}, [idx](const Var& g) {
    return std::vector<Var>{gather_rows(g, idx)};
  });
}

Var sqnorm(const Var& a) { return sum(mul(a, a)); }

Var bce_with_logits(const Var& logits, const Eigen::MatrixXd& targets) {
  if (logits.val().rows() != targets.rows() ||
      logits.val().cols() != targets.cols())
    throw std::invalid_argument("bce_with_logits: shape mismatch");
  Var y = Var::constant(targets);
  return mean(sub(softplus(logits), mul(logits, y)));
}

std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt) {
  if (loss.val().size() != 1)
    throw std::invalid_argument("grad: loss must be scalar");

  // postorder over the subgraph that requires grad; reversed below
  std::vector<Node*> order;
  {
    struct Frame { Node* n; size_t next; };
    std::vector<Frame> stack;
    std::unordered_set<Node*> pushed;
    if (loss.requires_grad()) {
      stack.push_back({loss.node(), 0});
      pushed.insert(loss.node());
    }
    while (!stack.empty()) {
      auto& f = stack.back();
      if (f.next < f.n->parents.size()) {
        Node* p = f.n->parents[f.next++].get();
        if (p->requires_grad && pushed.insert(p).second)
          stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<Node*, Var> grads;
  if (loss.requires_grad())
    grads[loss.node()] = Var::constant(Eigen::MatrixXd::Ones(1, 1));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto git = grads.find(n);
    if (git == grads.end() || !n->vjp) continue;
    std::vector<Var> pg = n->vjp(git->second);
    assert(pg.size() == n->parents.size());
    for (size_t i = 0; i < pg.size(); ++i) {
      Node* p = n->parents[i].get();
      if (!p->requires_grad) continue;
      auto pit = grads.find(p);
      if (pit == grads.end())
        grads[p] = pg[i];
      else
        pit->second = add(pit->second, pg[i]);
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = grads.find(w.node());
    if (it != grads.end())
      out.push_back(it->second);
    else
      out.push_back(Var::constant(
          Eigen::MatrixXd::Zero(w.val().rows(), w.val().cols())));
  }
  return out;
}

}  // namespace dgbench::ad
