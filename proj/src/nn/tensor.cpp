#include "fakeshield/nn/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace fakeshield::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
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

Var Var::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Var(std::move(m), requires_grad);
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on a non-scalar value");
  return node_->value(0, 0);
}

Var make_result(Matrix value, std::initializer_list<Var> inputs,
                std::function<void(Node&, const Matrix&)> backward) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const auto& in : inputs) out.node_->parents.push_back(in.node());
  Node* self = out.node_.get();
  out.node_->backward = [self, fn = std::move(backward)](const Matrix& g) { fn(*self, g); };
  return out;
}

void Var::backward() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("backward() needs a scalar root");
  // Iterative post-order DFS; recursion depth would follow sequence length.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(n->grad);
  }
  // Drop interior gradients so repeated backward passes only accumulate
  // into leaves.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
}

}  // namespace fakeshield::nn
