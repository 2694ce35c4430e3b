#pragma once

// Minimal reverse-mode autodiff over dense row-major double matrices.
//
// Everything in the model zoo here is expressed as 2-D matrices: token
// sequences are [tokens, width], feature maps are [channels, height*width].
// Batches are handled by gradient accumulation, not by a batch dimension.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

namespace fakeshield::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Matrix&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  static Var scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  // Zero matrix of the value's shape when nothing has been accumulated.
  Matrix grad() const;
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  // Seeds d(self)/d(self) = 1 and propagates. Only valid on 1x1 values.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_result(Matrix, std::initializer_list<Var>,
                         std::function<void(Node&, const Matrix&)>);
  std::shared_ptr<Node> node_;
};

// Builds the result node of an op. `backward` receives the result node and
// the upstream gradient; it is only stored when grad recording is on and
// at least one input requires grad.
Var make_result(Matrix value, std::initializer_list<Var> inputs,
                std::function<void(Node& self, const Matrix& grad_out)> backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace fakeshield::nn
