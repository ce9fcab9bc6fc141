#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

namespace gaplab {

// Closed-form scalar expression in the variables x1..x9, e.g. "x1", "x1 + 0.5*x2^2",
// "sin(pi*x1)". Supports + - * / ^, unary minus, parentheses, the constant pi and
// the functions sin cos tan exp log sqrt abs tanh.
class Expression {
 public:
  explicit Expression(const std::string& source);
  double operator()(const Eigen::VectorXd& x) const;
  const std::string& source() const { return source_; }
  // Largest variable index referenced (0 when none).
  int max_variable() const { return max_var_; }

  struct Node;

 private:
  std::string source_;
  std::shared_ptr<const Node> root_;
  int max_var_ = 0;
};

}  // namespace gaplab
