#include "gaplab/expression.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <vector>

#include "gaplab/error.hpp"

namespace gaplab {

struct Expression::Node {
  enum class Op { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Call } op;
  double number = 0.0;
  int var = 0;
  double (*fn)(double) = nullptr;
  std::shared_ptr<const Node> a, b;

  double eval(const Eigen::VectorXd& x) const {
    switch (op) {
      case Op::Number:
        return number;
      case Op::Variable:
        return x[var - 1];
      case Op::Neg:
        return -a->eval(x);
      case Op::Add:
        return a->eval(x) + b->eval(x);
      case Op::Sub:
        return a->eval(x) - b->eval(x);
      case Op::Mul:
        return a->eval(x) * b->eval(x);
      case Op::Div:
        return a->eval(x) / b->eval(x);
      case Op::Pow:
        return std::pow(a->eval(x), b->eval(x));
      case Op::Call:
        return fn(a->eval(x));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return n;
  }
  int max_var() const { return max_var_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression '" + s_ + "': " + msg + " at position " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  static NodePtr binary(Node::Op op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }
  NodePtr expr() {
    NodePtr n = term();
    while (true) {
      if (accept('+'))
        n = binary(Node::Op::Add, n, term());
      else if (accept('-'))
        n = binary(Node::Op::Sub, n, term());
      else
        return n;
    }
  }
  NodePtr term() {
    NodePtr n = unary();
    while (true) {
      if (accept('*'))
        n = binary(Node::Op::Mul, n, unary());
      else if (accept('/'))
        n = binary(Node::Op::Div, n, unary());
      else
        return n;
    }
  }
  NodePtr unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->op = Node::Op::Neg;
      n->a = unary();
      return n;
    }
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return binary(Node::Op::Pow, base, unary());
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    if (accept('(')) {
      NodePtr n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("malformed number");
      }
      pos_ += used;
      auto n = std::make_shared<Node>();
      n->op = Node::Op::Number;
      n->number = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      if (name == "pi") {
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Number;
        n->number = std::numbers::pi;
        return n;
      }
      if (name.size() == 2 && name[0] == 'x' && name[1] >= '1' && name[1] <= '9') {
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Variable;
        n->var = name[1] - '0';
        max_var_ = std::max(max_var_, n->var);
        return n;
      }
      static const std::map<std::string, double (*)(double)> fns = {
          {"sin", [](double v) { return std::sin(v); }},   {"cos", [](double v) { return std::cos(v); }},
          {"tan", [](double v) { return std::tan(v); }},   {"exp", [](double v) { return std::exp(v); }},
          {"log", [](double v) { return std::log(v); }},   {"sqrt", [](double v) { return std::sqrt(v); }},
          {"abs", [](double v) { return std::abs(v); }},   {"tanh", [](double v) { return std::tanh(v); }}};
      auto it = fns.find(name);
      if (it == fns.end()) fail("unknown identifier '" + name + "'");
      if (!accept('(')) fail("expected '(' after function name");
      auto n = std::make_shared<Node>();
      n->op = Node::Op::Call;
      n->fn = it->second;
      n->a = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int max_var_ = 0;
};

}  // namespace

Expression::Expression(const std::string& source) : source_(source) {
  Parser p(source_);
  root_ = p.parse();
  max_var_ = p.max_var();
}

double Expression::operator()(const Eigen::VectorXd& x) const {
  if (x.size() < max_var_) throw InvalidArgument("expression '" + source_ + "' needs more coordinates");
  return root_->eval(x);
}

}  // namespace gaplab
