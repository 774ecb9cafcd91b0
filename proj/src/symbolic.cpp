#include "hypobridge/symbolic.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hypobridge {

struct Expr::Node {
  enum class Op { Const, Var, Add, Mul, Sin, Cos };
  Op op;
  double value = 0.0;  // Const
  int var = -1;        // Var
  std::shared_ptr<const Node> a, b;
};

namespace {

using Node = Expr::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_const(double c) {
  auto n = std::make_shared<Node>();
  n->op = Node::Op::Const;
  n->value = c;
  return n;
}

bool const_value(const NodePtr& n, double* v) {
  if (n->op != Node::Op::Const) return false;
  if (v) *v = n->value;
  return true;
}

NodePtr make_add(NodePtr a, NodePtr b) {
  double ca, cb;
  bool ia = const_value(a, &ca), ib = const_value(b, &cb);
  if (ia && ib) return make_const(ca + cb);
  if (ia && ca == 0.0) return b;
  if (ib && cb == 0.0) return a;
  auto n = std::make_shared<Node>();
  n->op = Node::Op::Add;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr make_mul(NodePtr a, NodePtr b) {
  double ca, cb;
  bool ia = const_value(a, &ca), ib = const_value(b, &cb);
  if (ia && ib) return make_const(ca * cb);
  if ((ia && ca == 0.0) || (ib && cb == 0.0)) return make_const(0.0);
  if (ia && ca == 1.0) return b;
  if (ib && cb == 1.0) return a;
  auto n = std::make_shared<Node>();
  n->op = Node::Op::Mul;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr make_unary(Node::Op op, NodePtr a) {
  double ca;
  if (const_value(a, &ca))
    return make_const(op == Node::Op::Sin ? std::sin(ca) : std::cos(ca));
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

NodePtr diff_node(const NodePtr& n, int k);

NodePtr node_of(const Expr& e);

}  // namespace

Expr::Expr(double c) : node_(make_const(c)) {}

Expr Expr::var(int index) {
  auto n = std::make_shared<Node>();
  n->op = Node::Op::Var;
  n->var = index;
  return Expr(NodePtr(n));
}

double Expr::eval(const VecRef& x) const {
  switch (node_->op) {
    case Node::Op::Const: return node_->value;
    case Node::Op::Var:
      if (node_->var >= x.size()) throw std::invalid_argument("Expr: point dimension too small");
      return x[node_->var];
    case Node::Op::Add: return Expr(node_->a).eval(x) + Expr(node_->b).eval(x);
    case Node::Op::Mul: return Expr(node_->a).eval(x) * Expr(node_->b).eval(x);
    case Node::Op::Sin: return std::sin(Expr(node_->a).eval(x));
    case Node::Op::Cos: return std::cos(Expr(node_->a).eval(x));
  }
  return 0.0;
}

bool Expr::is_constant(double* value) const { return const_value(node_, value); }

namespace {

NodePtr diff_node(const NodePtr& n, int k) {
  switch (n->op) {
    case Node::Op::Const: return make_const(0.0);
    case Node::Op::Var: return make_const(n->var == k ? 1.0 : 0.0);
    case Node::Op::Add: return make_add(diff_node(n->a, k), diff_node(n->b, k));
    case Node::Op::Mul:
      return make_add(make_mul(diff_node(n->a, k), n->b), make_mul(n->a, diff_node(n->b, k)));
    case Node::Op::Sin: return make_mul(make_unary(Node::Op::Cos, n->a), diff_node(n->a, k));
    case Node::Op::Cos:
      return make_mul(make_const(-1.0), make_mul(make_unary(Node::Op::Sin, n->a), diff_node(n->a, k)));
  }
  return make_const(0.0);
}

std::string str_node(const NodePtr& n) {
  std::ostringstream os;
  switch (n->op) {
    case Node::Op::Const: os << n->value; break;
    case Node::Op::Var: os << "x" << n->var; break;
    case Node::Op::Add: os << "(" << str_node(n->a) << " + " << str_node(n->b) << ")"; break;
    case Node::Op::Mul: os << "(" << str_node(n->a) << " * " << str_node(n->b) << ")"; break;
    case Node::Op::Sin: os << "sin(" << str_node(n->a) << ")"; break;
    case Node::Op::Cos: os << "cos(" << str_node(n->a) << ")"; break;
  }
  return os.str();
}

}  // namespace

Expr Expr::diff(int var_index) const { return Expr(diff_node(node_, var_index)); }

std::string Expr::str() const { return str_node(node_); }

Expr operator+(const Expr& a, const Expr& b) { return Expr(make_add(a.node_, b.node_)); }
Expr operator-(const Expr& a, const Expr& b) {
  return Expr(make_add(a.node_, make_mul(make_const(-1.0), b.node_)));
}
Expr operator*(const Expr& a, const Expr& b) { return Expr(make_mul(a.node_, b.node_)); }
Expr operator-(const Expr& a) { return Expr(make_mul(make_const(-1.0), a.node_)); }
Expr sin(const Expr& a) { return Expr(make_unary(Expr::Node::Op::Sin, a.node_)); }
Expr cos(const Expr& a) { return Expr(make_unary(Expr::Node::Op::Cos, a.node_)); }

}  // namespace hypobridge
