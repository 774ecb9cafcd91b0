#pragma once

#include <memory>
#include <string>

#include "hypobridge/types.hpp"

namespace hypobridge {

/// Closed symbolic scalar expressions over point coordinates: constants,
/// coordinates, sums, products, sin, cos. Enough to differentiate the
/// polynomial/trigonometric field components of the built-in models exactly;
/// anything richer is out of scope.
class Expr {
 public:
  Expr() : Expr(0.0) {}
  explicit Expr(double c);

  static Expr constant(double c) { return Expr(c); }
  static Expr var(int index);

  Expr diff(int var_index) const;
  double eval(const VecRef& x) const;
  bool is_constant(double* value = nullptr) const;
  std::string str() const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr sin(const Expr& a);
  friend Expr cos(const Expr& a);

  struct Node;  // implementation detail, defined in symbolic.cpp

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

}  // namespace hypobridge
