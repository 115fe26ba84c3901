// Copyright 2026 The bohmflux Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Closed-form scalar fields f(x, y, t) from a small arithmetic grammar:
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'x' | 'y' | 't' | 'pi' | func '(' expr ')' | '(' expr ')'
//   func   := 'exp' | 'sin' | 'cos'

#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>

#include "bohmflux/error.hpp"

namespace bohmflux {

class Expression {
 public:
  enum class Op { kConst, kX, kY, kT, kAdd, kSub, kMul, kDiv, kPow, kNeg, kExp, kSin, kCos, kLog };

  /// The zero field.
  Expression() : node_(make(Op::kConst, 0.0)) {}

  static Expression constant(double c) { return Expression(make(Op::kConst, c)); }

  static Expression parse(std::string_view text) {
    Parser p{text};
    auto node = p.expression();
    p.skip_space();
    if (p.pos != text.size()) p.fail("unexpected trailing input");
    return Expression(std::move(node));
  }

  double operator()(double x, double y, double t) const { return eval(*node_, x, y, t); }

  bool depends_on(Op var) const { return depends(*node_, var); }
  bool is_zero() const { return node_->op == Op::kConst && node_->value == 0.0; }
  bool is_constant() const {
    return !depends_on(Op::kX) && !depends_on(Op::kY) && !depends_on(Op::kT);
  }

  /// Symbolic partial derivative with respect to t.
  Expression derivative_t() const { return Expression(diff(node_)); }

  std::string to_string() const { return print(*node_); }

 private:
  struct Node;
  using NodePtr = std::shared_ptr<const Node>;
  struct Node {
    Op op;
    double value = 0.0;
    NodePtr a, b;
  };

  explicit Expression(NodePtr n) : node_(std::move(n)) {}

  static NodePtr make(Op op, double v = 0.0) { return std::make_shared<Node>(Node{op, v, {}, {}}); }
  static NodePtr make(Op op, NodePtr a, NodePtr b = {}) {
    return std::make_shared<Node>(Node{op, 0.0, std::move(a), std::move(b)});
  }

  static bool is_const(const NodePtr& n, double v) { return n->op == Op::kConst && n->value == v; }

  // Constructors with light constant folding so derivatives of static terms
  // collapse to an exact zero.
  static NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return make(Op::kAdd, a, b);
  }
  static NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return neg(b);
    return make(Op::kSub, a, b);
  }
  static NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0) || is_const(b, 0.0)) return make(Op::kConst, 0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    return make(Op::kMul, a, b);
  }
  static NodePtr div(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return make(Op::kConst, 0.0);
    if (is_const(b, 1.0)) return a;
    return make(Op::kDiv, a, b);
  }
  static NodePtr neg(NodePtr a) {
    if (a->op == Op::kConst) return make(Op::kConst, -a->value);
    return make(Op::kNeg, a);
  }

  static double eval(const Node& n, double x, double y, double t) {
    switch (n.op) {
      case Op::kConst: return n.value;
      case Op::kX: return x;
      case Op::kY: return y;
      case Op::kT: return t;
      case Op::kAdd: return eval(*n.a, x, y, t) + eval(*n.b, x, y, t);
      case Op::kSub: return eval(*n.a, x, y, t) - eval(*n.b, x, y, t);
      case Op::kMul: return eval(*n.a, x, y, t) * eval(*n.b, x, y, t);
      case Op::kDiv: return eval(*n.a, x, y, t) / eval(*n.b, x, y, t);
      case Op::kPow: return std::pow(eval(*n.a, x, y, t), eval(*n.b, x, y, t));
      case Op::kNeg: return -eval(*n.a, x, y, t);
      case Op::kExp: return std::exp(eval(*n.a, x, y, t));
      case Op::kSin: return std::sin(eval(*n.a, x, y, t));
      case Op::kCos: return std::cos(eval(*n.a, x, y, t));
      case Op::kLog: return std::log(eval(*n.a, x, y, t));
    }
    return 0.0;
  }

  static bool depends(const Node& n, Op var) {
    if (n.op == var) return true;
    return (n.a && depends(*n.a, var)) || (n.b && depends(*n.b, var));
  }

  static NodePtr diff(const NodePtr& n) {
    if (!depends(*n, Op::kT)) return make(Op::kConst, 0.0);
    switch (n->op) {
      case Op::kT: return make(Op::kConst, 1.0);
      case Op::kAdd: return add(diff(n->a), diff(n->b));
      case Op::kSub: return sub(diff(n->a), diff(n->b));
      case Op::kMul: return add(mul(diff(n->a), n->b), mul(n->a, diff(n->b)));
      case Op::kDiv:
        return div(sub(mul(diff(n->a), n->b), mul(n->a, diff(n->b))), mul(n->b, n->b));
      case Op::kNeg: return neg(diff(n->a));
      case Op::kExp: return mul(n, diff(n->a));
      case Op::kSin: return mul(make(Op::kCos, n->a), diff(n->a));
      case Op::kCos: return neg(mul(make(Op::kSin, n->a), diff(n->a)));
      case Op::kLog: return div(diff(n->a), n->a);
      case Op::kPow:
        if (!depends(*n->b, Op::kT)) {
          // d(a^c) = c a^(c-1) a'
          return mul(mul(n->b, make(Op::kPow, n->a, sub(n->b, make(Op::kConst, 1.0)))),
                     diff(n->a));
        }
        // d(a^b) = a^b (b' ln a + b a'/a)
        return mul(n, add(mul(diff(n->b), make(Op::kLog, n->a)), div(mul(n->b, diff(n->a)), n->a)));
      default: return make(Op::kConst, 0.0);
    }
  }

  static std::string print(const Node& n) {
    auto bin = [&](const char* sym) { return "(" + print(*n.a) + " " + sym + " " + print(*n.b) + ")"; };
    switch (n.op) {
      case Op::kConst: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", n.value);
        return buf;
      }
      case Op::kX: return "x";
      case Op::kY: return "y";
      case Op::kT: return "t";
      case Op::kAdd: return bin("+");
      case Op::kSub: return bin("-");
      case Op::kMul: return bin("*");
      case Op::kDiv: return bin("/");
      case Op::kPow: return bin("^");
      case Op::kNeg: return "(-" + print(*n.a) + ")";
      case Op::kExp: return "exp(" + print(*n.a) + ")";
      case Op::kSin: return "sin(" + print(*n.a) + ")";
      case Op::kCos: return "cos(" + print(*n.a) + ")";
      case Op::kLog: return "log(" + print(*n.a) + ")";
    }
    return "?";
  }

  struct Parser {
    std::string_view text;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
      throw ConfigError("expression error at column " + std::to_string(pos + 1) + ": " + what +
                        " in \"" + std::string(text) + "\"");
    }
    void skip_space() {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool accept(char c) {
      skip_space();
      if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    NodePtr expression() {
      NodePtr lhs = term();
      for (;;) {
        if (accept('+')) lhs = make(Op::kAdd, lhs, term());
        else if (accept('-')) lhs = make(Op::kSub, lhs, term());
        else return lhs;
      }
    }
    NodePtr term() {
      NodePtr lhs = unary();
      for (;;) {
        if (accept('*')) lhs = make(Op::kMul, lhs, unary());
        else if (accept('/')) lhs = make(Op::kDiv, lhs, unary());
        else return lhs;
      }
    }
    NodePtr unary() {
      if (accept('-')) return make(Op::kNeg, unary());
      if (accept('+')) return unary();
      return power();
    }
    NodePtr power() {
      NodePtr base = atom();
      if (accept('^')) return make(Op::kPow, base, unary());
      return base;
    }
    NodePtr atom() {
      skip_space();
      if (pos >= text.size()) fail("unexpected end of input");
      const char c = text[pos];
      if (accept('(')) {
        NodePtr inner = expression();
        if (!accept(')')) fail("expected ')'");
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const std::string rest(text.substr(pos));
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(rest, &used);
        } catch (const std::exception&) {
          fail("malformed number");
        }
        pos += used;
        return make(Op::kConst, v);
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < text.size() && std::isalnum(static_cast<unsigned char>(text[pos]))) ++pos;
        const std::string_view name = text.substr(start, pos - start);
        if (name == "x") return make(Op::kX);
        if (name == "y") return make(Op::kY);
        if (name == "t") return make(Op::kT);
        if (name == "pi") return make(Op::kConst, std::numbers::pi);
        Op fn;
        if (name == "exp") fn = Op::kExp;
        else if (name == "sin") fn = Op::kSin;
        else if (name == "cos") fn = Op::kCos;
        else {
          pos = start;
          fail("unknown identifier '" + std::string(name) + "'");
        }
        if (!accept('(')) fail("expected '(' after function name");
        NodePtr arg = expression();
        if (!accept(')')) fail("expected ')'");
        return make(fn, arg);
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  NodePtr node_;
};

}  // namespace bohmflux
