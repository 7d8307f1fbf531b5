// SPDX-License-Identifier: Apache-2.0
#include "fcmg/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

#include "fcmg/common.hpp"

namespace fcmg {

namespace {

using Fn = std::function<double(std::span<const double>)>;

class Parser {
public:
  Parser(const std::string& text, const std::vector<std::string>& vars,
         const std::map<std::string, double>& constants)
      : s_(text), vars_(vars), constants_(constants) {}

  Fn parse() {
    Fn f = parse_or();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return f;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression \"" + s_ + "\": " + msg + " at offset " + std::to_string(pos_));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(const char* tok) {
    skip();
    const std::size_t n = std::char_traits<char>::length(tok);
    if (s_.compare(pos_, n, tok) == 0) {
      pos_ += n;
      return true;
    }
    return false;
  }

  Fn parse_or() {
    Fn lhs = parse_and();
    while (accept("||")) {
      Fn rhs = parse_and();
      lhs = [lhs, rhs](std::span<const double> v) { return (lhs(v) != 0.0 || rhs(v) != 0.0) ? 1.0 : 0.0; };
    }
    return lhs;
  }

  Fn parse_and() {
    Fn lhs = parse_cmp();
    while (accept("&&")) {
      Fn rhs = parse_cmp();
      lhs = [lhs, rhs](std::span<const double> v) { return (lhs(v) != 0.0 && rhs(v) != 0.0) ? 1.0 : 0.0; };
    }
    return lhs;
  }

  Fn parse_cmp() {
    Fn lhs = parse_sum();
    for (;;) {
      Fn rhs;
      if (accept("<=")) {
        rhs = parse_sum();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) <= rhs(v) ? 1.0 : 0.0; };
      } else if (accept(">=")) {
        rhs = parse_sum();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) >= rhs(v) ? 1.0 : 0.0; };
      } else if (accept("==")) {
        rhs = parse_sum();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) == rhs(v) ? 1.0 : 0.0; };
      } else if (accept("!=")) {
        rhs = parse_sum();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) != rhs(v) ? 1.0 : 0.0; };
      } else if (accept("<")) {
        rhs = parse_sum();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) < rhs(v) ? 1.0 : 0.0; };
      } else if (accept(">")) {
        rhs = parse_sum();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) > rhs(v) ? 1.0 : 0.0; };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_sum() {
    Fn lhs = parse_product();
    for (;;) {
      if (accept("+")) {
        Fn rhs = parse_product();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) + rhs(v); };
      } else if (accept("-")) {
        Fn rhs = parse_product();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) - rhs(v); };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_product() {
    Fn lhs = parse_unary();
    for (;;) {
      if (accept("*")) {
        Fn rhs = parse_unary();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) * rhs(v); };
      } else if (accept("/")) {
        Fn rhs = parse_unary();
        lhs = [lhs, rhs](std::span<const double> v) { return lhs(v) / rhs(v); };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_unary() {
    if (accept("-")) {
      Fn a = parse_unary();
      return [a](std::span<const double> v) { return -a(v); };
    }
    if (accept("+")) return parse_unary();
    skip();
    if (pos_ < s_.size() && s_[pos_] == '!' && (pos_ + 1 >= s_.size() || s_[pos_ + 1] != '=')) {
      ++pos_;
      Fn a = parse_unary();
      return [a](std::span<const double> v) { return a(v) == 0.0 ? 1.0 : 0.0; };
    }
    return parse_power();
  }

  Fn parse_power() {
    Fn base = parse_primary();
    if (accept("^")) {
      Fn exp = parse_unary();
      return [base, exp](std::span<const double> v) { return std::pow(base(v), exp(v)); };
    }
    return base;
  }

  Fn parse_primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char ch = s_[pos_];
    if (ch == '(') {
      ++pos_;
      Fn inner = parse_or();
      if (!accept(")")) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
      std::size_t used = 0;
      const double value = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      return [value](std::span<const double>) { return value; };
    }
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (accept("(")) return parse_call(name);
      for (std::size_t k = 0; k < vars_.size(); ++k) {
        if (vars_[k] == name) return [k](std::span<const double> v) { return v[k]; };
      }
      if (auto it = constants_.find(name); it != constants_.end()) {
        const double value = it->second;
        return [value](std::span<const double>) { return value; };
      }
      if (name == "pi") return [](std::span<const double>) { return std::numbers::pi; };
      fail("unknown identifier '" + name + "'");
    }
    fail("unexpected '" + std::string(1, ch) + "'");
  }

  Fn parse_call(const std::string& name) {
    std::vector<Fn> args;
    if (!accept(")")) {
      do {
        args.push_back(parse_or());
      } while (accept(","));
      if (!accept(")")) fail("expected ')' after arguments");
    }
    auto unary = [&](double (*f)(double)) -> Fn {
      if (args.size() != 1) fail(name + " takes one argument");
      Fn a = args[0];
      return [a, f](std::span<const double> v) { return f(a(v)); };
    };
    if (name == "sin") return unary([](double a) { return std::sin(a); });
    if (name == "cos") return unary([](double a) { return std::cos(a); });
    if (name == "tan") return unary([](double a) { return std::tan(a); });
    if (name == "exp") return unary([](double a) { return std::exp(a); });
    if (name == "log") return unary([](double a) { return std::log(a); });
    if (name == "sqrt") return unary([](double a) { return std::sqrt(a); });
    if (name == "abs") return unary([](double a) { return std::abs(a); });
    if (name == "min" || name == "max") {
      if (args.size() != 2) fail(name + " takes two arguments");
      Fn a = args[0], b = args[1];
      if (name == "min") return [a, b](std::span<const double> v) { return std::min(a(v), b(v)); };
      return [a, b](std::span<const double> v) { return std::max(a(v), b(v)); };
    }
    fail("unknown function '" + name + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& vars_;
  const std::map<std::string, double>& constants_;
  std::size_t pos_ = 0;
};

} // namespace

Expression Expression::parse(const std::string& text, const std::vector<std::string>& variables,
                             const std::map<std::string, double>& constants) {
  Expression e;
  e.eval_ = Parser(text, variables, constants).parse();
  e.text_ = text;
  return e;
}

Expression Expression::constant(double value) {
  Expression e;
  e.eval_ = [value](std::span<const double>) { return value; };
  e.text_ = std::to_string(value);
  return e;
}

} // namespace fcmg
