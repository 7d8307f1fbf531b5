// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fcmg {

/// Compiled scalar expression over a fixed list of variables.
///
/// Grammar (usual precedence, lowest first): `||`, `&&`, comparisons
/// (`< <= > >= == !=`), `+ -`, `* /`, unary `- ! +`, `^` (right
/// associative), primaries. Primaries are numbers, `pi`, variable names,
/// named constants, parenthesized expressions and calls of sin, cos, tan,
/// exp, log, sqrt, abs, min, max. Comparison and logical operators yield 1 or 0.
class Expression {
public:
  Expression() = default;

  /// Throws ConfigError on syntax errors or unknown identifiers.
  static Expression parse(const std::string& text, const std::vector<std::string>& variables,
                          const std::map<std::string, double>& constants = {});

  static Expression constant(double value);

  double operator()(std::span<const double> values) const { return eval_(values); }
  double operator()(double x, double y) const {
    const double v[2] = {x, y};
    return eval_(v);
  }

  const std::string& text() const { return text_; }

private:
  std::function<double(std::span<const double>)> eval_ = [](std::span<const double>) { return 0.0; };
  std::string text_ = "0";
};

} // namespace fcmg
