// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace fcmg {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = std::int64_t;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
  friend double norm(Vec2 a) { return std::hypot(a.x, a.y); }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct BBox {
  Vec2 lo;
  Vec2 hi;

  double width() const { return hi.x - lo.x; }
  double height() const { return hi.y - lo.y; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }
  Vec2 center() const { return 0.5 * (lo + hi); }
  bool contains(Vec2 p, double tol = 0.0) const {
    return p.x >= lo.x - tol && p.x <= hi.x + tol && p.y >= lo.y - tol &&
           p.y <= hi.y + tol;
  }
  /// Euclidean distance from p to the rectangle (0 if inside).
  double distance(Vec2 p) const {
    double dx = std::max({lo.x - p.x, 0.0, p.x - hi.x});
    double dy = std::max({lo.y - p.y, 0.0, p.y - hi.y});
    return std::hypot(dx, dy);
  }
  /// Child quadrant q (bit 0: upper half in x, bit 1: upper half in y).
  BBox quadrant(int q) const {
    Vec2 c = center();
    BBox b = *this;
    if (q & 1) b.lo.x = c.x; else b.hi.x = c.x;
    if (q & 2) b.lo.y = c.y; else b.hi.y = c.y;
    return b;
  }
};

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input (unknown ids, bad dimensions, malformed config).
class InputError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class CannotCoarsen : public Error {
public:
  using Error::Error;
};

class HierarchyError : public Error {
public:
  HierarchyError(const std::string& what, int achievable_depth)
      : Error(what), achievable_depth_(achievable_depth) {}
  int achievable_depth() const { return achievable_depth_; }

private:
  int achievable_depth_;
};

class AssemblyError : public Error {
public:
  using Error::Error;
};

class FactorizationError : public Error {
public:
  using Error::Error;
};

class SolverError : public Error {
public:
  using Error::Error;
};

} // namespace fcmg
