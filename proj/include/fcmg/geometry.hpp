// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fcmg/common.hpp"

namespace fcmg {

/// Scalar level set, negative inside the represented region.
class LevelSet {
public:
  LevelSet() = default;
  explicit LevelSet(std::function<double(Vec2)> f) : f_(std::move(f)) {}

  /// Region {x : n.x < offset}; n is normalized.
  static LevelSet half_plane(Vec2 normal, double offset);
  /// Signed distance to an axis-aligned rectangle.
  static LevelSet rectangle(BBox box);
  static LevelSet disk(Vec2 center, double radius);

  double operator()(Vec2 p) const { return f_(p); }
  explicit operator bool() const { return static_cast<bool>(f_); }

  friend LevelSet operator|(const LevelSet& a, const LevelSet& b);  // union
  friend LevelSet operator&(const LevelSet& a, const LevelSet& b);  // intersection
  friend LevelSet operator!(const LevelSet& a);                     // complement

private:
  std::function<double(Vec2)> f_;
};

/// Parses a CSG expression over named primitives: identifiers, `|` (union),
/// `&` (intersection), `!` (complement) and parentheses; `&` binds tighter
/// than `|`. Throws ConfigError.
LevelSet parse_csg(const std::string& expr, const std::map<std::string, LevelSet>& primitives);

enum class BcType { Dirichlet, Neumann };

/// A tagged portion of the physical boundary. `applies` receives the point and
/// whether it lies on the immersed (level-set) boundary rather than on the
/// fitted boundary of the embedding box. For Dirichlet tags `value` is the
/// prescribed velocity w, for Neumann tags the traction h.
struct BoundaryCondition {
  std::string name;
  BcType type = BcType::Dirichlet;
  std::function<bool(Vec2, bool immersed)> applies;
  std::function<Vec2(Vec2)> value;
};

/// Physical domain {phi < 0} inside the rectangular embedding box. The box
/// boundary (where phi < 0) is the fitted part of the physical boundary; the
/// zero set of phi inside the box is the immersed part.
struct ImplicitDomain {
  BBox embedding;
  LevelSet phi;
  std::vector<BoundaryCondition> conditions;

  bool inside(Vec2 p) const { return phi(p) < 0.0; }
  /// First matching boundary condition, or -1.
  int tag_of(Vec2 p, bool immersed) const;
};

enum class CellClass { Inside, Outside, Cut };

/// Sign test over corners, a 4x4 interior grid and four probes per edge.
CellClass classify_cell(const ImplicitDomain& domain, const BBox& cell);

struct VolumePoint {
  Vec2 x;
  double w = 0.0;
  double alpha = 1.0;
};

struct InterfacePoint {
  Vec2 x;
  double w = 0.0;
  Vec2 normal;
  int tag = -1;
  bool immersed = true;
};

struct InterfaceQuadrature {
  std::vector<InterfacePoint> points;
  /// Terminal subcells with more than two edge roots (paired by edge order).
  int degenerate_subcells = 0;
};

inline constexpr int kDefaultIntegrationDepth = 8;
inline constexpr int kDefaultVolumeOrder = 2;
inline constexpr int kDefaultSegmentOrder = 3;

/// Tensor Gauss rule on Inside/Outside cells (alpha = 1 / alpha_out), adaptive
/// quadtree subcells on cut cells with per-point alpha on cut terminal subcells.
std::vector<VolumePoint> volume_quadrature(const ImplicitDomain& domain, const BBox& cell,
                                           int depth, int order, double alpha_out);

/// Quadrature of the immersed boundary inside a cut cell: in each deepest cut
/// subcell the zero set is replaced by the chord between its edge roots.
InterfaceQuadrature interface_quadrature(const ImplicitDomain& domain, const BBox& cell,
                                         int depth, int order);

/// Quadrature of the parts of the cell's edges lying on the embedding box
/// boundary and inside the physical domain, with the box's outward normals.
std::vector<InterfacePoint> embedding_boundary_quadrature(const ImplicitDomain& domain,
                                                          const BBox& cell, int depth,
                                                          int order);

/// Central finite-difference gradient of phi with step `step`.
Vec2 level_set_gradient(const LevelSet& phi, Vec2 p, double step);

} // namespace fcmg
