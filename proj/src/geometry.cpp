// SPDX-License-Identifier: Apache-2.0
#include "fcmg/geometry.hpp"

#include <algorithm>
#include <cctype>

#include "fcmg/quadrature.hpp"

namespace fcmg {

LevelSet LevelSet::half_plane(Vec2 normal, double offset) {
  const double len = norm(normal);
  if (!(len > 0.0)) throw InputError("half-plane normal must be nonzero");
  const Vec2 n = (1.0 / len) * normal;
  const double c = offset / len;
  return LevelSet([n, c](Vec2 p) { return dot(n, p) - c; });
}

LevelSet LevelSet::rectangle(BBox box) {
  return LevelSet([box](Vec2 p) {
    const Vec2 c = box.center();
    const double hx = 0.5 * box.width(), hy = 0.5 * box.height();
    const double dx = std::abs(p.x - c.x) - hx;
    const double dy = std::abs(p.y - c.y) - hy;
    const double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
    return outside + std::min(std::max(dx, dy), 0.0);
  });
}

LevelSet LevelSet::disk(Vec2 center, double radius) {
  if (!(radius > 0.0)) throw InputError("disk radius must be positive");
  return LevelSet([center, radius](Vec2 p) { return norm(p - center) - radius; });
}

LevelSet operator|(const LevelSet& a, const LevelSet& b) {
  return LevelSet([a, b](Vec2 p) { return std::min(a(p), b(p)); });
}

LevelSet operator&(const LevelSet& a, const LevelSet& b) {
  return LevelSet([a, b](Vec2 p) { return std::max(a(p), b(p)); });
}

LevelSet operator!(const LevelSet& a) {
  return LevelSet([a](Vec2 p) { return -a(p); });
}

namespace {

class CsgParser {
public:
  CsgParser(const std::string& s, const std::map<std::string, LevelSet>& prims)
      : s_(s), prims_(prims) {}

  LevelSet parse() {
    LevelSet r = parse_union();
    skip();
    if (pos_ != s_.size()) fail("trailing input");
    return r;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("CSG expression \"" + s_ + "\": " + msg);
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
  LevelSet parse_union() {
    LevelSet r = parse_intersection();
    while (accept('|')) r = r | parse_intersection();
    return r;
  }
  LevelSet parse_intersection() {
    LevelSet r = parse_unary();
    while (accept('&')) r = r & parse_unary();
    return r;
  }
  LevelSet parse_unary() {
    if (accept('!')) return !parse_unary();
    if (accept('(')) {
      LevelSet r = parse_union();
      if (!accept(')')) fail("expected ')'");
      return r;
    }
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected a primitive name");
    const std::string name = s_.substr(start, pos_ - start);
    auto it = prims_.find(name);
    if (it == prims_.end()) fail("unknown primitive '" + name + "'");
    return it->second;
  }

  const std::string& s_;
  const std::map<std::string, LevelSet>& prims_;
  std::size_t pos_ = 0;
};

int sign_of(double phi) { return phi < 0.0 ? -1 : 1; }

void append_gauss(std::vector<VolumePoint>& out, const BBox& b, int order, double alpha,
                  const ImplicitDomain* per_point, double alpha_out) {
  const GaussRule& g = gauss_rule(order);
  const double area = b.area();
  for (int jy = 0; jy < g.n; ++jy) {
    for (int jx = 0; jx < g.n; ++jx) {
      VolumePoint q;
      q.x = {b.lo.x + g.points[jx] * b.width(), b.lo.y + g.points[jy] * b.height()};
      q.w = g.weights[jx] * g.weights[jy] * area;
      q.alpha = per_point ? (per_point->inside(q.x) ? 1.0 : alpha_out) : alpha;
      out.push_back(q);
    }
  }
}

void volume_recurse(const ImplicitDomain& domain, const BBox& b, int depth, int order,
                    double alpha_out, std::vector<VolumePoint>& out) {
  const CellClass cls = classify_cell(domain, b);
  if (cls == CellClass::Inside) return append_gauss(out, b, order, 1.0, nullptr, alpha_out);
  if (cls == CellClass::Outside) return append_gauss(out, b, order, alpha_out, nullptr, alpha_out);
  if (depth == 0) return append_gauss(out, b, order, 0.0, &domain, alpha_out);
  for (int q = 0; q < 4; ++q) volume_recurse(domain, b.quadrant(q), depth - 1, order, alpha_out, out);
}

Vec2 edge_root(const LevelSet& phi, Vec2 a, Vec2 b) {
  const int sa = sign_of(phi(a));
  for (int it = 0; it < 200 && norm(b - a) > 1e-12; ++it) {
    const Vec2 m = 0.5 * (a + b);
    if (sign_of(phi(m)) == sa) a = m; else b = m;
  }
  return 0.5 * (a + b);
}

/// Edge roots of a subcell in cyclic edge order (bottom, right, top, left).
std::vector<Vec2> subcell_roots(const LevelSet& phi, const BBox& b) {
  const std::array<Vec2, 4> c{b.lo, Vec2{b.hi.x, b.lo.y}, b.hi, Vec2{b.lo.x, b.hi.y}};
  std::array<int, 4> s{};
  for (int k = 0; k < 4; ++k) s[k] = sign_of(phi(c[k]));
  std::vector<Vec2> roots;
  for (int k = 0; k < 4; ++k) {
    const int l = (k + 1) % 4;
    if (s[k] != s[l]) roots.push_back(edge_root(phi, c[k], c[l]));
  }
  return roots;
}

void append_segment(const ImplicitDomain& domain, Vec2 a, Vec2 b, int order, double fd_step,
                    std::vector<InterfacePoint>& out) {
  const double len = norm(b - a);
  if (len <= 0.0) return;
  const GaussRule& g = gauss_rule(order);
  for (int k = 0; k < g.n; ++k) {
    InterfacePoint q;
    q.x = a + g.points[k] * (b - a);
    q.w = g.weights[k] * len;
    const Vec2 grad = level_set_gradient(domain.phi, q.x, fd_step);
    q.normal = (1.0 / norm(grad)) * grad;
    q.immersed = true;
    q.tag = domain.tag_of(q.x, true);
    out.push_back(q);
  }
}

void interface_terminal(const ImplicitDomain& domain, const BBox& b, int order, double fd_step,
                        bool may_split, InterfaceQuadrature& out) {
  std::vector<Vec2> roots = subcell_roots(domain.phi, b);
  if (roots.size() == 2) {
    append_segment(domain, roots[0], roots[1], order, fd_step, out.points);
    return;
  }
  if (roots.size() > 2) {
    if (may_split) {
      for (int q = 0; q < 4; ++q) {
        const BBox s = b.quadrant(q);
        if (classify_cell(domain, s) == CellClass::Cut)
          interface_terminal(domain, s, order, fd_step, false, out);
      }
      return;
    }
    ++out.degenerate_subcells;
    for (std::size_t k = 0; k + 1 < roots.size(); k += 2)
      append_segment(domain, roots[k], roots[k + 1], order, fd_step, out.points);
  }
}

void interface_recurse(const ImplicitDomain& domain, const BBox& b, int depth, int order,
                       double fd_step, InterfaceQuadrature& out) {
  if (classify_cell(domain, b) != CellClass::Cut) return;
  if (depth == 0) return interface_terminal(domain, b, order, fd_step, true, out);
  for (int q = 0; q < 4; ++q) interface_recurse(domain, b.quadrant(q), depth - 1, order, fd_step, out);
}

void boundary_recurse(const ImplicitDomain& domain, Vec2 a, Vec2 b, Vec2 normal, int depth,
                      int order, std::vector<InterfacePoint>& out) {
  int neg = 0, pos = 0;
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0;
    (domain.inside(a + t * (b - a)) ? neg : pos)++;
  }
  if (neg == 0) return;
  if (pos > 0 && depth > 0) {
    const Vec2 m = 0.5 * (a + b);
    boundary_recurse(domain, a, m, normal, depth - 1, order, out);
    boundary_recurse(domain, m, b, normal, depth - 1, order, out);
    return;
  }
  const GaussRule& g = gauss_rule(order);
  const double len = norm(b - a);
  for (int k = 0; k < g.n; ++k) {
    InterfacePoint q;
    q.x = a + g.points[k] * (b - a);
    if (pos > 0 && !domain.inside(q.x)) continue;
    q.w = g.weights[k] * len;
    q.normal = normal;
    q.immersed = false;
    q.tag = domain.tag_of(q.x, false);
    out.push_back(q);
  }
}

} // namespace

LevelSet parse_csg(const std::string& expr, const std::map<std::string, LevelSet>& primitives) {
  return CsgParser(expr, primitives).parse();
}

int ImplicitDomain::tag_of(Vec2 p, bool immersed) const {
  for (std::size_t k = 0; k < conditions.size(); ++k) {
    if (conditions[k].applies && conditions[k].applies(p, immersed)) return static_cast<int>(k);
  }
  return -1;
}

CellClass classify_cell(const ImplicitDomain& domain, const BBox& cell) {
  int neg = 0, pos = 0;
  auto probe = [&](double tx, double ty) {
    const Vec2 p{cell.lo.x + tx * cell.width(), cell.lo.y + ty * cell.height()};
    const double v = domain.phi(p);
    if (v < 0.0) ++neg;
    else if (v > 0.0) ++pos;
    else { ++neg; ++pos; }
  };
  for (double ty : {0.0, 1.0})
    for (double tx : {0.0, 1.0}) probe(tx, ty);
  for (int jy = 0; jy < 4; ++jy)
    for (int jx = 0; jx < 4; ++jx) probe((jx + 0.5) / 4.0, (jy + 0.5) / 4.0);
  for (int k = 1; k <= 4; ++k) {
    const double t = k / 5.0;
    probe(t, 0.0);
    probe(t, 1.0);
    probe(0.0, t);
    probe(1.0, t);
  }
  if (pos == 0) return CellClass::Inside;
  if (neg == 0) return CellClass::Outside;
  return CellClass::Cut;
}

std::vector<VolumePoint> volume_quadrature(const ImplicitDomain& domain, const BBox& cell,
                                           int depth, int order, double alpha_out) {
  if (depth < 0) throw InputError("integration depth must be non-negative");
  std::vector<VolumePoint> out;
  volume_recurse(domain, cell, depth, order, alpha_out, out);
  return out;
}

InterfaceQuadrature interface_quadrature(const ImplicitDomain& domain, const BBox& cell,
                                         int depth, int order) {
  if (depth < 0) throw InputError("integration depth must be non-negative");
  InterfaceQuadrature out;
  interface_recurse(domain, cell, depth, order, 1e-8 * cell.diameter(), out);
  return out;
}

std::vector<InterfacePoint> embedding_boundary_quadrature(const ImplicitDomain& domain,
                                                          const BBox& cell, int depth,
                                                          int order) {
  std::vector<InterfacePoint> out;
  const BBox& e = domain.embedding;
  const double tx = 1e-12 * e.width(), ty = 1e-12 * e.height();
  const Vec2 c00 = cell.lo, c10{cell.hi.x, cell.lo.y}, c01{cell.lo.x, cell.hi.y}, c11 = cell.hi;
  if (std::abs(cell.lo.y - e.lo.y) <= ty) boundary_recurse(domain, c00, c10, {0, -1}, depth, order, out);
  if (std::abs(cell.hi.x - e.hi.x) <= tx) boundary_recurse(domain, c10, c11, {1, 0}, depth, order, out);
  if (std::abs(cell.hi.y - e.hi.y) <= ty) boundary_recurse(domain, c01, c11, {0, 1}, depth, order, out);
  if (std::abs(cell.lo.x - e.lo.x) <= tx) boundary_recurse(domain, c00, c01, {-1, 0}, depth, order, out);
  return out;
}

Vec2 level_set_gradient(const LevelSet& phi, Vec2 p, double step) {
  const double gx = (phi({p.x + step, p.y}) - phi({p.x - step, p.y})) / (2.0 * step);
  const double gy = (phi({p.x, p.y + step}) - phi({p.x, p.y - step})) / (2.0 * step);
  return {gx, gy};
}

} // namespace fcmg
