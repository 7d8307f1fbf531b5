// SPDX-License-Identifier: Apache-2.0
#include "fcmg/discretization.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fcmg/quadrature.hpp"

namespace fcmg {

DofMap::DofMap(const QuadtreeMesh& mesh) {
  const std::size_t nn = mesh.num_nodes();
  regular_.assign(nn, -1);
  for (std::size_t n = 0; n < nn; ++n) {
    if (!mesh.is_hanging(n)) regular_[n] = static_cast<int>(n_regular_++);
  }
  std::vector<std::vector<std::pair<int, double>>> exp(nn);
  for (std::size_t n = 0; n < nn; ++n) {
    if (regular_[n] >= 0) exp[n] = {{regular_[n], 1.0}};
  }
  // Resolve constraints until every hanging node is expressed in regular
  // nodes; masters of a balanced mesh are regular, so one pass normally suffices.
  const auto& cons = mesh.hanging_constraints();
  std::vector<bool> done(nn, false);
  for (std::size_t n = 0; n < nn; ++n) done[n] = regular_[n] >= 0;
  for (std::size_t pass = 0, remaining = cons.size(); remaining > 0; ++pass) {
    if (pass > cons.size()) throw InputError("cyclic hanging-node constraints");
    remaining = 0;
    for (const auto& h : cons) {
      if (done[h.node]) continue;
      if (!done[h.masters[0]] || !done[h.masters[1]]) {
        ++remaining;
        continue;
      }
      std::vector<std::pair<int, double>> e;
      for (int m = 0; m < 2; ++m)
        for (auto [r, w] : exp[h.masters[m]]) e.emplace_back(r, w * h.weights[m]);
      std::sort(e.begin(), e.end());
      std::vector<std::pair<int, double>> merged;
      for (auto& p : e) {
        if (!merged.empty() && merged.back().first == p.first) merged.back().second += p.second;
        else merged.push_back(p);
      }
      exp[h.node] = std::move(merged);
      done[h.node] = true;
    }
  }
  offsets_.assign(nn + 1, 0);
  for (std::size_t n = 0; n < nn; ++n) offsets_[n + 1] = offsets_[n] + exp[n].size();
  expansion_.reserve(offsets_[nn]);
  for (auto& e : exp) expansion_.insert(expansion_.end(), e.begin(), e.end());
}

std::array<double, 3> DofMap::nodal_values(const Vector& x, std::size_t node) const {
  std::array<double, 3> v{0, 0, 0};
  for (auto [r, w] : expansion(node)) {
    v[0] += w * x[velocity_dof(r, 0)];
    v[1] += w * x[velocity_dof(r, 1)];
    v[2] += w * x[pressure_dof(r)];
  }
  return v;
}

void PhysicsParams::validate() const {
  if (!(eta > 0)) throw ConfigError("viscosity must be positive");
  if (!(nitsche_factor > 0)) throw ConfigError("Nitsche factor must be positive");
  if (!(beta > 0)) throw ConfigError("pressure stabilization beta must be positive");
  if (!(alpha_out > 0 && alpha_out <= 1)) throw ConfigError("alpha_out must lie in (0, 1]");
  if (integration_depth < 0) throw ConfigError("integration depth must be non-negative");
}

namespace {
double nitsche_parameter(const ImplicitDomain& domain, const BBox& b,
                         const std::vector<VolumePoint>& volume,
                         const std::vector<InterfacePoint>& boundary, const PhysicsParams& params);
} // namespace

LevelGeometry LevelGeometry::compute(const QuadtreeMesh& mesh, const ImplicitDomain& domain,
                                     const PhysicsParams& params) {
  LevelGeometry g;
  const std::size_t nc = mesh.num_leaves();
  g.classes.resize(nc);
  g.inside_fraction.resize(nc);
  g.volume.resize(nc);
  g.boundary.resize(nc);
  g.nitsche.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const BBox b = mesh.bbox(mesh.leaf(c));
    g.classes[c] = classify_cell(domain, b);
    g.volume[c] = volume_quadrature(domain, b, params.integration_depth, params.volume_order,
                                    params.alpha_out);
    double inside = 0.0;
    for (const auto& q : g.volume[c])
      if (q.alpha == 1.0) inside += q.w;
    g.inside_fraction[c] = inside / b.area();
    if (g.classes[c] == CellClass::Cut) {
      auto iq = interface_quadrature(domain, b, params.integration_depth, params.segment_order);
      g.degenerate_subcells += iq.degenerate_subcells;
      g.boundary[c] = std::move(iq.points);
    }
    auto fitted = embedding_boundary_quadrature(domain, b, params.integration_depth,
                                                params.segment_order);
    g.boundary[c].insert(g.boundary[c].end(), fitted.begin(), fitted.end());
    g.nitsche[c] = nitsche_parameter(domain, b, g.volume[c], g.boundary[c], params);
  }
  return g;
}

std::size_t LevelGeometry::num_cut_cells() const {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), CellClass::Cut));
}

SparseMatrix SaddleSystem::block(int row_block, int col_block) const {
  const Index r0 = row_block == 0 ? 0 : n_u, rn = row_block == 0 ? n_u : n_p;
  const Index c0 = col_block == 0 ? 0 : n_u, cn = col_block == 0 ? n_u : n_p;
  return matrix.block(r0, c0, rn, cn);
}

namespace {

/// Bilinear shape functions on a rectangle, corner order (lo,lo), (hi,lo),
/// (lo,hi), (hi,hi).
struct Shape {
  std::array<double, 4> N;
  std::array<double, 4> dx;
  std::array<double, 4> dy;
};

Shape shape_at(const BBox& b, Vec2 p) {
  const double hx = b.width(), hy = b.height();
  const double s = (p.x - b.lo.x) / hx, t = (p.y - b.lo.y) / hy;
  Shape sh;
  sh.N = {(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t};
  sh.dx = {-(1 - t) / hx, (1 - t) / hx, -t / hx, t / hx};
  sh.dy = {-(1 - s) / hy, -s / hy, (1 - s) / hy, s / hy};
  return sh;
}

double nitsche_parameter(const ImplicitDomain& domain, const BBox& b,
                         const std::vector<VolumePoint>& volume,
                         const std::vector<InterfacePoint>& boundary, const PhysicsParams& params) {
  const double base = params.nitsche_factor * params.eta / b.diameter();
  Eigen::Matrix4d G = Eigen::Matrix4d::Zero();
  bool dirichlet = false;
  for (const auto& q : boundary) {
    if (q.tag < 0 || domain.conditions[static_cast<std::size_t>(q.tag)].type != BcType::Dirichlet)
      continue;
    dirichlet = true;
    const Shape s = shape_at(b, q.x);
    Eigen::Vector4d dn;
    for (int a = 0; a < 4; ++a) dn[a] = q.normal.x * s.dx[a] + q.normal.y * s.dy[a];
    G += q.w * dn * dn.transpose();
  }
  if (!dirichlet) return base;
  Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
  for (const auto& q : volume) {
    const Shape s = shape_at(b, q.x);
    Eigen::Vector4d dx, dy;
    for (int a = 0; a < 4; ++a) {
      dx[a] = s.dx[a];
      dy[a] = s.dy[a];
    }
    K += q.alpha * q.w * (dx * dx.transpose() + dy * dy.transpose());
  }
  // Orthonormal basis of the complement of the constants, which both forms annihilate.
  Eigen::Matrix<double, 4, 3> Q;
  Q << 1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, 1;
  Q *= 0.5;
  const Eigen::Matrix3d Kq = Q.transpose() * K * Q;
  const Eigen::Matrix3d Gq = Q.transpose() * G * Q;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix3d> eig(Gq, Kq);
  if (eig.info() != Eigen::Success) throw AssemblyError("Nitsche eigenvalue estimate failed");
  return std::max(base, 4.0 * params.eta * eig.eigenvalues().maxCoeff());
}

using LocalMatrix = Eigen::Matrix<double, 12, 12>;
using LocalVector = Eigen::Matrix<double, 12, 1>;

class Scatter {
public:
  Scatter(const QuadtreeMesh& mesh, const DofMap& dofs) : mesh_(mesh), dofs_(dofs) {}

  void global_map(std::size_t c) {
    const auto& nodes = mesh_.cell_nodes(c);
    for (int l = 0; l < 12; ++l) {
      const int field = l / 4;
      map_[l].clear();
      for (auto [r, w] : dofs_.expansion(nodes[l % 4])) {
        const Index g = field == 2 ? dofs_.pressure_dof(r) : dofs_.velocity_dof(r, field);
        map_[l].emplace_back(g, w);
      }
    }
  }

  void add(const LocalMatrix& K, std::vector<Eigen::Triplet<double>>& trip) const {
    for (int a = 0; a < 12; ++a)
      for (int b = 0; b < 12; ++b) {
        if (K(a, b) == 0.0) continue;
        for (auto [ga, wa] : map_[a])
          for (auto [gb, wb] : map_[b]) trip.emplace_back(ga, gb, wa * wb * K(a, b));
      }
  }

  void add(const LocalVector& F, Vector& rhs) const {
    for (int a = 0; a < 12; ++a)
      for (auto [ga, wa] : map_[a]) rhs[ga] += wa * F[a];
  }

  /// Local nodal values of (u_x, u_y) on the cell corners.
  std::array<std::array<double, 4>, 2> velocity(const Vector& x, std::size_t c) const {
    std::array<std::array<double, 4>, 2> u{};
    const auto& nodes = mesh_.cell_nodes(c);
    for (int a = 0; a < 4; ++a) {
      const auto v = dofs_.nodal_values(x, nodes[a]);
      u[0][a] = v[0];
      u[1][a] = v[1];
    }
    return u;
  }

private:
  const QuadtreeMesh& mesh_;
  const DofMap& dofs_;
  std::array<std::vector<std::pair<Index, double>>, 12> map_;
};

std::string describe(Vec2 p) {
  std::ostringstream os;
  os << std::setprecision(10) << "(" << p.x << ", " << p.y << ")";
  return os.str();
}

} // namespace

Discretization::Discretization(const QuadtreeMesh& mesh, const ImplicitDomain& domain,
                               PhysicsParams params)
    : mesh_(&mesh), domain_(&domain), params_(std::move(params)), dofs_(mesh) {
  params_.validate();
  geometry_ = LevelGeometry::compute(mesh, domain, params_);
}

const SaddleSystem& Discretization::stokes() const {
  if (stokes_) return *stokes_;
  const QuadtreeMesh& mesh = *mesh_;
  const Index n = dofs_.n_x();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.num_leaves() * 144 * 2);
  Vector rhs = Vector::Zero(n);
  Scatter scatter(mesh, dofs_);
  const double eta = params_.eta;
  const GaussRule& g2 = gauss_rule(2);

  for (std::size_t c = 0; c < mesh.num_leaves(); ++c) {
    const BBox b = mesh.bbox(mesh.leaf(c));
    const double h = b.diameter();
    LocalMatrix K = LocalMatrix::Zero();
    LocalVector F = LocalVector::Zero();

    for (const auto& q : geometry_.volume[c]) {
      const Shape s = shape_at(b, q.x);
      const double aw = q.alpha * q.w;
      Vec2 f{0, 0};
      if (params_.body_force) f = params_.body_force(q.x);
      for (int a = 0; a < 4; ++a) {
        for (int bb = 0; bb < 4; ++bb) {
          const double visc = eta * aw * (s.dx[a] * s.dx[bb] + s.dy[a] * s.dy[bb]);
          K(a, bb) += visc;
          K(4 + a, 4 + bb) += visc;
          const double bx = -aw * s.dx[a] * s.N[bb];
          const double by = -aw * s.dy[a] * s.N[bb];
          K(a, 8 + bb) += bx;
          K(4 + a, 8 + bb) += by;
          K(8 + bb, a) += bx;
          K(8 + bb, 4 + a) += by;
        }
        F[a] += aw * s.N[a] * f.x;
        F[4 + a] += aw * s.N[a] * f.y;
      }
    }

    if (params_.alpha_weighted_stabilization) {
      for (const auto& q : geometry_.volume[c]) {
        const Shape s = shape_at(b, q.x);
        const double w = q.alpha * q.w;
        for (int a = 0; a < 4; ++a)
          for (int bb = 0; bb < 4; ++bb)
            K(8 + a, 8 + bb) -= params_.beta * h * h * w * (s.dx[a] * s.dx[bb] + s.dy[a] * s.dy[bb]);
      }
    } else {
      for (int jy = 0; jy < g2.n; ++jy)
        for (int jx = 0; jx < g2.n; ++jx) {
          const Vec2 p{b.lo.x + g2.points[jx] * b.width(), b.lo.y + g2.points[jy] * b.height()};
          const double w = g2.weights[jx] * g2.weights[jy] * b.area();
          const Shape s = shape_at(b, p);
          for (int a = 0; a < 4; ++a)
            for (int bb = 0; bb < 4; ++bb)
              K(8 + a, 8 + bb) -= params_.beta * h * h * w * (s.dx[a] * s.dx[bb] + s.dy[a] * s.dy[bb]);
        }
    }

    const double lambda = geometry_.nitsche[c];
    for (const auto& q : geometry_.boundary[c]) {
      if (q.tag < 0)
        throw AssemblyError("boundary point " + describe(q.x) + " carries no boundary condition");
      const BoundaryCondition& bc = domain_->conditions[static_cast<std::size_t>(q.tag)];
      const Shape s = shape_at(b, q.x);
      const Vec2 value = bc.value ? bc.value(q.x) : Vec2{0, 0};
      if (bc.type == BcType::Neumann) {
        for (int a = 0; a < 4; ++a) {
          F[a] += q.w * s.N[a] * value.x;
          F[4 + a] += q.w * s.N[a] * value.y;
        }
        continue;
      }
      const Vec2 nrm = q.normal;
      std::array<double, 4> dn{};
      for (int a = 0; a < 4; ++a) dn[a] = nrm.x * s.dx[a] + nrm.y * s.dy[a];
      for (int a = 0; a < 4; ++a) {
        for (int bb = 0; bb < 4; ++bb) {
          const double v = q.w * (-eta * s.N[a] * dn[bb] - eta * dn[a] * s.N[bb] +
                                  lambda * s.N[a] * s.N[bb]);
          K(a, bb) += v;
          K(4 + a, 4 + bb) += v;
          const double bx = q.w * s.N[a] * nrm.x * s.N[bb];
          const double by = q.w * s.N[a] * nrm.y * s.N[bb];
          K(a, 8 + bb) += bx;
          K(4 + a, 8 + bb) += by;
          K(8 + bb, a) += bx;
          K(8 + bb, 4 + a) += by;
        }
        const double t = q.w * (-eta * dn[a] + lambda * s.N[a]);
        F[a] += t * value.x;
        F[4 + a] += t * value.y;
        F[8 + a] += q.w * s.N[a] * (nrm.x * value.x + nrm.y * value.y);
      }
    }
    scatter.global_map(c);
    scatter.add(K, trip);
    scatter.add(F, rhs);
  }

  SaddleSystem sys;
  sys.n_u = dofs_.n_u();
  sys.n_p = dofs_.n_p();
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trip.begin(), trip.end());
  sys.matrix.makeCompressed();
  sys.rhs = std::move(rhs);
  stokes_ = std::move(sys);
  return *stokes_;
}

double Discretization::convection_weight(const VolumePoint& q) const {
  if (q.alpha == 1.0) return q.w;
  return params_.fictitious_convection ? q.alpha * q.w : 0.0;
}

SparseMatrix Discretization::convection_matrix(const Vector& state, bool reactive) const {
  const QuadtreeMesh& mesh = *mesh_;
  const Index n = dofs_.n_x();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.num_leaves() * 64 * (reactive ? 4 : 2));
  Scatter scatter(mesh, dofs_);
  const double scale = params_.convection;
  for (std::size_t c = 0; c < mesh.num_leaves(); ++c) {
    const BBox b = mesh.bbox(mesh.leaf(c));
    const auto u = scatter.velocity(state, c);
    LocalMatrix K = LocalMatrix::Zero();
    for (const auto& q : geometry_.volume[c]) {
      const Shape s = shape_at(b, q.x);
      const double aw = scale * convection_weight(q);
      if (!reactive) {
        double ux = 0, uy = 0;
        for (int a = 0; a < 4; ++a) {
          ux += u[0][a] * s.N[a];
          uy += u[1][a] * s.N[a];
        }
        for (int a = 0; a < 4; ++a)
          for (int bb = 0; bb < 4; ++bb) {
            const double v = aw * s.N[a] * (ux * s.dx[bb] + uy * s.dy[bb]);
            K(a, bb) += v;
            K(4 + a, 4 + bb) += v;
          }
      } else {
        // grad[i][j] = d u_i / d x_j
        double grad[2][2] = {{0, 0}, {0, 0}};
        for (int a = 0; a < 4; ++a)
          for (int i = 0; i < 2; ++i) {
            grad[i][0] += u[i][a] * s.dx[a];
            grad[i][1] += u[i][a] * s.dy[a];
          }
        for (int a = 0; a < 4; ++a)
          for (int bb = 0; bb < 4; ++bb) {
            const double nn = aw * s.N[a] * s.N[bb];
            for (int i = 0; i < 2; ++i)
              for (int j = 0; j < 2; ++j) K(4 * i + a, 4 * j + bb) += nn * grad[i][j];
          }
      }
    }
    scatter.global_map(c);
    scatter.add(K, trip);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

Vector Discretization::convection_vector(const Vector& state) const {
  const QuadtreeMesh& mesh = *mesh_;
  Vector out = Vector::Zero(dofs_.n_x());
  Scatter scatter(mesh, dofs_);
  const double scale = params_.convection;
  for (std::size_t c = 0; c < mesh.num_leaves(); ++c) {
    const BBox b = mesh.bbox(mesh.leaf(c));
    const auto u = scatter.velocity(state, c);
    LocalVector F = LocalVector::Zero();
    for (const auto& q : geometry_.volume[c]) {
      const Shape s = shape_at(b, q.x);
      const double aw = scale * convection_weight(q);
      double val[2] = {0, 0}, gx[2] = {0, 0}, gy[2] = {0, 0};
      for (int a = 0; a < 4; ++a)
        for (int i = 0; i < 2; ++i) {
          val[i] += u[i][a] * s.N[a];
          gx[i] += u[i][a] * s.dx[a];
          gy[i] += u[i][a] * s.dy[a];
        }
      for (int a = 0; a < 4; ++a)
        for (int i = 0; i < 2; ++i) F[4 * i + a] += aw * s.N[a] * (val[0] * gx[i] + val[1] * gy[i]);
    }
    scatter.global_map(c);
    scatter.add(F, out);
  }
  return out;
}

SaddleSystem Discretization::newton(const Vector& state) const {
  const SaddleSystem& s = stokes();
  SaddleSystem out;
  out.n_u = s.n_u;
  out.n_p = s.n_p;
  if (params_.convection == 0.0) {
    out.matrix = s.matrix;
  } else {
    out.matrix = s.matrix + convection_matrix(state, false) + convection_matrix(state, true);
  }
  out.matrix.makeCompressed();
  out.rhs = residual(state);
  return out;
}

SaddleSystem Discretization::picard(const Vector& state) const {
  const SaddleSystem& s = stokes();
  SaddleSystem out;
  out.n_u = s.n_u;
  out.n_p = s.n_p;
  if (params_.convection == 0.0) out.matrix = s.matrix;
  else out.matrix = s.matrix + convection_matrix(state, false);
  out.matrix.makeCompressed();
  out.rhs = s.rhs;
  return out;
}

Vector Discretization::residual(const Vector& state) const {
  const SaddleSystem& s = stokes();
  Vector r = s.rhs - s.matrix * state;
  if (params_.convection != 0.0) r -= convection_vector(state);
  return r;
}

std::array<double, 3> Discretization::evaluate(const Vector& state, Vec2 p) const {
  const std::size_t c = mesh_->locate(p);
  const BBox b = mesh_->bbox(mesh_->leaf(c));
  const Shape s = shape_at(b, p);
  std::array<double, 3> out{0, 0, 0};
  const auto& nodes = mesh_->cell_nodes(c);
  for (int a = 0; a < 4; ++a) {
    const auto v = dofs_.nodal_values(state, nodes[a]);
    for (int k = 0; k < 3; ++k) out[k] += s.N[a] * v[k];
  }
  return out;
}

Vector Discretization::interpolate(const std::function<std::array<double, 3>(Vec2)>& field) const {
  Vector x = Vector::Zero(dofs_.n_x());
  for (std::size_t n = 0; n < mesh_->num_nodes(); ++n) {
    const int r = dofs_.regular_index(n);
    if (r < 0) continue;
    const auto v = field(mesh_->node_point(n));
    x[dofs_.velocity_dof(r, 0)] = v[0];
    x[dofs_.velocity_dof(r, 1)] = v[1];
    x[dofs_.pressure_dof(r)] = v[2];
  }
  return x;
}

SaddleSystem assemble_stokes(const Discretization& disc) { return disc.stokes(); }
SaddleSystem assemble_newton(const Discretization& disc, const Vector& state) { return disc.newton(state); }
SaddleSystem assemble_picard(const Discretization& disc, const Vector& state) { return disc.picard(state); }

double residual_norm(const SaddleSystem& system, const Vector& x, bool relative) {
  if (x.size() != system.rhs.size() || system.matrix.cols() != x.size())
    throw InputError("residual_norm: dimension mismatch");
  const double r = (system.rhs - system.matrix * x).norm();
  if (!relative) return r;
  const double b = system.rhs.norm();
  return b > 0.0 ? r / b : r;
}

void write_matrix_market(std::ostream& os, const SparseMatrix& m) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  os << std::setprecision(17);
  for (Index r = 0; r < m.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(m, r); it; ++it)
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

void write_vector(std::ostream& os, const Vector& v) {
  os << std::setprecision(17);
  for (Index k = 0; k < v.size(); ++k) os << v[k] << '\n';
}

} // namespace fcmg
