// SPDX-License-Identifier: Apache-2.0
#include "fcmg/mesh.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace fcmg {

namespace {

constexpr std::array<std::array<int, 2>, 4> kDirections{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

bool less_msb(std::uint64_t a, std::uint64_t b) { return a < b && a < (a ^ b); }

/// Morton order of two lattice points (interleaving bits of x and y, y major).
bool morton_less(std::uint64_t ax, std::uint64_t ay, std::uint64_t bx, std::uint64_t by) {
  if (less_msb(ay ^ by, ax ^ bx)) return ax < bx;
  return ay < by;
}

using LeafSet = std::unordered_set<std::uint64_t>;

bool in_domain_(const CellKey& k, int nx, int ny) {
  return k.level >= 0 && k.i >= 0 && k.j >= 0 &&
         k.i < (static_cast<std::int64_t>(nx) << k.level) &&
         k.j < (static_cast<std::int64_t>(ny) << k.level);
}

std::optional<CellKey> covering_in(const LeafSet& leaves, CellKey k, int nx, int ny) {
  if (!in_domain_(k, nx, ny)) return std::nullopt;
  for (; k.level >= 0; k = k.parent()) {
    if (leaves.contains(k.id())) return k;
    if (k.level == 0) break;
  }
  return std::nullopt;
}

void balance_in_place(LeafSet& leaves, int nx, int ny) {
  std::deque<std::uint64_t> queue(leaves.begin(), leaves.end());
  std::sort(queue.begin(), queue.end());
  while (!queue.empty()) {
    const std::uint64_t id = queue.front();
    queue.pop_front();
    if (!leaves.contains(id)) continue;
    const CellKey c = CellKey::from_id(id);
    for (auto [di, dj] : kDirections) {
      const CellKey n{c.level, c.i + di, c.j + dj};
      auto cover = covering_in(leaves, n, nx, ny);
      if (cover && cover->level < c.level - 1) {
        leaves.erase(cover->id());
        for (int q = 0; q < 4; ++q) {
          leaves.insert(cover->child(q).id());
          queue.push_back(cover->child(q).id());
        }
        queue.push_back(id);
        break;
      }
    }
  }
}

std::vector<CellKey> to_keys(const LeafSet& leaves) {
  std::vector<CellKey> keys;
  keys.reserve(leaves.size());
  for (auto id : leaves) keys.push_back(CellKey::from_id(id));
  return keys;
}

LeafSet to_set(const QuadtreeMesh& mesh) {
  LeafSet s;
  for (const auto& k : mesh.leaves()) s.insert(k.id());
  return s;
}

} // namespace

QuadtreeMesh::QuadtreeMesh(BBox root, int nx, int ny, std::vector<CellKey> leaves)
    : root_(root), nx_(nx), ny_(ny), leaves_(std::move(leaves)) {
  if (nx < 1 || ny < 1) throw InputError("root array must be at least 1x1");
  if (!(root.width() > 0 && root.height() > 0)) throw InputError("empty root box");
  for (const auto& k : leaves_) {
    if (!in_domain(k) || k.level > kMaxLevel)
      throw InputError("leaf outside the root array");
  }
  std::sort(leaves_.begin(), leaves_.end(), [](const CellKey& a, const CellKey& b) {
    const int sa = kMaxLevel - a.level;
    const int sb = kMaxLevel - b.level;
    const auto ax = static_cast<std::uint64_t>((2 * a.i + 1) << sa);
    const auto ay = static_cast<std::uint64_t>((2 * a.j + 1) << sa);
    const auto bx = static_cast<std::uint64_t>((2 * b.i + 1) << sb);
    const auto by = static_cast<std::uint64_t>((2 * b.j + 1) << sb);
    return morton_less(ax, ay, bx, by);
  });
  leaf_index_.reserve(leaves_.size());
  for (std::size_t c = 0; c < leaves_.size(); ++c) {
    if (!leaf_index_.emplace(leaves_[c].id(), c).second)
      throw InputError("duplicate leaf");
    max_level_ = std::max(max_level_, leaves_[c].level);
  }
  build_topology();
}

QuadtreeMesh QuadtreeMesh::uniform(BBox root, int nx, int ny, int level) {
  std::vector<CellKey> leaves;
  const std::int64_t mx = static_cast<std::int64_t>(nx) << level;
  const std::int64_t my = static_cast<std::int64_t>(ny) << level;
  leaves.reserve(static_cast<std::size_t>(mx * my));
  for (std::int64_t j = 0; j < my; ++j)
    for (std::int64_t i = 0; i < mx; ++i) leaves.push_back({level, i, j});
  return QuadtreeMesh(root, nx, ny, std::move(leaves));
}

bool QuadtreeMesh::in_domain(const CellKey& k) const { return in_domain_(k, nx_, ny_); }

std::optional<std::size_t> QuadtreeMesh::leaf_index(const CellKey& k) const {
  auto it = leaf_index_.find(k.id());
  if (it == leaf_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<CellKey> QuadtreeMesh::covering_leaf(const CellKey& k) const {
  if (!in_domain(k)) return std::nullopt;
  for (CellKey a = k; a.level >= 0; a = a.parent()) {
    if (leaf_index_.contains(a.id())) return a;
    if (a.level == 0) break;
  }
  return std::nullopt;
}

Vec2 QuadtreeMesh::point(const NodeKey& k) const {
  return {root_.lo.x + root_.width() * (static_cast<double>(k.I) / static_cast<double>(lattice_x())),
          root_.lo.y + root_.height() * (static_cast<double>(k.J) / static_cast<double>(lattice_y()))};
}

BBox QuadtreeMesh::bbox(const CellKey& k) const {
  const int s = kMaxLevel - k.level;
  return {point({k.i << s, k.j << s}), point({(k.i + 1) << s, (k.j + 1) << s})};
}

Cell QuadtreeMesh::cell(const CellKey& k) const {
  Cell c;
  c.id = k.id();
  c.level = k.level;
  c.bbox = bbox(k);
  if (k.level > 0) c.parent = k.parent().id();
  for (int q = 0; q < 4; ++q) c.children[q] = k.child(q).id();
  c.leaf = is_leaf(k);
  return c;
}

std::array<NodeKey, 4> QuadtreeMesh::corner_keys(const CellKey& k) const {
  const int s = kMaxLevel - k.level;
  const std::int64_t I0 = k.i << s, I1 = (k.i + 1) << s;
  const std::int64_t J0 = k.j << s, J1 = (k.j + 1) << s;
  return {NodeKey{I0, J0}, NodeKey{I1, J0}, NodeKey{I0, J1}, NodeKey{I1, J1}};
}

std::size_t QuadtreeMesh::locate(const NodeKey& p) const {
  const std::int64_t I = std::clamp<std::int64_t>(p.I, 0, lattice_x() - 1);
  const std::int64_t J = std::clamp<std::int64_t>(p.J, 0, lattice_y() - 1);
  for (int l = 0; l <= max_level_; ++l) {
    auto it = leaf_index_.find(CellKey{l, I >> (kMaxLevel - l), J >> (kMaxLevel - l)}.id());
    if (it != leaf_index_.end()) return it->second;
  }
  throw InputError("point location failed");
}

std::size_t QuadtreeMesh::locate(Vec2 p) const {
  const double fx = (p.x - root_.lo.x) / root_.width() * static_cast<double>(lattice_x());
  const double fy = (p.y - root_.lo.y) / root_.height() * static_cast<double>(lattice_y());
  return locate(NodeKey{static_cast<std::int64_t>(std::floor(fx)),
                        static_cast<std::int64_t>(std::floor(fy))});
}

std::optional<int> QuadtreeMesh::find_node(const NodeKey& k) const {
  auto it = node_index_.find(k);
  if (it == node_index_.end()) return std::nullopt;
  return it->second;
}

void QuadtreeMesh::build_topology() {
  std::vector<NodeKey> keys;
  keys.reserve(leaves_.size() * 4);
  for (const auto& c : leaves_)
    for (const auto& n : corner_keys(c)) keys.push_back(n);
  std::sort(keys.begin(), keys.end(), [](const NodeKey& a, const NodeKey& b) {
    return a.J != b.J ? a.J < b.J : a.I < b.I;
  });
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  nodes_ = std::move(keys);
  node_index_.reserve(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) node_index_.emplace(nodes_[n], static_cast<int>(n));

  cell_nodes_.resize(leaves_.size());
  for (std::size_t c = 0; c < leaves_.size(); ++c) {
    auto corners = corner_keys(leaves_[c]);
    for (int a = 0; a < 4; ++a) cell_nodes_[c][a] = node_index_.at(corners[a]);
  }

  // A leaf whose same-size edge neighbor region is subdivided owns a hanging
  // node at the midpoint of that edge.
  std::map<int, HangingConstraint> hanging;
  static constexpr std::array<std::array<int, 2>, 4> kEdgeCorners{{{0, 2}, {1, 3}, {0, 1}, {2, 3}}};
  for (std::size_t c = 0; c < leaves_.size(); ++c) {
    const CellKey& k = leaves_[c];
    for (int d = 0; d < 4; ++d) {
      const CellKey n{k.level, k.i + kDirections[d][0], k.j + kDirections[d][1]};
      if (!in_domain(n) || covering_leaf(n)) continue;
      const auto corners = corner_keys(k);
      const NodeKey& a = corners[kEdgeCorners[d][0]];
      const NodeKey& b = corners[kEdgeCorners[d][1]];
      const NodeKey mid{(a.I + b.I) / 2, (a.J + b.J) / 2};
      HangingConstraint h;
      h.node = node_index_.at(mid);
      h.masters = {node_index_.at(a), node_index_.at(b)};
      hanging.emplace(h.node, h);
    }
  }
  hanging_.clear();
  hanging_of_.assign(nodes_.size(), -1);
  for (auto& [n, h] : hanging) {
    hanging_of_[n] = static_cast<int>(hanging_.size());
    hanging_.push_back(h);
  }
}

std::vector<std::size_t> QuadtreeMesh::edge_neighbors(std::size_t c) const {
  std::vector<std::size_t> out;
  const CellKey& k = leaves_[c];
  for (int d = 0; d < 4; ++d) {
    const CellKey n{k.level, k.i + kDirections[d][0], k.j + kDirections[d][1]};
    if (!in_domain(n)) continue;
    if (auto cover = covering_leaf(n)) {
      out.push_back(leaf_index_.at(cover->id()));
      continue;
    }
    // Subdivided: collect descendants touching the shared edge.
    std::vector<CellKey> stack{n};
    while (!stack.empty()) {
      CellKey s = stack.back();
      stack.pop_back();
      if (auto it = leaf_index_.find(s.id()); it != leaf_index_.end()) {
        out.push_back(it->second);
        continue;
      }
      if (s.level >= max_level_) continue;
      for (int q = 0; q < 4; ++q) {
        const int qx = q & 1, qy = (q >> 1) & 1;
        // keep the children adjacent to k across direction d
        if (d == 0 && qx != 1) continue;
        if (d == 1 && qx != 0) continue;
        if (d == 2 && qy != 1) continue;
        if (d == 3 && qy != 0) continue;
        stack.push_back(s.child(q));
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void QuadtreeMesh::write_text(std::ostream& os) const {
  os.precision(17);
  for (const auto& k : leaves_) {
    const BBox b = bbox(k);
    os << k.id() << ' ' << k.level << ' ' << b.lo.x << ' ' << b.lo.y << ' ' << b.hi.x << ' '
       << b.hi.y << '\n';
  }
}

QuadtreeMesh refine(const QuadtreeMesh& mesh, const std::set<std::uint64_t>& marks) {
  LeafSet leaves = to_set(mesh);
  for (auto id : marks) {
    if (!leaves.contains(id)) throw InputError("refine: unknown leaf id " + std::to_string(id));
    const CellKey k = CellKey::from_id(id);
    if (k.level >= kMaxLevel) throw InputError("refine: maximum depth reached");
  }
  for (auto id : marks) {
    const CellKey k = CellKey::from_id(id);
    leaves.erase(id);
    for (int q = 0; q < 4; ++q) leaves.insert(k.child(q).id());
  }
  balance_in_place(leaves, mesh.roots_x(), mesh.roots_y());
  return QuadtreeMesh(mesh.root_bbox(), mesh.roots_x(), mesh.roots_y(), to_keys(leaves));
}

QuadtreeMesh balance(const QuadtreeMesh& mesh) {
  LeafSet leaves = to_set(mesh);
  balance_in_place(leaves, mesh.roots_x(), mesh.roots_y());
  return QuadtreeMesh(mesh.root_bbox(), mesh.roots_x(), mesh.roots_y(), to_keys(leaves));
}

QuadtreeMesh coarsen_level(const QuadtreeMesh& mesh) {
  const int r_max = mesh.max_level();
  if (r_max == 0) throw CannotCoarsen("all leaves are root cells");
  LeafSet leaves = to_set(mesh);
  for (const auto& k : mesh.leaves()) {
    if (k.level != r_max) continue;
    const CellKey p = k.parent();
    if (leaves.contains(p.id())) continue;
    bool family = true;
    for (int q = 0; q < 4; ++q) family = family && leaves.contains(p.child(q).id());
    if (!family) continue;
    for (int q = 0; q < 4; ++q) leaves.erase(p.child(q).id());
    leaves.insert(p.id());
  }
  balance_in_place(leaves, mesh.roots_x(), mesh.roots_y());
  return QuadtreeMesh(mesh.root_bbox(), mesh.roots_x(), mesh.roots_y(), to_keys(leaves));
}

MeshHierarchy build_hierarchy(const QuadtreeMesh& fine, int n_levels) {
  if (n_levels < 1) throw InputError("hierarchy needs at least one level");
  MeshHierarchy levels{fine};
  while (static_cast<int>(levels.size()) < n_levels) {
    try {
      levels.push_back(coarsen_level(levels.back()));
    } catch (const CannotCoarsen&) {
      const int depth = static_cast<int>(levels.size());
      throw HierarchyError("cannot build " + std::to_string(n_levels) +
                               " levels; achievable depth is " + std::to_string(depth),
                           depth);
    }
  }
  std::reverse(levels.begin(), levels.end());
  return levels;
}

bool is_balanced(const QuadtreeMesh& mesh) {
  for (std::size_t c = 0; c < mesh.num_leaves(); ++c) {
    for (auto n : mesh.edge_neighbors(c)) {
      if (std::abs(mesh.leaf(c).level - mesh.leaf(n).level) > 1) return false;
    }
  }
  return true;
}

} // namespace fcmg
