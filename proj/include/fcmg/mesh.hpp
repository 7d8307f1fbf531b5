// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fcmg/common.hpp"

namespace fcmg {

/// Finest representable refinement depth; node coordinates are integers on the
/// lattice of a depth-kMaxLevel uniform refinement of the root array.
inline constexpr int kMaxLevel = 24;

/// Integer address of a quadtree cell: refinement level and position on the
/// (nx * 2^level) x (ny * 2^level) lattice of that level.
struct CellKey {
  int level = 0;
  std::int64_t i = 0;
  std::int64_t j = 0;

  CellKey parent() const { return {level - 1, i >> 1, j >> 1}; }
  CellKey child(int q) const {
    return {level + 1, 2 * i + (q & 1), 2 * j + ((q >> 1) & 1)};
  }
  /// Stable identifier, unique across all meshes sharing a root array.
  std::uint64_t id() const {
    return (static_cast<std::uint64_t>(level) << 58) |
           (static_cast<std::uint64_t>(i) << 29) | static_cast<std::uint64_t>(j);
  }
  static CellKey from_id(std::uint64_t id) {
    return {static_cast<int>(id >> 58),
            static_cast<std::int64_t>((id >> 29) & ((1ULL << 29) - 1)),
            static_cast<std::int64_t>(id & ((1ULL << 29) - 1))};
  }
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

/// Lattice point at kMaxLevel resolution.
struct NodeKey {
  std::int64_t I = 0;
  std::int64_t J = 0;
  friend bool operator==(const NodeKey&, const NodeKey&) = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& k) const noexcept {
    return std::hash<std::int64_t>()(k.I * 0x9E3779B97F4A7C15LL ^ k.J);
  }
};

/// Snapshot of one cell of the tree.
struct Cell {
  std::uint64_t id = 0;
  int level = 0;
  BBox bbox;
  std::optional<std::uint64_t> parent;
  std::array<std::uint64_t, 4> children{};
  bool leaf = false;
};

/// A hanging node constrained to the average of the endpoints of the coarse
/// edge it bisects.
struct HangingConstraint {
  int node = -1;
  std::array<int, 2> masters{-1, -1};
  std::array<double, 2> weights{0.5, 0.5};
};

/// Forest of quadtrees over a rectangular array of nx x ny root cells covering
/// the embedding box. The leaf set is immutable once constructed; derived data
/// (node table, hanging-node classification, cell-node incidence) is built on
/// construction. Leaves are sorted along the Morton curve of their centers and
/// nodes lexicographically by (y, x).
class QuadtreeMesh {
public:
  QuadtreeMesh(BBox root, int nx, int ny, std::vector<CellKey> leaves);

  static QuadtreeMesh uniform(BBox root, int nx, int ny, int level);

  const BBox& root_bbox() const { return root_; }
  int roots_x() const { return nx_; }
  int roots_y() const { return ny_; }

  std::size_t num_leaves() const { return leaves_.size(); }
  const std::vector<CellKey>& leaves() const { return leaves_; }
  const CellKey& leaf(std::size_t c) const { return leaves_[c]; }
  int max_level() const { return max_level_; }

  bool is_leaf(const CellKey& k) const { return leaf_index_.contains(k.id()); }
  std::optional<std::size_t> leaf_index(const CellKey& k) const;
  bool in_domain(const CellKey& k) const;

  /// Leaf of level <= k.level whose region contains k's region, or nullopt if
  /// k's region is subdivided or lies outside the root array.
  std::optional<CellKey> covering_leaf(const CellKey& k) const;

  Cell cell(const CellKey& k) const;
  BBox bbox(const CellKey& k) const;

  /// Leaf whose half-open region contains p (clamped to the root box).
  std::size_t locate(Vec2 p) const;
  std::size_t locate(const NodeKey& p) const;

  std::size_t num_nodes() const { return nodes_.size(); }
  const NodeKey& node_key(std::size_t n) const { return nodes_[n]; }
  Vec2 node_point(std::size_t n) const { return point(nodes_[n]); }
  Vec2 point(const NodeKey& k) const;
  std::optional<int> find_node(const NodeKey& k) const;

  /// Corner node ids of leaf c in order (lo,lo), (hi,lo), (lo,hi), (hi,hi).
  const std::array<int, 4>& cell_nodes(std::size_t c) const { return cell_nodes_[c]; }
  std::array<NodeKey, 4> corner_keys(const CellKey& k) const;

  bool is_hanging(std::size_t n) const { return hanging_of_[n] >= 0; }
  const std::vector<HangingConstraint>& hanging_constraints() const { return hanging_; }
  std::size_t num_regular_nodes() const { return nodes_.size() - hanging_.size(); }

  /// Edge-neighbor leaves of leaf c (every leaf sharing a positive-length edge
  /// segment with it).
  std::vector<std::size_t> edge_neighbors(std::size_t c) const;

  /// Plain-text listing "cell_id level x0 y0 x1 y1", one line per leaf.
  void write_text(std::ostream& os) const;

private:
  std::int64_t lattice_x() const { return static_cast<std::int64_t>(nx_) << kMaxLevel; }
  std::int64_t lattice_y() const { return static_cast<std::int64_t>(ny_) << kMaxLevel; }
  void build_topology();

  BBox root_;
  int nx_;
  int ny_;
  int max_level_ = 0;
  std::vector<CellKey> leaves_;
  std::unordered_map<std::uint64_t, std::size_t> leaf_index_;
  std::vector<NodeKey> nodes_;
  std::unordered_map<NodeKey, int, NodeKeyHash> node_index_;
  std::vector<std::array<int, 4>> cell_nodes_;
  std::vector<HangingConstraint> hanging_;
  std::vector<int> hanging_of_;
};

/// Bisect each marked leaf, then restore edge 2:1 balance.
/// Throws InputError if a mark is not a leaf id of `mesh`.
QuadtreeMesh refine(const QuadtreeMesh& mesh, const std::set<std::uint64_t>& marks);

/// Iterated edge-neighbor refinement until every pair of edge-adjacent leaves
/// differs by at most one level.
QuadtreeMesh balance(const QuadtreeMesh& mesh);

/// One coarsening pass: every sibling family at the maximum level is replaced
/// by its parent, then 2:1 balance is applied. Throws CannotCoarsen when all
/// leaves are roots.
QuadtreeMesh coarsen_level(const QuadtreeMesh& mesh);

/// Nested meshes, index 0 = coarsest (base) grid, back() = the given fine mesh.
using MeshHierarchy = std::vector<QuadtreeMesh>;

/// Builds n_levels nested meshes top-down by repeated coarsen_level. Throws
/// HierarchyError (with the achievable depth) if coarsening bottoms out first.
MeshHierarchy build_hierarchy(const QuadtreeMesh& fine, int n_levels);

/// Exhaustive 2:1 check over all leaf adjacencies.
bool is_balanced(const QuadtreeMesh& mesh);

} // namespace fcmg
