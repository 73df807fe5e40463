#pragma once

// Forest-of-quadtrees over a conforming coarse mesh of axis-aligned rectangles.
//
// Every coarse cell is the root of a quadtree. Leaves are addressed by
// (root, level, ix, iy), where ix, iy in [0, 2^level) are integer positions
// within the root, so neighbor lookups never compare floating-point
// coordinates. Meshes are immutable; refinement returns a new mesh.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "feinn/types.hpp"

namespace feinn
{

enum class Face : int
{
  left = 0,
  right = 1,
  bottom = 2,
  top = 3
};

inline constexpr std::array<Face, 4> kFaces = {Face::left, Face::right, Face::bottom, Face::top};

Face opposite(Face f);

struct Rect
{
  double x0, y0;  // lower-left corner
  double wx, wy;  // extents
};

/// Axis-aligned box of arbitrary dimension, used for input validation only.
struct Box
{
  std::vector<double> lower;
  std::vector<double> extent;
};

class CoarseMesh
{
public:
  /// Validates that cells do not overlap and that shared edges match exactly.
  explicit CoarseMesh(std::vector<Rect> cells);

  /// Accepts boxes of any dimension but rejects everything except d = 2.
  static CoarseMesh from_boxes(std::span<const Box> boxes);
  static CoarseMesh unit_square();
  /// [-1,1]^2 \ [-1,0]^2 as three unit squares.
  static CoarseMesh l_shape();

  int size() const { return static_cast<int>(cells_.size()); }
  const Rect &cell(int c) const { return cells_.at(c); }
  /// Neighboring coarse cell across face f, or -1 on the domain boundary.
  int neighbor(int c, Face f) const { return adjacency_[c][static_cast<int>(f)]; }
  double area() const;

private:
  std::vector<Rect> cells_;
  std::vector<std::array<int, 4>> adjacency_;
};

inline constexpr int kMaxLevel = 20;

struct LeafKey
{
  int root = 0;
  int level = 0;
  std::int32_t ix = 0;
  std::int32_t iy = 0;

  std::uint64_t packed() const;
  LeafKey parent() const { return {root, level - 1, ix >> 1, iy >> 1}; }
  LeafKey child(int cx, int cy) const { return {root, level + 1, 2 * ix + cx, 2 * iy + cy}; }
  auto operator<=>(const LeafKey &) const = default;
};

struct Leaf
{
  LeafKey key;
  double x0, y0;  // lower-left corner
  double hx, hy;  // extents

  /// Characteristic size h_K (longest side).
  double h() const { return std::max(hx, hy); }
  double area() const { return hx * hy; }
  Point center() const { return {x0 + 0.5 * hx, y0 + 0.5 * hy}; }
  Point to_physical(double xi, double eta) const { return {x0 + xi * hx, y0 + eta * hy}; }
};

enum class NeighborKind
{
  boundary,
  same_level,
  coarser,
  finer
};

struct FaceNeighbor
{
  NeighborKind kind = NeighborKind::boundary;
  /// Neighbor leaf ids; two (ordered along the face) when finer, otherwise one.
  std::array<int, 2> ids = {-1, -1};
  int count = 0;
  /// Endpoints of the queried leaf's face.
  Point a, b;
};

class ForestMesh
{
public:
  ForestMesh(std::shared_ptr<const CoarseMesh> coarse, std::vector<LeafKey> keys);

  const CoarseMesh &coarse() const { return *coarse_; }
  const std::shared_ptr<const CoarseMesh> &coarse_ptr() const { return coarse_; }

  int num_leaves() const { return static_cast<int>(leaves_.size()); }
  const Leaf &leaf(int id) const { return leaves_.at(id); }
  std::span<const Leaf> leaves() const { return leaves_; }
  int max_level() const { return max_level_; }

  /// Leaf id for an exact key, or -1.
  int find(const LeafKey &key) const;
  /// Leaf covering the cell `key` (the key itself or an ancestor), or -1 when
  /// the cell is subdivided further.
  int find_covering(const LeafKey &key) const;

  /// One entry per face in the order left, right, bottom, top. Requires 2:1 balance.
  std::array<FaceNeighbor, 4> face_neighbors(int id) const;

  /// Geometry of a (not necessarily existing) cell.
  Leaf make_leaf(const LeafKey &key) const;

private:
  std::shared_ptr<const CoarseMesh> coarse_;
  std::vector<Leaf> leaves_;
  std::unordered_map<std::uint64_t, int> index_;
  int max_level_ = 0;
};

/// Same-level cell across face f, crossing root boundaries; false on the domain boundary.
bool adjacent_key(const CoarseMesh &coarse, const LeafKey &key, Face f, LeafKey &out);

ForestMesh new_forest(const CoarseMesh &coarse);
ForestMesh new_forest(std::shared_ptr<const CoarseMesh> coarse);
ForestMesh refine_uniform(const ForestMesh &mesh, int levels);

/// Refines leaves in refine_set, collapses complete sibling groups in
/// coarsen_set, then closes the mesh under 2:1 balance. Refinement and balance
/// closure win over coarsening.
ForestMesh adapt(const ForestMesh &mesh, std::span<const int> refine_set,
                 std::span<const int> coarsen_set);

/// True when all edge-adjacent leaves differ by at most one level.
bool is_balanced(const ForestMesh &mesh);

/// Writes `root level ix iy x0 y0 h`, one leaf per line, after a header line.
void write_mesh(std::ostream &os, const ForestMesh &mesh);

}  // namespace feinn
