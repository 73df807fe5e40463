#include "feinn/mesh.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <ostream>
#include <unordered_set>

namespace feinn
{

namespace
{

constexpr double kGeomTol = 1e-12;

bool close(double a, double b, double scale)
{
  return std::abs(a - b) <= kGeomTol * scale;
}

LeafKey unpack(std::uint64_t p)
{
  LeafKey k;
  k.iy = static_cast<std::int32_t>(p & 0xFFFFF);
  k.ix = static_cast<std::int32_t>((p >> 20) & 0xFFFFF);
  k.level = static_cast<int>((p >> 40) & 0x1F);
  k.root = static_cast<int>(p >> 45);
  return k;
}

std::uint64_t spread_bits(std::uint64_t v)
{
  std::uint64_t r = 0;
  for (int b = 0; b < kMaxLevel; ++b)
    r |= ((v >> b) & 1u) << (2 * b);
  return r;
}

/// Root-major, then Morton order of the lower-left corner on the finest lattice.
std::uint64_t morton(const LeafKey &k)
{
  const int shift = kMaxLevel - k.level;
  const auto x = static_cast<std::uint64_t>(k.ix) << shift;
  const auto y = static_cast<std::uint64_t>(k.iy) << shift;
  return spread_bits(x) | (spread_bits(y) << 1);
}

bool leaf_order(const LeafKey &a, const LeafKey &b)
{
  if (a.root != b.root)
    return a.root < b.root;
  return morton(a) < morton(b);
}

/// Working set of leaves used while adapting.
class KeySet
{
public:
  explicit KeySet(const ForestMesh &mesh) : coarse_(mesh.coarse())
  {
    keys_.reserve(2 * mesh.num_leaves());
    for (const auto &l : mesh.leaves())
      keys_.insert(l.key.packed());
  }

  bool contains(const LeafKey &k) const { return keys_.count(k.packed()) > 0; }

  /// Covering leaf of k (k or an ancestor); false when k is subdivided.
  bool covering(const LeafKey &k, LeafKey &out) const
  {
    LeafKey c = k;
    while (true)
    {
      if (contains(c))
      {
        out = c;
        return true;
      }
      if (c.level == 0)
        return false;
      c = c.parent();
    }
  }

  void split(const LeafKey &k)
  {
    if (k.level >= kMaxLevel)
      throw Error("refinement beyond the maximum quadtree level");
    keys_.erase(k.packed());
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx)
        keys_.insert(k.child(cx, cy).packed());
  }

  void collapse(const LeafKey &parent)
  {
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx)
        keys_.erase(parent.child(cx, cy).packed());
    keys_.insert(parent.packed());
  }

  /// The two children of `cell` touching its face f.
  static std::array<LeafKey, 2> face_children(const LeafKey &cell, Face f)
  {
    switch (f)
    {
    case Face::left:
      return {cell.child(0, 0), cell.child(0, 1)};
    case Face::right:
      return {cell.child(1, 0), cell.child(1, 1)};
    case Face::bottom:
      return {cell.child(0, 0), cell.child(1, 0)};
    case Face::top:
      return {cell.child(0, 1), cell.child(1, 1)};
    }
    return {};
  }

  std::vector<LeafKey> keys() const
  {
    std::vector<LeafKey> out;
    out.reserve(keys_.size());
    for (auto p : keys_)
      out.push_back(unpack(p));
    return out;
  }

  const CoarseMesh &coarse() const { return coarse_; }

private:
  const CoarseMesh &coarse_;
  std::unordered_set<std::uint64_t> keys_;
};

/// Refines until every leaf's face neighbors are at most one level coarser.
void close_balance(KeySet &set)
{
  std::deque<LeafKey> queue;
  for (const auto &k : set.keys())
    queue.push_back(k);
  while (!queue.empty())
  {
    const LeafKey k = queue.front();
    queue.pop_front();
    if (!set.contains(k) || k.level < 2)
      continue;
    for (Face f : kFaces)
    {
      LeafKey adj, cover;
      if (!adjacent_key(set.coarse(), k, f, adj))
        continue;
      if (!set.covering(adj, cover) || cover.level >= k.level - 1)
        continue;
      set.split(cover);
      for (int cy = 0; cy < 2; ++cy)
        for (int cx = 0; cx < 2; ++cx)
          queue.push_back(cover.child(cx, cy));
      queue.push_back(k);
      break;
    }
  }
}

/// True when replacing the four children of `parent` keeps the mesh balanced.
bool can_collapse(const KeySet &set, const LeafKey &parent)
{
  for (Face f : kFaces)
  {
    LeafKey adj, cover;
    if (!adjacent_key(set.coarse(), parent, f, adj))
      continue;
    if (set.covering(adj, cover))
      continue;
    for (const auto &c : KeySet::face_children(adj, opposite(f)))
      if (!set.contains(c))
        return false;
  }
  return true;
}

}  // namespace

Face opposite(Face f)
{
  switch (f)
  {
  case Face::left:
    return Face::right;
  case Face::right:
    return Face::left;
  case Face::bottom:
    return Face::top;
  case Face::top:
    return Face::bottom;
  }
  return f;
}

// ---------------------------------------------------------------------------
// CoarseMesh

CoarseMesh::CoarseMesh(std::vector<Rect> cells) : cells_(std::move(cells))
{
  if (cells_.empty())
    throw InvalidInput("coarse mesh has no cells");
  if (cells_.size() >= (1u << 16))
    throw InvalidInput("too many coarse cells");
  double scale = 0.0;
  for (const auto &c : cells_)
  {
    if (!(c.wx > 0.0) || !(c.wy > 0.0))
      throw InvalidInput("coarse cell with non-positive extent");
    scale = std::max({scale, std::abs(c.x0), std::abs(c.y0), c.wx, c.wy});
  }

  adjacency_.assign(cells_.size(), {-1, -1, -1, -1});
  const int n = size();
  for (int a = 0; a < n; ++a)
  {
    for (int b = a + 1; b < n; ++b)
    {
      const Rect &A = cells_[a];
      const Rect &B = cells_[b];
      const double ox = std::min(A.x0 + A.wx, B.x0 + B.wx) - std::max(A.x0, B.x0);
      const double oy = std::min(A.y0 + A.wy, B.y0 + B.wy) - std::max(A.y0, B.y0);
      if (ox > kGeomTol * scale && oy > kGeomTol * scale)
        throw InvalidInput("overlapping coarse cells " + std::to_string(a) + " and " +
                           std::to_string(b));

      auto link = [&](int lo, int hi, Face lo_face) {
        auto &slot_lo = adjacency_[lo][static_cast<int>(lo_face)];
        auto &slot_hi = adjacency_[hi][static_cast<int>(opposite(lo_face))];
        if (slot_lo != -1 || slot_hi != -1)
          throw InvalidInput("non-conforming coarse mesh: face shared by several cells");
        slot_lo = hi;
        slot_hi = lo;
      };

      // Vertical interfaces.
      if (oy > kGeomTol * scale)
      {
        const bool a_left_of_b = close(A.x0 + A.wx, B.x0, scale);
        const bool b_left_of_a = close(B.x0 + B.wx, A.x0, scale);
        if (a_left_of_b || b_left_of_a)
        {
          if (!close(A.y0, B.y0, scale) || !close(A.wy, B.wy, scale))
            throw InvalidInput("non-conforming coarse mesh: partially shared edge");
          if (a_left_of_b)
            link(a, b, Face::right);
          else
            link(b, a, Face::right);
        }
      }
      // Horizontal interfaces.
      if (ox > kGeomTol * scale)
      {
        const bool a_below_b = close(A.y0 + A.wy, B.y0, scale);
        const bool b_below_a = close(B.y0 + B.wy, A.y0, scale);
        if (a_below_b || b_below_a)
        {
          if (!close(A.x0, B.x0, scale) || !close(A.wx, B.wx, scale))
            throw InvalidInput("non-conforming coarse mesh: partially shared edge");
          if (a_below_b)
            link(a, b, Face::top);
          else
            link(b, a, Face::top);
        }
      }
    }
  }
}

CoarseMesh CoarseMesh::from_boxes(std::span<const Box> boxes)
{
  std::vector<Rect> cells;
  for (const auto &b : boxes)
  {
    if (b.lower.size() != 2 || b.extent.size() != 2)
      throw InvalidInput("only two-dimensional coarse meshes are supported (got d=" +
                         std::to_string(b.lower.size()) + ")");
    cells.push_back({b.lower[0], b.lower[1], b.extent[0], b.extent[1]});
  }
  return CoarseMesh(std::move(cells));
}

CoarseMesh CoarseMesh::unit_square()
{
  return CoarseMesh({{0.0, 0.0, 1.0, 1.0}});
}

CoarseMesh CoarseMesh::l_shape()
{
  return CoarseMesh({{-1.0, 0.0, 1.0, 1.0}, {0.0, 0.0, 1.0, 1.0}, {0.0, -1.0, 1.0, 1.0}});
}

double CoarseMesh::area() const
{
  double a = 0.0;
  for (const auto &c : cells_)
    a += c.wx * c.wy;
  return a;
}

// ---------------------------------------------------------------------------
// Keys and adjacency

std::uint64_t LeafKey::packed() const
{
  return (static_cast<std::uint64_t>(root) << 45) | (static_cast<std::uint64_t>(level) << 40) |
         (static_cast<std::uint64_t>(ix) << 20) | static_cast<std::uint64_t>(iy);
}

bool adjacent_key(const CoarseMesh &coarse, const LeafKey &key, Face f, LeafKey &out)
{
  const std::int32_t n = std::int32_t{1} << key.level;
  out = key;
  switch (f)
  {
  case Face::left:
    if (key.ix > 0)
    {
      out.ix = key.ix - 1;
      return true;
    }
    out.ix = n - 1;
    break;
  case Face::right:
    if (key.ix < n - 1)
    {
      out.ix = key.ix + 1;
      return true;
    }
    out.ix = 0;
    break;
  case Face::bottom:
    if (key.iy > 0)
    {
      out.iy = key.iy - 1;
      return true;
    }
    out.iy = n - 1;
    break;
  case Face::top:
    if (key.iy < n - 1)
    {
      out.iy = key.iy + 1;
      return true;
    }
    out.iy = 0;
    break;
  }
  // Conforming roots share the full edge, so the tangential index carries over.
  out.root = coarse.neighbor(key.root, f);
  return out.root >= 0;
}

// ---------------------------------------------------------------------------
// ForestMesh

ForestMesh::ForestMesh(std::shared_ptr<const CoarseMesh> coarse, std::vector<LeafKey> keys)
    : coarse_(std::move(coarse))
{
  std::sort(keys.begin(), keys.end(), leaf_order);
  leaves_.reserve(keys.size());
  index_.reserve(keys.size());
  for (const auto &k : keys)
  {
    if (k.root < 0 || k.root >= coarse_->size() || k.level < 0 || k.level > kMaxLevel)
      throw InvalidInput("leaf key out of range");
    index_.emplace(k.packed(), static_cast<int>(leaves_.size()));
    leaves_.push_back(make_leaf(k));
    max_level_ = std::max(max_level_, k.level);
  }
}

Leaf ForestMesh::make_leaf(const LeafKey &k) const
{
  const Rect &r = coarse_->cell(k.root);
  const double n = std::ldexp(1.0, k.level);
  Leaf l;
  l.key = k;
  l.hx = r.wx / n;
  l.hy = r.wy / n;
  l.x0 = r.x0 + k.ix * l.hx;
  l.y0 = r.y0 + k.iy * l.hy;
  return l;
}

int ForestMesh::find(const LeafKey &key) const
{
  auto it = index_.find(key.packed());
  return it == index_.end() ? -1 : it->second;
}

int ForestMesh::find_covering(const LeafKey &key) const
{
  LeafKey c = key;
  while (true)
  {
    const int id = find(c);
    if (id >= 0)
      return id;
    if (c.level == 0)
      return -1;
    c = c.parent();
  }
}

std::array<FaceNeighbor, 4> ForestMesh::face_neighbors(int id) const
{
  const Leaf &l = leaf(id);
  std::array<FaceNeighbor, 4> out;
  for (Face f : kFaces)
  {
    FaceNeighbor &nb = out[static_cast<int>(f)];
    const double x1 = l.x0 + l.hx, y1 = l.y0 + l.hy;
    switch (f)
    {
    case Face::left:
      nb.a = {l.x0, l.y0}, nb.b = {l.x0, y1};
      break;
    case Face::right:
      nb.a = {x1, l.y0}, nb.b = {x1, y1};
      break;
    case Face::bottom:
      nb.a = {l.x0, l.y0}, nb.b = {x1, l.y0};
      break;
    case Face::top:
      nb.a = {l.x0, y1}, nb.b = {x1, y1};
      break;
    }

    LeafKey adj;
    if (!adjacent_key(*coarse_, l.key, f, adj))
    {
      nb.kind = NeighborKind::boundary;
      continue;
    }
    if (const int same = find(adj); same >= 0)
    {
      nb.kind = NeighborKind::same_level;
      nb.ids = {same, -1};
      nb.count = 1;
      continue;
    }
    if (adj.level > 0)
    {
      if (const int parent = find(adj.parent()); parent >= 0)
      {
        nb.kind = NeighborKind::coarser;
        nb.ids = {parent, -1};
        nb.count = 1;
        continue;
      }
    }
    const auto children = KeySet::face_children(adj, opposite(f));
    const int c0 = find(children[0]);
    const int c1 = find(children[1]);
    if (c0 < 0 || c1 < 0)
      throw InvariantViolation("face_neighbors requires a 2:1 balanced mesh");
    nb.kind = NeighborKind::finer;
    nb.ids = {c0, c1};
    nb.count = 2;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction and adaptation

ForestMesh new_forest(std::shared_ptr<const CoarseMesh> coarse)
{
  std::vector<LeafKey> keys;
  for (int r = 0; r < coarse->size(); ++r)
    keys.push_back({r, 0, 0, 0});
  return ForestMesh(std::move(coarse), std::move(keys));
}

ForestMesh new_forest(const CoarseMesh &coarse)
{
  return new_forest(std::make_shared<const CoarseMesh>(coarse));
}

ForestMesh refine_uniform(const ForestMesh &mesh, int levels)
{
  if (levels < 0)
    throw InvalidInput("refine_uniform: negative level count");
  std::vector<LeafKey> keys;
  for (const auto &l : mesh.leaves())
    keys.push_back(l.key);
  for (int i = 0; i < levels; ++i)
  {
    std::vector<LeafKey> next;
    next.reserve(4 * keys.size());
    for (const auto &k : keys)
    {
      if (k.level >= kMaxLevel)
        throw Error("refinement beyond the maximum quadtree level");
      for (int cy = 0; cy < 2; ++cy)
        for (int cx = 0; cx < 2; ++cx)
          next.push_back(k.child(cx, cy));
    }
    keys = std::move(next);
  }
  return ForestMesh(mesh.coarse_ptr(), std::move(keys));
}

ForestMesh adapt(const ForestMesh &mesh, std::span<const int> refine_set,
                 std::span<const int> coarsen_set)
{
  const int n = mesh.num_leaves();
  std::vector<char> refine(n, 0), coarsen(n, 0);
  for (int id : refine_set)
  {
    if (id < 0 || id >= n)
      throw InvalidInput("adapt: unknown leaf id " + std::to_string(id));
    refine[id] = 1;
  }
  for (int id : coarsen_set)
  {
    if (id < 0 || id >= n)
      throw InvalidInput("adapt: unknown leaf id " + std::to_string(id));
    coarsen[id] = 1;
  }
  if (refine_set.empty() && coarsen_set.empty())
    return mesh;

  KeySet set(mesh);
  for (int id = 0; id < n; ++id)
    if (refine[id])
      set.split(mesh.leaf(id).key);
  close_balance(set);

  // Sibling groups where every child is marked for coarsening only.
  std::map<LeafKey, int> groups;
  for (int id = 0; id < n; ++id)
  {
    const LeafKey &k = mesh.leaf(id).key;
    if (coarsen[id] && !refine[id] && k.level > 0)
      ++groups[k.parent()];
  }
  for (const auto &[parent, count] : groups)
  {
    if (count != 4)
      continue;
    bool all_leaves = true;
    for (int cy = 0; cy < 2; ++cy)
      for (int cx = 0; cx < 2; ++cx)
        all_leaves = all_leaves && set.contains(parent.child(cx, cy));
    if (all_leaves && can_collapse(set, parent))
      set.collapse(parent);
  }

  return ForestMesh(mesh.coarse_ptr(), set.keys());
}

bool is_balanced(const ForestMesh &mesh)
{
  for (int id = 0; id < mesh.num_leaves(); ++id)
  {
    const LeafKey &k = mesh.leaf(id).key;
    for (Face f : kFaces)
    {
      LeafKey adj;
      if (!adjacent_key(mesh.coarse(), k, f, adj))
        continue;
      const int cover = mesh.find_covering(adj);
      if (cover >= 0)
      {
        if (k.level - mesh.leaf(cover).key.level > 1)
          return false;
        continue;
      }
      // Finer side: every touching descendant must be exactly one level down.
      for (const auto &c : KeySet::face_children(adj, opposite(f)))
        if (mesh.find(c) < 0)
          return false;
    }
  }
  return true;
}

void write_mesh(std::ostream &os, const ForestMesh &mesh)
{
  const auto prec = os.precision(17);
  os << "# root level ix iy x0 y0 h\n";
  for (const auto &l : mesh.leaves())
    os << l.key.root << ' ' << l.key.level << ' ' << l.key.ix << ' ' << l.key.iy << ' ' << l.x0
       << ' ' << l.y0 << ' ' << l.h() << '\n';
  os.precision(prec);
}

}  // namespace feinn
