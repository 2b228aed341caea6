#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "freeflow/error.hpp"
#include "freeflow/geometry.hpp"

namespace freeflow {

/// Polygonal domain description. Slits are zero-width obstacles: the
/// rasterizer cannot see them, so graph edges crossing a slit are cut.
struct DomainSpec {
  Polygon outer;
  std::vector<Polygon> holes;
  std::vector<Segment> slits;
  Norm norm = Norm::l2;
  double h = 1.0 / 64.0;
  int neighborhood_order = 0;  // 0 selects the default for the norm
  std::optional<Vec2> basepoint;
};

/// Default stencil: 4-neighbour for l1, 16-neighbour for l2.
inline int default_order(Norm n) { return n == Norm::l1 ? 1 : 2; }

struct GraphEdge {
  int to;
  double weight;
};

struct CellIndex {
  int i;
  int j;
};

/// Rasterized open connected region with its grid graph. Nodes are the
/// interior cells, numbered row-major. Immutable once built.
class Domain : public std::enable_shared_from_this<Domain> {
 public:
  const DomainSpec& spec() const { return spec_; }
  double h() const { return spec_.h; }
  Norm norm() const { return spec_.norm; }
  int order() const { return order_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  Vec2 origin() const { return origin_; }
  std::size_t size() const { return cells_.size(); }
  int basepoint() const { return basepoint_; }
  double max_dist_to_boundary() const { return max_dist_; }
  const std::vector<Segment>& boundary() const { return boundary_; }

  bool in_grid(int i, int j) const { return i >= 0 && j >= 0 && i < nx_ && j < ny_; }

  /// Node id of cell (i, j), or -1 when the cell is not interior.
  int node_at(int i, int j) const { return in_grid(i, j) ? node_of_[flat(i, j)] : -1; }
  CellIndex cell(int node) const { return cells_[node]; }
  Vec2 center(int node) const { return centers_[node]; }
  Vec2 cell_center(int i, int j) const {
    return {origin_.x + (i + 0.5) * spec_.h, origin_.y + (j + 0.5) * spec_.h};
  }
  double dist_to_boundary(int node) const { return dist_[node]; }
  const std::vector<double>& dist_to_boundary() const { return dist_; }

  std::span<const GraphEdge> neighbors(int node) const {
    return {adj_.data() + adj_start_[node], adj_.data() + adj_start_[node + 1]};
  }
  std::size_t edge_count() const { return adj_.size() / 2; }

  /// Cell at offset (di, dj) from `node` when the graph joins the two, else -1.
  int linked(int node, int di, int dj) const {
    const int v = node_at(cells_[node].i + di, cells_[node].j + dj);
    if (v < 0) return -1;
    for (const auto& e : neighbors(node)) {
      if (e.to == v) return v;
    }
    return -1;
  }

  /// Nearest interior cell centre, if one lies within h of p.
  std::optional<int> snap(Vec2 p) const {
    const int ci = static_cast<int>(std::floor((p.x - origin_.x) / spec_.h));
    const int cj = static_cast<int>(std::floor((p.y - origin_.y) / spec_.h));
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = cj - 2; j <= cj + 2; ++j) {
      for (int i = ci - 2; i <= ci + 2; ++i) {
        const int n = node_at(i, j);
        if (n < 0) continue;
        const double d = euclid(centers_[n] - p);
        if (d < best_d) {
          best_d = d;
          best = n;
        }
      }
    }
    if (best < 0 || best_d > spec_.h) return std::nullopt;
    return best;
  }

  int snap_or_throw(Vec2 p) const {
    auto n = snap(p);
    if (!n) {
      throw Error(ErrorCode::PointOutsideDomain,
                  "no interior cell within h of (" + std::to_string(p.x) + ", " +
                      std::to_string(p.y) + ")");
    }
    return *n;
  }

  /// True when p lies in the closed square of some cell accepted by `keep`.
  template <class Keep>
  bool point_in_cells(Vec2 p, Keep&& keep) const {
    const double fx = (p.x - origin_.x) / spec_.h;
    const double fy = (p.y - origin_.y) / spec_.h;
    constexpr double eps = 1e-9;
    const int i0 = static_cast<int>(std::floor(fx - eps)), i1 = static_cast<int>(std::floor(fx + eps));
    const int j0 = static_cast<int>(std::floor(fy - eps)), j1 = static_cast<int>(std::floor(fy + eps));
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const int n = node_at(i, j);
        if (n >= 0 && keep(n)) return true;
      }
    }
    return false;
  }

  bool point_in_interior_cells(Vec2 p) const {
    return point_in_cells(p, [](int) { return true; });
  }

  /// Supersampled (step <= h/4) containment of the closed segment [a, b].
  template <class Keep>
  bool segment_in_cells(Vec2 a, Vec2 b, Keep&& keep) const {
    const double len = euclid(b - a);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / (0.25 * spec_.h))));
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      if (!point_in_cells(a + t * (b - a), keep)) return false;
    }
    return true;
  }

  bool segment_in_interior_cells(Vec2 a, Vec2 b) const {
    return segment_in_cells(a, b, [](int) { return true; });
  }

  /// Euclidean distance from p to the boundary (polygon edges and slits).
  double boundary_distance(Vec2 p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : boundary_) d = std::min(d, point_segment_distance(p, s.a, s.b));
    return d;
  }

  double segment_boundary_distance(Vec2 a, Vec2 b) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : boundary_) d = std::min(d, segment_segment_distance(a, b, s.a, s.b));
    return d;
  }

  bool segment_crosses_boundary(Vec2 a, Vec2 b) const {
    for (const auto& s : boundary_) {
      if (segments_intersect(a, b, s.a, s.b)) return true;
    }
    return false;
  }

 private:
  Domain() = default;
  std::size_t flat(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }

  friend std::shared_ptr<const Domain> build_domain(const DomainSpec& spec);

  DomainSpec spec_;
  int order_ = 1;
  int nx_ = 0;
  int ny_ = 0;
  Vec2 origin_;
  std::vector<int> node_of_;
  std::vector<CellIndex> cells_;
  std::vector<Vec2> centers_;
  std::vector<double> dist_;
  std::vector<std::size_t> adj_start_;
  std::vector<GraphEdge> adj_;
  std::vector<Segment> boundary_;
  int basepoint_ = 0;
  double max_dist_ = 0.0;
};

using DomainPtr = std::shared_ptr<const Domain>;

/// Stencil offsets: K = 1 is the 4-neighbourhood; K >= 2 takes every offset of
/// Chebyshev radius <= K with coprime components.
inline std::vector<CellIndex> stencil_offsets(int order) {
  std::vector<CellIndex> out;
  if (order == 1) return {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int dj = -order; dj <= order; ++dj) {
    for (int di = -order; di <= order; ++di) {
      if (di == 0 && dj == 0) continue;
      if (std::gcd(std::abs(di), std::abs(dj)) != 1) continue;
      out.push_back({di, dj});
    }
  }
  return out;
}

namespace detail {

inline void validate_spec(const DomainSpec& spec) {
  require(spec.h > 0.0 && std::isfinite(spec.h), ErrorCode::DegenerateSpec, "grid spacing must be positive");
  const int order = spec.neighborhood_order == 0 ? default_order(spec.norm) : spec.neighborhood_order;
  require(order >= 1 && order <= 3, ErrorCode::DegenerateSpec, "neighbourhood order must be 1, 2 or 3");
  require(spec.outer.size() >= 3 && std::abs(signed_area(spec.outer)) > 0.0, ErrorCode::DegenerateSpec,
          "outer polygon has zero area");
  require(polygon_is_simple(spec.outer), ErrorCode::DegenerateSpec, "outer polygon is not simple");
  for (std::size_t a = 0; a < spec.holes.size(); ++a) {
    const auto& hole = spec.holes[a];
    require(hole.size() >= 3 && std::abs(signed_area(hole)) > 0.0, ErrorCode::DegenerateSpec,
            "hole polygon has zero area");
    require(polygon_is_simple(hole), ErrorCode::DegenerateSpec, "hole polygon is not simple");
    require(!polygons_intersect(hole, spec.outer), ErrorCode::DegenerateSpec, "hole touches the outer boundary");
    for (const auto& v : hole) {
      require(point_in_polygon(v, spec.outer), ErrorCode::DegenerateSpec, "hole is not inside the outer polygon");
    }
    for (std::size_t b = a + 1; b < spec.holes.size(); ++b) {
      const auto& other = spec.holes[b];
      require(!polygons_intersect(hole, other) && !point_in_polygon(other[0], hole) &&
                  !point_in_polygon(hole[0], other),
              ErrorCode::DegenerateSpec, "holes overlap");
    }
  }
  for (const auto& s : spec.slits) {
    require(!(s.a == s.b), ErrorCode::DegenerateSpec, "slit has zero length");
  }
}

}  // namespace detail

/// Rasterizes the spec. A cell is interior when its centre lies inside the
/// outer polygon, outside every hole, and farther than h/2 (Euclidean) from
/// every polygon edge. Slits do not affect interiority but count as boundary
/// for dist_to_boundary and cut every graph edge they touch.
inline DomainPtr build_domain(const DomainSpec& spec) {
  detail::validate_spec(spec);
  auto dom = std::shared_ptr<Domain>(new Domain());
  Domain& d = *dom;
  d.spec_ = spec;
  d.order_ = spec.neighborhood_order == 0 ? default_order(spec.norm) : spec.neighborhood_order;
  d.spec_.neighborhood_order = d.order_;
  const double h = spec.h;

  double xmin = spec.outer[0].x, xmax = xmin, ymin = spec.outer[0].y, ymax = ymin;
  for (const auto& v : spec.outer) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  d.origin_ = {xmin, ymin};
  d.nx_ = std::max(1, static_cast<int>(std::ceil((xmax - xmin) / h - 1e-9)));
  d.ny_ = std::max(1, static_cast<int>(std::ceil((ymax - ymin) / h - 1e-9)));

  std::vector<Segment> polygon_boundary = polygon_edges(spec.outer);
  for (const auto& hole : spec.holes) {
    auto e = polygon_edges(hole);
    polygon_boundary.insert(polygon_boundary.end(), e.begin(), e.end());
  }
  d.boundary_ = polygon_boundary;
  d.boundary_.insert(d.boundary_.end(), spec.slits.begin(), spec.slits.end());

  d.node_of_.assign(static_cast<std::size_t>(d.nx_) * d.ny_, -1);
  for (int j = 0; j < d.ny_; ++j) {
    for (int i = 0; i < d.nx_; ++i) {
      const Vec2 c = d.cell_center(i, j);
      if (!point_in_polygon(c, spec.outer)) continue;
      bool in_hole = false;
      for (const auto& hole : spec.holes) in_hole = in_hole || point_in_polygon(c, hole);
      if (in_hole) continue;
      double clearance = std::numeric_limits<double>::infinity();
      for (const auto& s : polygon_boundary) clearance = std::min(clearance, point_segment_distance(c, s.a, s.b));
      if (!(clearance > 0.5 * h * (1 + 1e-9))) continue;  // ties at exactly h/2 stay outside
      d.node_of_[d.flat(i, j)] = static_cast<int>(d.cells_.size());
      d.cells_.push_back({i, j});
      d.centers_.push_back(c);
      d.dist_.push_back(d.boundary_distance(c));
    }
  }
  require(!d.cells_.empty(), ErrorCode::DegenerateSpec, "rasterization produced no interior cells (h too large?)");
  d.max_dist_ = *std::max_element(d.dist_.begin(), d.dist_.end());

  const auto offsets = stencil_offsets(d.order_);
  const std::size_t n = d.cells_.size();
  d.adj_start_.assign(n + 1, 0);
  std::vector<std::vector<GraphEdge>> adj(n);
  for (std::size_t u = 0; u < n; ++u) {
    const auto [i, j] = d.cells_[u];
    for (const auto& off : offsets) {
      const int v = d.node_at(i + off.i, j + off.j);
      if (v < 0) continue;
      const Vec2 a = d.centers_[u], b = d.centers_[v];
      const double len = euclid(b - a);
      if (std::min(d.dist_[u], d.dist_[v]) <= len + 2.0 * h) {
        if (d.segment_crosses_boundary(a, b)) continue;
        if (!d.segment_in_interior_cells(a, b)) continue;
      }
      const Vec2 step{static_cast<double>(off.i) * h, static_cast<double>(off.j) * h};
      adj[u].push_back({v, norm(step, spec.norm)});
    }
  }
  for (std::size_t u = 0; u < n; ++u) d.adj_start_[u + 1] = d.adj_start_[u] + adj[u].size();
  d.adj_.reserve(d.adj_start_[n]);
  for (auto& list : adj) d.adj_.insert(d.adj_.end(), list.begin(), list.end());

  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto& e : d.neighbors(u)) {
      if (!seen[e.to]) {
        seen[e.to] = 1;
        ++reached;
        stack.push_back(e.to);
      }
    }
  }
  require(reached == n, ErrorCode::DisconnectedInterior,
          "grid graph has " + std::to_string(n - reached) + " unreachable cells");

  if (spec.basepoint) {
    d.basepoint_ = d.snap_or_throw(*spec.basepoint);
  } else {
    d.basepoint_ = static_cast<int>(std::max_element(d.dist_.begin(), d.dist_.end()) - d.dist_.begin());
  }
  return dom;
}

/// Cells of a domain at Euclidean distance > depth from the complement.
struct Region {
  DomainPtr parent;
  std::vector<char> mask;  // indexed by node
  double depth = 0.0;

  double k() const { return 1.0 / depth; }
  bool contains(int node) const { return node >= 0 && mask[node] != 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
};

inline Region erode_to_depth(const Domain& domain, double depth) {
  Region r{domain.shared_from_this(), std::vector<char>(domain.size(), 0), depth};
  bool any = false;
  for (std::size_t n = 0; n < domain.size(); ++n) {
    if (domain.dist_to_boundary(static_cast<int>(n)) > depth) {
      r.mask[n] = 1;
      any = true;
    }
  }
  require(any, ErrorCode::EmptyErosion, "no cell deeper than " + std::to_string(depth));
  return r;
}

/// The erosion at depth 1/k.
inline Region erode(const Domain& domain, int k) {
  require(k > 0, ErrorCode::InvalidArgument, "erosion parameter must be positive");
  return erode_to_depth(domain, 1.0 / k);
}

struct ShortestPathTree {
  std::vector<double> dist;
  std::vector<int> parent;  // -1 at sources and unreached nodes

  bool reached(int node) const { return std::isfinite(dist[node]); }

  /// Node sequence from the source to `node`.
  std::vector<int> path_to(int node) const {
    std::vector<int> out;
    for (int v = node; v >= 0; v = parent[v]) out.push_back(v);
    std::reverse(out.begin(), out.end());
    return out;
  }
};

/// Multi-source Dijkstra over the domain graph. Sources carry initial labels.
/// `allow_node(v)` and `allow_edge(u, v)` restrict the search; when `target`
/// is given the search stops once it is settled.
template <class NodeFilter, class EdgeFilter>
ShortestPathTree dijkstra(const Domain& domain, std::span<const std::pair<int, double>> sources,
                          NodeFilter&& allow_node, EdgeFilter&& allow_edge, int target = -1) {
  const std::size_t n = domain.size();
  ShortestPathTree tree{std::vector<double>(n, std::numeric_limits<double>::infinity()),
                        std::vector<int>(n, -1)};
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (const auto& [s, label] : sources) {
    if (label < tree.dist[s]) {
      tree.dist[s] = label;
      heap.push({label, s});
    }
  }
  std::vector<char> done(n, 0);
  while (!heap.empty()) {
    const auto [du, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == target) break;
    for (const auto& e : domain.neighbors(u)) {
      if (done[e.to] || !allow_node(e.to) || !allow_edge(u, e.to)) continue;
      const double nd = du + e.weight;
      if (nd < tree.dist[e.to]) {
        tree.dist[e.to] = nd;
        tree.parent[e.to] = u;
        heap.push({nd, e.to});
      }
    }
  }
  return tree;
}

inline ShortestPathTree dijkstra(const Domain& domain, int source, int target = -1) {
  const std::pair<int, double> src{source, 0.0};
  return dijkstra(domain, std::span<const std::pair<int, double>>(&src, 1), [](int) { return true; },
                  [](int, int) { return true; }, target);
}

/// Piecewise-linear path; a closed path includes the segment back to the
/// first vertex.
struct PLPath {
  std::vector<Vec2> vertices;
  bool closed = false;

  std::vector<Segment> segments() const {
    std::vector<Segment> out;
    for (std::size_t i = 0; i + 1 < vertices.size(); ++i) out.push_back({vertices[i], vertices[i + 1]});
    if (closed && vertices.size() > 1) out.push_back({vertices.back(), vertices.front()});
    return out;
  }

  PLPath reversed() const {
    PLPath r{std::vector<Vec2>(vertices.rbegin(), vertices.rend()), closed};
    return r;
  }
};

inline double path_length(const PLPath& path, Norm n) {
  require(!path.vertices.empty(), ErrorCode::InvalidArgument, "empty path");
  double len = 0.0;
  for (const auto& s : path.segments()) len += norm(s.b - s.a, n);
  return len;
}

/// In-domain check: every segment stays in the union of interior cells.
inline bool validate_path(const Domain& domain, const PLPath& path) {
  if (path.vertices.empty()) return false;
  if (path.vertices.size() == 1) return domain.point_in_interior_cells(path.vertices[0]);
  for (const auto& s : path.segments()) {
    if (!domain.segment_in_interior_cells(s.a, s.b)) return false;
  }
  return true;
}

struct PathSample {
  Vec2 point;
  Vec2 velocity;
};

/// m samples of the constant-speed reparametrization on t_i = i/(m-1);
/// speed (measured in `n`) equals the path length.
inline std::vector<PathSample> constant_speed_samples(const PLPath& path, int m, Norm n) {
  require(m >= 2, ErrorCode::InvalidArgument, "need at least two samples");
  const auto segs = path.segments();
  const double total = segs.empty() ? 0.0 : path_length(path, n);
  require(total > 0.0, ErrorCode::ZeroLengthPath, "path has zero length");
  std::vector<double> cum{0.0};
  for (const auto& s : segs) cum.push_back(cum.back() + norm(s.b - s.a, n));

  std::vector<PathSample> out;
  out.reserve(m);
  std::size_t seg = 0;
  for (int i = 0; i < m; ++i) {
    const double target = total * i / (m - 1);
    while (seg + 1 < segs.size() && cum[seg + 1] < target) ++seg;
    // skip zero-length segments so the velocity is well defined
    while (seg + 1 < segs.size() && cum[seg + 1] - cum[seg] <= 0.0) ++seg;
    const Segment& s = segs[seg];
    const double seg_len = cum[seg + 1] - cum[seg];
    const double local = seg_len > 0.0 ? std::clamp((target - cum[seg]) / seg_len, 0.0, 1.0) : 0.0;
    const Vec2 p = i == m - 1 ? s.b : s.a + local * (s.b - s.a);
    out.push_back({p, (s.b - s.a) * (total / seg_len)});
  }
  return out;
}

struct GeodesicResult {
  double distance;
  PLPath path;
};

/// Graph distance between the cells snapped from x and y, with the shortest
/// path as a polyline through cell centres.
inline GeodesicResult intrinsic_distance(const Domain& domain, Vec2 x, Vec2 y) {
  const int a = domain.snap_or_throw(x);
  const int b = domain.snap_or_throw(y);
  if (a == b) return {0.0, PLPath{{domain.center(a)}, false}};
  const auto tree = dijkstra(domain, a, b);
  PLPath path;
  for (int v : tree.path_to(b)) path.vertices.push_back(domain.center(v));
  return {tree.dist[b], std::move(path)};
}

}  // namespace freeflow
