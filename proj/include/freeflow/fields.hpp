#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "freeflow/domain.hpp"
#include "freeflow/error.hpp"
#include "freeflow/geometry.hpp"
#include "freeflow/parallel.hpp"

namespace freeflow {

/// Cell-centred field over the interior cells of a domain. Values outside
/// `support` are undefined and never read.
template <class T>
struct GridField {
  DomainPtr domain;
  std::vector<T> values;     // indexed by node
  std::vector<char> support; // indexed by node

  GridField() = default;
  explicit GridField(const Domain& d, T fill = T{})
      : domain(d.shared_from_this()), values(d.size(), fill), support(d.size(), 1) {}

  template <class Fn>
  static GridField sample(const Domain& d, Fn&& fn) {
    GridField f(d);
    for (std::size_t n = 0; n < d.size(); ++n) f.values[n] = fn(d.center(static_cast<int>(n)));
    return f;
  }

  bool supported(int node) const { return node >= 0 && support[node] != 0; }
  bool fully_supported() const { return std::all_of(support.begin(), support.end(), [](char c) { return c != 0; }); }
  std::size_t support_count() const {
    return static_cast<std::size_t>(std::count(support.begin(), support.end(), 1));
  }

  void restrict_to(const std::vector<char>& mask) {
    for (std::size_t n = 0; n < support.size(); ++n) support[n] = support[n] && mask[n];
  }
};

using GridScalarField = GridField<double>;
using GridVectorField = GridField<Vec2>;

/// Essential sup of the dual norm over supported cells.
inline double sup_norm(const GridVectorField& g) {
  double s = 0.0;
  for (std::size_t n = 0; n < g.values.size(); ++n) {
    if (g.support[n]) s = std::max(s, dual_norm(g.values[n], g.domain->norm()));
  }
  return s;
}

/// Grid L1 norm: sum of primal norms times the cell area.
inline double l1_norm(const GridVectorField& g) {
  const double area = g.domain->h() * g.domain->h();
  double s = 0.0;
  for (std::size_t n = 0; n < g.values.size(); ++n) {
    if (g.support[n]) s += norm(g.values[n], g.domain->norm()) * area;
  }
  return s;
}

inline double sup_abs(const GridScalarField& f) {
  double s = 0.0;
  for (std::size_t n = 0; n < f.values.size(); ++n) {
    if (f.support[n]) s = std::max(s, std::abs(f.values[n]));
  }
  return s;
}

/// Bilinear interpolation between supported cell centres. The point must lie
/// in the closed square of a supported cell; missing corners are dropped and
/// the remaining weights renormalized.
template <class T>
std::optional<T> interpolate(const GridField<T>& f, Vec2 p) {
  const Domain& d = *f.domain;
  if (!d.point_in_cells(p, [&](int n) { return f.support[n] != 0; })) return std::nullopt;
  const double fx = (p.x - d.origin().x) / d.h() - 0.5;
  const double fy = (p.y - d.origin().y) / d.h() - 0.5;
  const int i0 = static_cast<int>(std::floor(fx));
  const int j0 = static_cast<int>(std::floor(fy));
  const double tx = fx - i0, ty = fy - j0;
  const std::array<std::pair<CellIndex, double>, 4> corners{{
      {{i0, j0}, (1 - tx) * (1 - ty)},
      {{i0 + 1, j0}, tx * (1 - ty)},
      {{i0, j0 + 1}, (1 - tx) * ty},
      {{i0 + 1, j0 + 1}, tx * ty},
  }};
  T acc{};
  double wsum = 0.0;
  for (const auto& [c, w] : corners) {
    const int n = d.node_at(c.i, c.j);
    if (w <= 0.0 || !f.supported(n)) continue;
    acc += w * f.values[n];
    wsum += w;
  }
  if (wsum <= 0.0) return std::nullopt;
  return acc * (1.0 / wsum);
}

/// Closed-form vector field with a validity predicate.
struct AnalyticField {
  std::function<Vec2(Vec2)> evaluate;
  std::function<bool(Vec2)> valid = [](Vec2) { return true; };
};

/// (-y, x) / (x^2 + y^2) about `center`, valid where |p - center| >= min_radius.
inline AnalyticField vortex_field(Vec2 center, double min_radius) {
  require(min_radius > 0.0, ErrorCode::InvalidArgument, "vortex needs a positive exclusion radius");
  return AnalyticField{
      [center](Vec2 p) {
        const Vec2 q = p - center;
        const double r2 = dot(q, q);
        return Vec2{-q.y / r2, q.x / r2};
      },
      [center, min_radius](Vec2 p) { return euclid(p - center) >= min_radius; }};
}

inline GridVectorField sample_field(const Domain& d, const AnalyticField& g) {
  GridVectorField out(d);
  for (std::size_t n = 0; n < d.size(); ++n) {
    const Vec2 c = d.center(static_cast<int>(n));
    if (g.valid(c)) {
      out.values[n] = g.evaluate(c);
    } else {
      out.support[n] = 0;
    }
  }
  return out;
}

/// Scalar test function on all of E with its analytic gradient.
struct TestFunction {
  std::function<double(Vec2)> value;
  std::function<Vec2(Vec2)> gradient;
};

inline TestFunction gaussian_bump(Vec2 center, double sigma, double amplitude = 1.0) {
  const double s2 = sigma * sigma;
  return TestFunction{
      [=](Vec2 p) { const Vec2 q = p - center; return amplitude * std::exp(-dot(q, q) / (2 * s2)); },
      [=](Vec2 p) {
        const Vec2 q = p - center;
        return (-amplitude / s2 * std::exp(-dot(q, q) / (2 * s2))) * q;
      }};
}

/// Ten Gaussian bumps spread over `box`, with widths a quarter to a half of
/// its smaller side.
inline std::vector<TestFunction> gaussian_battery(const Rect& box) {
  const double w = box.hi.x - box.lo.x, hgt = box.hi.y - box.lo.y;
  const double side = std::min(w, hgt);
  std::vector<TestFunction> out;
  for (int i = 0; i < 10; ++i) {
    const double u = std::fmod(0.13 + 0.618034 * i, 1.0);
    const double v = std::fmod(0.29 + 0.41421 * i, 1.0);
    const Vec2 c{box.lo.x + u * w, box.lo.y + v * hgt};
    const double sigma = side * (0.25 + 0.025 * i);
    const double amp = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.1 * i);
    out.push_back(gaussian_bump(c, sigma, amp));
  }
  return out;
}

/// Sum of `terms` plane waves a sin(w . p + phi) with seeded amplitudes,
/// frequencies in [1, 4] and phases.
inline TestFunction random_trig_function(std::uint64_t seed, int terms = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-0.5, 0.5), freq(1.0, 4.0), angle(0.0, 2.0 * std::numbers::pi);
  struct Wave { double a; Vec2 w; double phi; };
  std::vector<Wave> waves;
  for (int t = 0; t < terms; ++t) {
    const double a = amp(rng), f = freq(rng), th = angle(rng), phi = angle(rng);
    waves.push_back({a, {f * std::cos(th), f * std::sin(th)}, phi});
  }
  return TestFunction{
      [waves](Vec2 p) {
        double s = 0.0;
        for (const auto& w : waves) s += w.a * std::sin(dot(w.w, p) + w.phi);
        return s;
      },
      [waves](Vec2 p) {
        Vec2 g{};
        for (const auto& w : waves) g += (w.a * std::cos(dot(w.w, p) + w.phi)) * w.w;
        return g;
      }};
}

/// Discrete mollifier: normalized samples of exp(-1/(1-|x|^2)) scaled to
/// radius 1/k, on the cell offsets strictly inside that radius.
struct Mollifier {
  int k = 1;
  double radius = 1.0;
  std::vector<CellIndex> offsets;
  std::vector<double> weights;
};

inline double bump(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

inline Mollifier make_mollifier(const Domain& domain, int k) {
  require(k > 0, ErrorCode::InvalidArgument, "mollifier index must be positive");
  const double h = domain.h();
  Mollifier m{k, 1.0 / k, {}, {}};
  require(m.radius >= h, ErrorCode::KernelTooSmall, "kernel radius 1/k is below the grid spacing");
  const int reach = static_cast<int>(std::ceil(m.radius / h));
  double total = 0.0;
  for (int b = -reach; b <= reach; ++b) {
    for (int a = -reach; a <= reach; ++a) {
      const double r2 = (a * a + b * b) * h * h / (m.radius * m.radius);
      const double w = bump(r2);
      if (w <= 0.0) continue;
      m.offsets.push_back({a, b});
      m.weights.push_back(w);
      total += w;
    }
  }
  for (double& w : m.weights) w /= total;
  return m;
}

/// Kernel average of g. The result is supported on the cells deeper than
/// radius + h/2 whose kernel taps all land where g is supported.
inline GridVectorField mollify(const GridVectorField& g, const Mollifier& m) {
  const Domain& d = *g.domain;
  const Region region = erode_to_depth(d, m.radius + 0.5 * d.h());
  GridVectorField out(d);
  out.support = region.mask;
  parallel_for(d.size(), [&](std::size_t n) {
    if (!out.support[n]) return;
    const auto [i, j] = d.cell(static_cast<int>(n));
    Vec2 acc{};
    for (std::size_t t = 0; t < m.offsets.size(); ++t) {
      const int v = d.node_at(i + m.offsets[t].i, j + m.offsets[t].j);
      if (v < 0) throw Error(ErrorCode::EmptyErosion, "kernel tap left the interior");
      if (!g.support[v]) {
        out.support[n] = 0;
        return;
      }
      acc += m.weights[t] * g.values[v];
    }
    out.values[n] = acc;
  });
  return out;
}

/// Finite-difference gradient over graph-joined axis neighbours: central
/// where both are supported, one-sided where only one is. Cells lacking a
/// neighbour on some axis drop out of the support.
inline GridVectorField gradient(const GridScalarField& f) {
  const Domain& d = *f.domain;
  const double h = d.h();
  GridVectorField out(d);
  std::size_t kept = 0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    out.support[n] = 0;
    if (!f.support[n]) continue;
    auto axis = [&](int di, int dj) -> std::optional<double> {
      const int plus = d.linked(static_cast<int>(n), di, dj);
      const int minus = d.linked(static_cast<int>(n), -di, -dj);
      const bool p = f.supported(plus), m = f.supported(minus);
      if (p && m) return (f.values[plus] - f.values[minus]) / (2 * h);
      if (p) return (f.values[plus] - f.values[n]) / h;
      if (m) return (f.values[n] - f.values[minus]) / h;
      return std::nullopt;
    };
    const auto gx = axis(1, 0);
    const auto gy = axis(0, 1);
    if (!gx || !gy) continue;
    out.values[n] = {*gx, *gy};
    out.support[n] = 1;
    ++kept;
  }
  require(kept > 0, ErrorCode::IsolatedCell, "no cell has a neighbour along both axes");
  return out;
}

namespace detail {

template <class Eval>
double midpoint_line_integral(const PLPath& path, double step, Eval&& eval) {
  double total = 0.0;
  for (const auto& s : path.segments()) {
    const Vec2 delta = s.b - s.a;
    const double len = euclid(delta);
    if (len == 0.0) continue;
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / step - 1e-12)));
    const Vec2 piece = delta / pieces;
    for (int q = 0; q < pieces; ++q) {
      total += dot(eval(s.a + (q + 0.5) * piece), piece);
    }
  }
  return total;
}

}  // namespace detail

/// Composite midpoint rule for the integral of g along the path.
inline double line_integral(const GridVectorField& g, const PLPath& path, double step) {
  require(step > 0.0 && step <= g.domain->h() * (1 + 1e-12), ErrorCode::InvalidArgument,
          "quadrature step must lie in (0, h]");
  return detail::midpoint_line_integral(path, step, [&](Vec2 p) {
    auto v = interpolate(g, p);
    if (!v) throw Error(ErrorCode::PathLeavesSupport, "path sample outside the field support");
    return *v;
  });
}

inline double line_integral(const AnalyticField& g, const PLPath& path, double step) {
  require(step > 0.0, ErrorCode::InvalidArgument, "quadrature step must be positive");
  return detail::midpoint_line_integral(path, step, [&](Vec2 p) {
    if (!g.valid(p)) throw Error(ErrorCode::PathLeavesSupport, "path sample outside the field's validity set");
    return g.evaluate(p);
  });
}

/// max |d1 G2 - d2 G1| for G = g * u_k, by central differences.
inline double jacobian_symmetry_defect(const GridVectorField& g, const Mollifier& m) {
  const GridVectorField G = mollify(g, m);
  const Domain& d = *g.domain;
  const double h = d.h();
  double worst = 0.0;
  bool any = false;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (!G.support[n]) continue;
    const auto [i, j] = d.cell(static_cast<int>(n));
    const int e = d.node_at(i + 1, j), w = d.node_at(i - 1, j);
    const int nn = d.node_at(i, j + 1), s = d.node_at(i, j - 1);
    if (!G.supported(e) || !G.supported(w) || !G.supported(nn) || !G.supported(s)) continue;
    const double d1g2 = (G.values[e].y - G.values[w].y) / (2 * h);
    const double d2g1 = (G.values[nn].x - G.values[s].x) / (2 * h);
    worst = std::max(worst, std::abs(d1g2 - d2g1));
    any = true;
  }
  require(any, ErrorCode::EmptyErosion, "no cell with a full central-difference stencil after mollification");
  return worst;
}

/// Closed 4-neighbour cycles, one per hole of `mask` (a connected set of
/// non-mask cells not touching the grid border). Each cycle is the shortest
/// loop that crosses a horizontal cut running from the hole to the right
/// exactly once, oriented counter-clockwise.
inline std::vector<PLPath> hole_cycles(const Domain& d, const std::vector<char>& mask) {
  const int nx = d.nx(), ny = d.ny();
  auto free_cell = [&](int i, int j) {
    const int n = d.node_at(i, j);
    return n >= 0 && mask[n] != 0;
  };
  std::vector<int> label(static_cast<std::size_t>(nx) * ny, -1);
  auto at = [&](int i, int j) -> int& { return label[static_cast<std::size_t>(j) * nx + i]; };
  std::vector<PLPath> loops;
  int next = 0;
  for (int j0 = 0; j0 < ny; ++j0) {
    for (int i0s = 0; i0s < nx; ++i0s) {
      if (free_cell(i0s, j0) || at(i0s, j0) >= 0) continue;
      const int id = next++;
      bool touches_border = false;
      int i0 = i0s;
      std::deque<CellIndex> queue{{i0s, j0}};
      at(i0s, j0) = id;
      while (!queue.empty()) {
        const auto [ci, cj] = queue.front();
        queue.pop_front();
        if (ci == 0 || cj == 0 || ci == nx - 1 || cj == ny - 1) touches_border = true;
        if (cj == j0) i0 = std::max(i0, ci);
        for (int dj = -1; dj <= 1; ++dj) {
          for (int di = -1; di <= 1; ++di) {
            const int a = ci + di, b = cj + dj;
            if (!d.in_grid(a, b) || free_cell(a, b) || at(a, b) >= 0) continue;
            at(a, b) = id;
            queue.push_back({a, b});
          }
        }
      }
      if (touches_border) continue;

      // Cut: the ray y = y*, x > x* with y* a quarter cell above row j0.
      const double xstar = d.cell_center(i0, j0).x;
      int istar = -1;
      for (int i = i0 + 1; i < nx; ++i) {
        if (free_cell(i, j0) && free_cell(i, j0 + 1)) {
          istar = i;
          break;
        }
      }
      if (istar < 0) continue;
      const int source = d.node_at(istar, j0 + 1);
      const int target = d.node_at(istar, j0);
      auto crosses_cut = [&](CellIndex a, CellIndex b) {
        if (a.i != b.i) return false;
        const int lo = std::min(a.j, b.j);
        return lo == j0 && d.cell_center(a.i, lo).x > xstar;
      };
      std::vector<int> parent(d.size(), -2);
      std::deque<int> bfs{source};
      parent[source] = -1;
      while (!bfs.empty() && parent[target] == -2) {
        const int u = bfs.front();
        bfs.pop_front();
        const CellIndex cu = d.cell(u);
        const std::array<CellIndex, 4> nbrs{{{cu.i + 1, cu.j}, {cu.i - 1, cu.j}, {cu.i, cu.j + 1}, {cu.i, cu.j - 1}}};
        for (const auto& cv : nbrs) {
          if (!free_cell(cv.i, cv.j) || crosses_cut(cu, cv)) continue;
          const int v = d.node_at(cv.i, cv.j);
          if (parent[v] != -2) continue;
          parent[v] = u;
          bfs.push_back(v);
        }
      }
      if (parent[target] == -2) continue;
      PLPath loop;
      loop.closed = true;
      for (int v = target; v >= 0; v = parent[v]) loop.vertices.push_back(d.center(v));
      std::reverse(loop.vertices.begin(), loop.vertices.end());
      loops.push_back(std::move(loop));
    }
  }
  return loops;
}

/// Every closed unit face (four supported cells around a grid vertex).
inline std::vector<PLPath> face_cycles(const Domain& d, const std::vector<char>& mask) {
  std::vector<PLPath> loops;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (!mask[n]) continue;
    const auto [i, j] = d.cell(static_cast<int>(n));
    const int a = d.node_at(i + 1, j), b = d.node_at(i + 1, j + 1), c = d.node_at(i, j + 1);
    if (a < 0 || b < 0 || c < 0 || !mask[a] || !mask[b] || !mask[c]) continue;
    loops.push_back(PLPath{{d.center(static_cast<int>(n)), d.center(a), d.center(b), d.center(c)}, true});
  }
  return loops;
}

struct ConservativityReport {
  double max_loop_integral = 0.0;
  std::size_t worst_loop = 0;
  PLPath worst;
  double tolerance = 0.0;
  bool conservative = true;
  std::size_t loops_checked = 0;
  std::vector<double> hole_loop_integrals;
  /// Same loops on the raw field where it is defined; informative only.
  double raw_max_loop_integral = 0.0;
  Region region;
};

/// Loop test of g * u_k. Without explicit loops, checks every unit face of the
/// mollified support plus one cycle per hole. The default tolerance is
/// 10 h l_max |g|_inf.
inline ConservativityReport conservativity_check(const GridVectorField& g, int k,
                                                 const std::optional<std::vector<PLPath>>& loops = std::nullopt,
                                                 std::optional<double> tolerance = std::nullopt) {
  const Domain& d = *g.domain;
  const Mollifier m = make_mollifier(d, k);
  const GridVectorField G = mollify(g, m);
  ConservativityReport rep;
  rep.region = Region{g.domain, G.support, m.radius + 0.5 * d.h()};

  std::vector<PLPath> checked;
  std::size_t hole_begin = 0;
  if (loops) {
    checked = *loops;
    hole_begin = checked.size();
    for (const auto& loop : checked) {
      require(loop.closed, ErrorCode::InvalidArgument, "conservativity loops must be closed");
      for (const auto& s : loop.segments()) {
        require(d.segment_in_cells(s.a, s.b, [&](int n) { return G.support[n] != 0; }),
                ErrorCode::LoopOutsideRegion, "loop leaves the mollified region");
      }
    }
  } else {
    checked = face_cycles(d, G.support);
    hole_begin = checked.size();
    auto holes = hole_cycles(d, G.support);
    checked.insert(checked.end(), holes.begin(), holes.end());
  }

  double lmax = 0.0;
  std::vector<double> integrals(checked.size());
  parallel_for(checked.size(), [&](std::size_t q) { integrals[q] = line_integral(G, checked[q], d.h()); }, 256);
  for (std::size_t q = 0; q < checked.size(); ++q) {
    lmax = std::max(lmax, path_length(checked[q], d.norm()));
    if (std::abs(integrals[q]) > rep.max_loop_integral || q == 0) {
      rep.max_loop_integral = std::abs(integrals[q]);
      rep.worst_loop = q;
    }
    if (q >= hole_begin) rep.hole_loop_integrals.push_back(integrals[q]);
  }
  for (const auto& loop : checked) {
    try {
      rep.raw_max_loop_integral = std::max(rep.raw_max_loop_integral, std::abs(line_integral(g, loop, d.h())));
    } catch (const Error&) {
    }
  }
  rep.loops_checked = checked.size();
  if (!checked.empty()) rep.worst = checked[rep.worst_loop];
  rep.tolerance = tolerance.value_or(10.0 * d.h() * lmax * sup_norm(g));
  rep.conservative = rep.max_loop_integral <= rep.tolerance;
  return rep;
}

/// Sum over supported cells of h(c) . grad phi(c) h^2: the discrete
/// <-div h, phi> for the zero extension of h to the whole plane.
inline double weak_divergence_pairing(const GridVectorField& hfield, const TestFunction& phi) {
  const Domain& d = *hfield.domain;
  const double area = d.h() * d.h();
  double s = 0.0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (hfield.support[n]) s += dot(hfield.values[n], phi.gradient(d.center(static_cast<int>(n))));
  }
  return s * area;
}

}  // namespace freeflow
