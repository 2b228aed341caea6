#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "freeflow/domain.hpp"
#include "freeflow/fields.hpp"
#include "freeflow/molecule.hpp"
#include "freeflow/parallel.hpp"

namespace freeflow {

/// Cross-section profile psi on [0, 1]: psi(0) = psi(1) = 0, 0 < psi <= 1
/// inside, Lipschitz with constant `lipschitz`.
struct Profile {
  std::string name;
  std::function<double(double)> psi;
  std::function<double(double)> dpsi;
  double lipschitz = 1.0;
};

inline Profile parabolic_profile() {
  return {"t(1-t)", [](double t) { return t * (1.0 - t); }, [](double t) { return 1.0 - 2.0 * t; }, 1.0};
}

inline Profile sine_profile() {
  using std::numbers::pi;
  return {"sin(pi t)", [](double t) { return std::sin(pi * t); }, [](double t) { return pi * std::cos(pi * t); }, pi};
}

inline Profile parse_profile(const std::string& name) {
  if (name == "t(1-t)" || name == "t*(1-t)") return parabolic_profile();
  if (name == "sin(pi t)" || name == "sin(pi*t)") return sine_profile();
  throw Error(ErrorCode::ConfigInvalid, "unknown profile '" + name + "'");
}

/// Checks the endpoint and range conditions on a sample of (0, 1).
inline bool profile_admissible(const Profile& p) {
  if (std::abs(p.psi(0.0)) > 1e-14 || std::abs(p.psi(1.0)) > 1e-14) return false;
  for (int i = 1; i < 1000; ++i) {
    const double v = p.psi(i / 1000.0);
    if (!(v > 0.0 && v <= 1.0 + 1e-14)) return false;
  }
  return true;
}

struct SpindleSpec {
  Vec2 x;
  Vec2 y;
  double epsilon = 0.1;
  Profile profile = parabolic_profile();
  int subsamples = 4;
};

/// Volume of the Euclidean ball of radius r in R^d.
inline double ball_volume(int d, double r) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(r, d);
}

/// The spindle field in R^n: zero off the lens
///   H = { x + t(y-x) + psi(t) w : t in (0,1), w ⟂ (y-x), |w| <= eps },
/// and on it (y - x + psi'(t) w) / (|y-x| |S| psi(t)^(n-1)) with |S| the
/// (n-1)-volume of the cross-section disk. Uses the Euclidean chart.
inline std::vector<double> spindle_value(std::span<const double> x, std::span<const double> y,
                                         std::span<const double> z, double epsilon, const Profile& profile) {
  const std::size_t n = x.size();
  std::vector<double> axis(n), rel(n), out(n, 0.0);
  double axis2 = 0.0, proj = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    axis[i] = y[i] - x[i];
    rel[i] = z[i] - x[i];
    axis2 += axis[i] * axis[i];
    proj += rel[i] * axis[i];
  }
  require(axis2 > 0.0, ErrorCode::DegenerateSegment, "spindle endpoints coincide");
  const double t = proj / axis2;
  if (!(t > 0.0 && t < 1.0)) return out;
  const double psi = profile.psi(t);
  if (!(psi > 0.0)) return out;
  std::vector<double> w(n);
  double w2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = (rel[i] - t * axis[i]) / psi;
    w2 += w[i] * w[i];
  }
  if (w2 > epsilon * epsilon) return out;
  const int dim = static_cast<int>(n);
  const double denom = std::sqrt(axis2) * ball_volume(dim - 1, epsilon) * std::pow(psi, dim - 1);
  const double slope = profile.dpsi(t);
  for (std::size_t i = 0; i < n; ++i) out[i] = (axis[i] + slope * w[i]) / denom;
  return out;
}

inline Vec2 spindle_value(const SpindleSpec& spec, Vec2 z) {
  const double x[2]{spec.x.x, spec.x.y}, y[2]{spec.y.x, spec.y.y}, p[2]{z.x, z.y};
  const auto v = spindle_value(x, y, p, spec.epsilon, spec.profile);
  return {v[0], v[1]};
}

struct SpindleField {
  SpindleSpec spec;
  GridVectorField field;
  double l1_norm = 0.0;
  double bound = 0.0;  // |y - x| + M eps in the domain norm
};

/// Cell averages of the spindle, integrated in its own chart
/// z = x + t (y - x) + psi(t) s n: there the density times the Jacobian is
/// (y - x + psi'(t) s n) / (2 eps), which is bounded, so midpoint samples in
/// (t, s) deposit the exact mass into the cell containing z. The sample
/// spacing is h / subsamples in both chart directions.
inline SpindleField spindle_field(const Domain& domain, const SpindleSpec& spec) {
  require(!(spec.x == spec.y), ErrorCode::DegenerateSegment, "spindle endpoints coincide");
  require(spec.epsilon > 0.0, ErrorCode::InvalidArgument, "spindle half-width must be positive");
  require(spec.subsamples >= 1, ErrorCode::InvalidArgument, "need at least one subsample per axis");
  require(profile_admissible(spec.profile), ErrorCode::InvalidArgument, "profile violates psi(0)=psi(1)=0, 0<psi<=1");
  require(domain.point_in_interior_cells(spec.x) && domain.point_in_interior_cells(spec.y) &&
              domain.segment_boundary_distance(spec.x, spec.y) > spec.epsilon,
          ErrorCode::SpindleLeavesDomain, "[x,y] + eps B is not inside the domain");

  const double h = domain.h();
  const Vec2 axis = spec.y - spec.x;
  const double len = euclid(axis);
  const Vec2 normal{-axis.y / len, axis.x / len};
  const double eps = spec.epsilon;
  const int nt = static_cast<int>(std::ceil(spec.subsamples * len / h));
  const int ns = static_cast<int>(std::ceil(spec.subsamples * 2.0 * eps / h));
  const double dt = 1.0 / nt, ds = 2.0 * eps / ns;
  const double weight = dt * ds / (2.0 * eps * h * h);

  SpindleField out{spec, GridVectorField(domain), 0.0, norm(axis, domain.norm()) + spec.profile.lipschitz * eps};
  for (int a = 0; a < nt; ++a) {
    const double t = (a + 0.5) * dt;
    const double psi = spec.profile.psi(t), slope = spec.profile.dpsi(t);
    for (int b = 0; b < ns; ++b) {
      const double sv = -eps + (b + 0.5) * ds;
      const Vec2 z = spec.x + t * axis + (psi * sv) * normal;
      const int node = domain.node_at(static_cast<int>(std::floor((z.x - domain.origin().x) / h)),
                                      static_cast<int>(std::floor((z.y - domain.origin().y) / h)));
      require(node >= 0, ErrorCode::SpindleLeavesDomain, "spindle support reaches a non-interior cell");
      out.field.values[node] += weight * (axis + (slope * sv) * normal);
    }
  }
  out.l1_norm = l1_norm(out.field);
  return out;
}

struct ChainResult {
  GridVectorField field;
  std::vector<double> epsilons;  // per segment after the clearance cap
  double bound = 0.0;            // sum of per-segment L1 bounds
};

/// Sum of spindles along the path; each segment's half-width is capped by its
/// clearance minus 1.5 h so the rasterized lens stays on interior cells.
inline ChainResult chain_spindles(const Domain& domain, const PLPath& path, double epsilon,
                                  const Profile& profile = parabolic_profile(), int subsamples = 4) {
  require(path.vertices.size() >= 2, ErrorCode::InvalidArgument, "chain needs at least one segment");
  ChainResult out{GridVectorField(domain), {}, 0.0};
  for (const auto& seg : path.segments()) {
    if (seg.a == seg.b) continue;
    const double clearance = domain.segment_boundary_distance(seg.a, seg.b);
    const double eps = std::min(epsilon, clearance - 1.5 * domain.h());
    require(eps > 0.0, ErrorCode::SpindleLeavesDomain, "segment has no clearance for a spindle");
    const auto sp = spindle_field(domain, SpindleSpec{seg.a, seg.b, eps, profile, subsamples});
    for (std::size_t n = 0; n < domain.size(); ++n) out.field.values[n] += sp.field.values[n];
    out.epsilons.push_back(eps);
    out.bound += sp.bound;
  }
  return out;
}

/// Integral of exp(-1/(1-|x|^2)) over the unit disk.
inline double bump_mass_2d() {
  static const double mass = [] {
    // 2 pi int_0^1 r exp(-1/(1-r^2)) dr by composite Simpson
    const int n = 20000;
    auto f = [](double r) { return r * bump(r * r); };
    double s = f(0.0) + f(1.0);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(static_cast<double>(i) / n);
    return 2.0 * std::numbers::pi * s / (3.0 * n);
  }();
  return mass;
}

/// Continuous mollifier u_k(x) = k^2 u(kx) with unit mass.
inline double mollifier_density(Vec2 x, int k) {
  const double kk = static_cast<double>(k);
  return kk * kk * bump(kk * kk * dot(x, x)) / bump_mass_2d();
}

/// h(z) = int_0^1 u_k(gamma(t) - z) gamma'(t) dt for a closed loop, by the
/// midpoint rule with step <= h/4. Divergence-free with support in the
/// (1/k)-tube around the loop.
inline GridVectorField loop_smear(const Domain& domain, const PLPath& loop, int k) {
  require(loop.closed, ErrorCode::InvalidArgument, "loop smear needs a closed path");
  require(k > 0, ErrorCode::InvalidArgument, "mollifier index must be positive");
  GridVectorField out(domain);
  const double radius = 1.0 / k;
  const double h = domain.h();
  for (const auto& seg : loop.segments()) {
    if (seg.a == seg.b) continue;
    require(domain.segment_boundary_distance(seg.a, seg.b) > radius, ErrorCode::TubeLeavesDomain,
            "loop tube meets the boundary");
  }
  const int reach = static_cast<int>(std::ceil(radius / h)) + 1;
  for (const auto& seg : loop.segments()) {
    const Vec2 delta = seg.b - seg.a;
    const double len = euclid(delta);
    if (len == 0.0) continue;
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / (0.25 * h))));
    const Vec2 piece = delta / pieces;
    for (int q = 0; q < pieces; ++q) {
      const Vec2 p = seg.a + (q + 0.5) * piece;
      const int ci = static_cast<int>(std::floor((p.x - domain.origin().x) / h));
      const int cj = static_cast<int>(std::floor((p.y - domain.origin().y) / h));
      for (int j = cj - reach; j <= cj + reach; ++j) {
        for (int i = ci - reach; i <= ci + reach; ++i) {
          const double w = mollifier_density(p - domain.cell_center(i, j), k);
          if (w <= 0.0) continue;
          const int node = domain.node_at(i, j);
          require(node >= 0, ErrorCode::TubeLeavesDomain, "loop tube reaches a non-interior cell");
          out.values[node] += w * piece;
        }
      }
    }
  }
  return out;
}

/// Discretized face measure of the box: mass +du per transverse step on the
/// face x_axis = hi, -du on x_axis = lo, each snapped to its cell.
inline Molecule rect_face_measure(const Domain& domain, const Rect& rect, int axis) {
  require(axis == 1 || axis == 2, ErrorCode::InvalidArgument, "axis must be 1 or 2");
  require(rect.hi.x > rect.lo.x && rect.hi.y > rect.lo.y, ErrorCode::InvalidArgument, "empty rectangle");
  const Polygon box{rect.lo, {rect.hi.x, rect.lo.y}, rect.hi, {rect.lo.x, rect.hi.y}};
  for (const auto& e : polygon_edges(box)) {
    require(!domain.segment_crosses_boundary(e.a, e.b) && domain.segment_in_interior_cells(e.a, e.b),
            ErrorCode::RectOutsideDomain, "rectangle is not inside the domain");
  }
  const double lo_t = axis == 1 ? rect.lo.y : rect.lo.x;
  const double hi_t = axis == 1 ? rect.hi.y : rect.hi.x;
  const int steps = std::max(1, static_cast<int>(std::lround((hi_t - lo_t) / domain.h())));
  const double du = (hi_t - lo_t) / steps;
  Molecule mu;
  for (int q = 0; q < steps; ++q) {
    const double u = lo_t + (q + 0.5) * du;
    const Vec2 plus = axis == 1 ? Vec2{rect.hi.x, u} : Vec2{u, rect.hi.y};
    const Vec2 minus = axis == 1 ? Vec2{rect.lo.x, u} : Vec2{u, rect.lo.y};
    const auto a = domain.snap(plus), b = domain.snap(minus);
    require(a && b, ErrorCode::RectOutsideDomain, "face point has no interior cell");
    mu.atoms.push_back({*a, du});
    mu.atoms.push_back({*b, -du});
  }
  mu.canonicalize();
  return mu;
}

}  // namespace freeflow
