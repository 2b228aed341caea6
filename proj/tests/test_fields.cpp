#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "freeflow/fields.hpp"
#include "oracles.hpp"

using namespace freeflow;

namespace {

constexpr double kPi = std::numbers::pi;

DomainPtr square(double h, Norm n = Norm::l2) {
  DomainSpec s;
  s.outer = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  s.h = h;
  s.norm = n;
  return build_domain(s);
}

DomainPtr annulus(double h) {
  DomainSpec s;
  s.outer = {{-1.5, -1.5}, {1.5, -1.5}, {1.5, 1.5}, {-1.5, 1.5}};
  s.holes = {{{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}};
  s.h = h;
  s.basepoint = Vec2{1.0, 0.0};
  return build_domain(s);
}

PLPath circle(Vec2 c, double r, int sides) {
  PLPath p;
  p.closed = true;
  for (int i = 0; i < sides; ++i) {
    const double t = 2 * kPi * i / sides;
    p.vertices.push_back({c.x + r * std::cos(t), c.y + r * std::sin(t)});
  }
  return p;
}

}  // namespace

TEST(Mollifier, NormalizedNonNegativeWithinRadius) {
  const auto d = square(1.0 / 64);
  const auto m = make_mollifier(*d, 16);  // radius 4h
  double sum = 0.0;
  for (std::size_t t = 0; t < m.weights.size(); ++t) {
    EXPECT_GE(m.weights[t], 0.0);
    sum += m.weights[t];
    EXPECT_LT(std::hypot(m.offsets[t].i, m.offsets[t].j) * d->h(), m.radius);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_LE(m.offsets.size(), 81u);
  EXPECT_GE(m.offsets.size(), 37u);
  EXPECT_DOUBLE_EQ(make_mollifier(*d, 32).radius, 0.5 * m.radius);
}

TEST(Mollifier, KernelTooSmall) {
  const auto d = square(1.0 / 16);
  EXPECT_THROW(make_mollifier(*d, 32), Error);
  try {
    make_mollifier(*d, 32);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KernelTooSmall);
  }
}

TEST(Mollify, ConstantFieldIsFixed) {
  const auto d = square(1.0 / 64);
  const auto m = make_mollifier(*d, 8);
  const auto G = mollify(GridVectorField(*d, Vec2{0.3, -1.2}), m);
  const auto region = erode_to_depth(*d, m.radius + 0.5 * d->h());
  EXPECT_EQ(G.support, region.mask);
  for (std::size_t n = 0; n < d->size(); ++n) {
    if (!G.support[n]) continue;
    EXPECT_NEAR(G.values[n].x, 0.3, 1e-12);
    EXPECT_NEAR(G.values[n].y, -1.2, 1e-12);
  }
}

TEST(Mollify, ContractsSupNorm) {
  const auto d = square(1.0 / 32);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  for (Norm n : {Norm::l1, Norm::l2}) {
    DomainSpec s = d->spec();
    s.norm = n;
    const auto dn = build_domain(s);
    const auto m = make_mollifier(*dn, 6);
    for (int trial = 0; trial < 25; ++trial) {
      GridVectorField g(*dn);
      for (auto& v : g.values) v = {gauss(rng), gauss(rng)};
      EXPECT_LE(sup_norm(mollify(g, m)), sup_norm(g) + 1e-12);
    }
  }
}

TEST(Mollify, HarmonicVortexKeepsPointValues) {
  const auto d = annulus(1.0 / 64);
  const auto v = vortex_field({0, 0}, 0.5);
  const auto G = mollify(sample_field(*d, v), make_mollifier(*d, 16));
  double worst = 0.0;
  for (std::size_t n = 0; n < d->size(); ++n) {
    const Vec2 c = d->center(static_cast<int>(n));
    if (!G.support[n] || d->dist_to_boundary(static_cast<int>(n)) < 0.2) continue;
    worst = std::max(worst, euclid(G.values[n] - v.evaluate(c)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Gradient, LinearExactConstantZero) {
  const auto d = square(1.0 / 32);
  const auto g = gradient(GridScalarField::sample(*d, [](Vec2 p) { return p.x; }));
  const auto z = gradient(GridScalarField(*d, 4.0));
  for (std::size_t n = 0; n < d->size(); ++n) {
    EXPECT_NEAR(g.values[n].x, 1.0, 1e-12);
    EXPECT_NEAR(g.values[n].y, 0.0, 1e-12);
    EXPECT_EQ(z.values[n].x, 0.0);
    EXPECT_EQ(z.values[n].y, 0.0);
  }
}

TEST(Gradient, QuadraticSecondOrderAtCentralCells) {
  const auto d = square(1.0 / 64);
  const auto g = gradient(GridScalarField::sample(*d, [](Vec2 p) { return 0.5 * p.x * p.x; }));
  for (std::size_t n = 0; n < d->size(); ++n) {
    const auto [i, j] = d->cell(static_cast<int>(n));
    if (d->node_at(i + 1, j) < 0 || d->node_at(i - 1, j) < 0) continue;
    EXPECT_NEAR(g.values[n].x, d->center(static_cast<int>(n)).x, 1e-12);
  }
}

TEST(Gradient, IsolatedCell) {
  DomainSpec s;
  s.h = 0.1;
  s.outer = {{0, 0}, {0.3, 0}, {0.3, 0.3}, {0, 0.3}};
  const auto d = build_domain(s);
  ASSERT_EQ(d->size(), 1u);
  try {
    gradient(GridScalarField(*d, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IsolatedCell);
  }
}

TEST(LineIntegral, ConstantField) {
  DomainSpec s;
  s.outer = {{-1, -1}, {4, -1}, {4, 1}, {-1, 1}};
  s.h = 1.0 / 16;
  const auto d = build_domain(s);
  const GridVectorField g(*d, Vec2{1, 0});
  EXPECT_NEAR(line_integral(g, PLPath{{{0, 0}, {3, 0}}, false}, d->h()), 3.0, 1e-9);
}

TEST(LineIntegral, AnalyticVortexCircle) {
  const auto v = vortex_field({0, 0}, 0.5);
  EXPECT_NEAR(line_integral(v, circle({0, 0}, 1.0, 4096), 1e-3), 2 * kPi, 1e-2);
}

TEST(LineIntegral, GradientGivesEndpointDifference) {
  const auto d = square(1.0 / 64);
  auto f = [](Vec2 p) { return std::sin(2 * p.x) * std::cos(p.y) + p.y * p.y; };
  const auto fs = GridScalarField::sample(*d, f);
  const auto g = gradient(fs);
  const PLPath path{{{0.1, 0.1}, {0.6, 0.2}, {0.8, 0.9}}, false};
  EXPECT_NEAR(line_integral(g, path, d->h()), f({0.8, 0.9}) - f({0.1, 0.1}), 5 * d->h());
}

TEST(LineIntegral, AdditiveAndAntisymmetric) {
  const auto d = square(1.0 / 32);
  const auto g = GridVectorField::sample(*d, [](Vec2 p) { return Vec2{p.y * p.y, std::sin(3 * p.x)}; });
  const PLPath a{{{0.1, 0.2}, {0.5, 0.3}}, false}, b{{{0.5, 0.3}, {0.7, 0.8}}, false};
  const PLPath ab{{{0.1, 0.2}, {0.5, 0.3}, {0.7, 0.8}}, false};
  const double h = d->h();
  EXPECT_NEAR(line_integral(g, ab, h), line_integral(g, a, h) + line_integral(g, b, h), 1e-12);
  EXPECT_NEAR(line_integral(g, ab.reversed(), h), -line_integral(g, ab, h), 1e-12);
}

TEST(LineIntegral, LeavingSupportIsAnError) {
  const auto d = annulus(1.0 / 16);
  const GridVectorField g(*d, Vec2{1, 0});
  try {
    line_integral(g, PLPath{{{-1, 0}, {1, 0}}, false}, d->h());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PathLeavesSupport);
  }
}

TEST(JacobianSymmetry, GradientVortexAndShear) {
  const auto d = square(1.0 / 64);
  const auto m = make_mollifier(*d, 8);
  const auto grad = GridVectorField::sample(
      *d, [](Vec2 p) { return Vec2{kPi * std::cos(kPi * p.x) * p.y, std::sin(kPi * p.x)}; });
  EXPECT_LT(jacobian_symmetry_defect(grad, m), 10 * d->h());
  const auto shear = GridVectorField::sample(*d, [](Vec2 p) { return Vec2{p.y, 0.0}; });
  EXPECT_NEAR(jacobian_symmetry_defect(shear, m), 1.0, 1e-9);

  const auto a = annulus(1.0 / 64);
  EXPECT_LT(jacobian_symmetry_defect(sample_field(*a, vortex_field({0, 0}, 0.5)), make_mollifier(*a, 8)),
            10 * a->h());
}

// Central differences commute, so away from the one-sided boundary layer the
// discrete Jacobian of a discrete gradient is symmetric to rounding.
TEST(JacobianSymmetry, DiscreteGradientIsSymmetric) {
  auto defect = [](double h) {
    const auto d = square(h);
    const auto f = GridScalarField::sample(*d, [](Vec2 p) { return std::sin(kPi * p.x) * p.y * p.y; });
    return jacobian_symmetry_defect(gradient(f), make_mollifier(*d, 4));
  };
  EXPECT_LT(defect(1.0 / 32), 1e-9);
  EXPECT_LT(defect(1.0 / 64), 1e-9);
}

TEST(Conservativity, GradientIsConservative) {
  const auto d = square(1.0 / 64);
  const auto f = random_trig_function(3);
  const auto rep = conservativity_check(GridVectorField::sample(*d, f.gradient), 8);
  EXPECT_TRUE(rep.conservative);
  EXPECT_LE(rep.max_loop_integral, rep.tolerance);
  EXPECT_TRUE(rep.hole_loop_integrals.empty());
}

TEST(Conservativity, VortexOnAnnulusIsNot) {
  const auto d = annulus(1.0 / 64);
  const auto rep = conservativity_check(sample_field(*d, vortex_field({0, 0}, 0.5)), 8);
  EXPECT_FALSE(rep.conservative);
  ASSERT_EQ(rep.hole_loop_integrals.size(), 1u);
  EXPECT_NEAR(rep.hole_loop_integrals[0], 2 * kPi, 0.05);
}

TEST(Conservativity, VortexOnSimplyConnectedSubsquare) {
  DomainSpec s;
  s.outer = {{0.625, -1.375}, {1.375, -1.375}, {1.375, 1.375}, {0.625, 1.375}};
  s.h = 1.0 / 64;
  const auto d = build_domain(s);
  const auto rep = conservativity_check(sample_field(*d, vortex_field({0, 0}, 0.5)), 8);
  EXPECT_TRUE(rep.conservative);
}

TEST(Conservativity, ExplicitLoopOutsideRegion) {
  const auto d = square(1.0 / 32);
  const GridVectorField g(*d, Vec2{1, 1});
  std::vector<PLPath> loops{PLPath{{{0.01, 0.01}, {0.5, 0.01}, {0.5, 0.5}}, true}};
  try {
    conservativity_check(g, 8, loops);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LoopOutsideRegion);
  }
}

TEST(WeakDivergence, ZeroField) {
  const auto d = square(1.0 / 32);
  EXPECT_EQ(weak_divergence_pairing(GridVectorField(*d), gaussian_bump({0.5, 0.5}, 0.2)), 0.0);
}

TEST(WeakDivergence, ConstantFieldSeesBoundaryFlux) {
  const double h = 1.0 / 128;
  const auto d = square(h);
  const auto phi = gaussian_bump({0.9, 0.5}, 0.2);
  const double value = weak_divergence_pairing(GridVectorField(*d, Vec2{1, 0}), phi);
  // The interior cells cover [h, 1-h]^2; the pairing is the flux of phi e1
  // through its two vertical faces.
  const double lo = h, hi = 1 - h;
  const double oracle_value =
      oracle::simpson([&](double y) { return phi.value({hi, y}) - phi.value({lo, y}); }, lo, hi);
  EXPECT_GT(std::abs(oracle_value), 0.05);
  EXPECT_NEAR(value, oracle_value, 1e-3);
}

TEST(VortexField, ClosedForm) {
  const Vec2 c{0.3, -0.2};
  const auto v = vortex_field(c, 0.5);
  const Vec2 at = v.evaluate(c + Vec2{1, 0});
  EXPECT_NEAR(at.x, 0.0, 1e-15);
  EXPECT_NEAR(at.y, 1.0, 1e-15);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 50; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 g = v.evaluate(p);
    EXPECT_NEAR(euclid(g), 1.0 / euclid(p - c), 1e-12);
    EXPECT_NEAR(dot(g, p - c), 0.0, 1e-12);
  }
  EXPECT_FALSE(v.valid(c + Vec2{0.1, 0}));
}

TEST(Mollify, CommutesWithGradientUpToH) {
  auto error = [](double h) {
    const auto d = square(h);
    const auto m = make_mollifier(*d, 6);
    const auto f = GridScalarField::sample(*d, [](Vec2 p) { return std::sin(3 * p.x + 1) * std::cos(2 * p.y); });
    GridVectorField lifted(*d);
    for (std::size_t n = 0; n < d->size(); ++n) lifted.values[n] = {f.values[n], 0.0};
    const auto fm = mollify(lifted, m);
    GridScalarField fk(*d);
    fk.support = fm.support;
    for (std::size_t n = 0; n < d->size(); ++n) fk.values[n] = fm.values[n].x;
    const auto a = gradient(fk);
    auto grad_f = gradient(f);
    const auto b = mollify(grad_f, m);
    double worst = 0.0;
    const auto deep = erode_to_depth(*d, 2 * m.radius + 2 * h);
    for (std::size_t n = 0; n < d->size(); ++n) {
      if (deep.mask[n] && a.support[n] && b.support[n]) worst = std::max(worst, euclid(a.values[n] - b.values[n]));
    }
    return worst;
  };
  const double coarse = error(1.0 / 32), fine = error(1.0 / 64);
  EXPECT_LT(fine, 0.02);
  EXPECT_LE(fine, coarse + 1e-12);
}
