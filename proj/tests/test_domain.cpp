#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "freeflow/domain.hpp"
#include "oracles.hpp"

using namespace freeflow;

namespace {

DomainSpec unit_square(double h, Norm n = Norm::l2, int order = 0) {
  DomainSpec s;
  s.outer = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  s.h = h;
  s.norm = n;
  s.neighborhood_order = order;
  return s;
}

DomainSpec annulus(double h) {
  DomainSpec s;
  s.outer = {{-1.5, -1.5}, {1.5, -1.5}, {1.5, 1.5}, {-1.5, 1.5}};
  s.holes = {{{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}};
  s.h = h;
  return s;
}

DomainSpec slit_disk(double h) {
  DomainSpec s;
  s.outer = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  s.slits = {{{0, 0}, {1, 0}}};
  s.norm = Norm::l1;
  s.h = h;
  return s;
}

template <class Fn>
void expect_error(ErrorCode code, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(BuildDomain, UnitSquareInteriorIsInsetByOneRing) {
  const auto d = build_domain(unit_square(1.0 / 64));
  EXPECT_EQ(d->nx(), 64);
  EXPECT_EQ(d->size(), 62u * 62u);
  EXPECT_EQ(d->order(), 2);
  for (std::size_t n = 0; n < d->size(); ++n) {
    EXPECT_GT(d->dist_to_boundary(static_cast<int>(n)), d->h() / 2);
  }
}

TEST(BuildDomain, SixteenNeighbourStencil) {
  EXPECT_EQ(stencil_offsets(1).size(), 4u);
  EXPECT_EQ(stencil_offsets(2).size(), 16u);
  EXPECT_EQ(stencil_offsets(3).size(), 32u);
}

TEST(BuildDomain, EdgeWeightsAreNormLengthsOfCentreOffsets) {
  for (Norm n : {Norm::l1, Norm::l2}) {
    const auto d = build_domain(unit_square(1.0 / 16, n, 2));
    for (std::size_t u = 0; u < d->size(); ++u) {
      for (const auto& e : d->neighbors(static_cast<int>(u))) {
        EXPECT_GT(e.weight, 0.0);
        EXPECT_NEAR(e.weight, norm(d->center(e.to) - d->center(static_cast<int>(u)), n), 1e-15);
      }
    }
  }
}

TEST(BuildDomain, SlitSeversCrossingEdges) {
  const auto d = build_domain(slit_disk(1.0 / 128));
  EXPECT_EQ(d->order(), 1);
  for (std::size_t u = 0; u < d->size(); ++u) {
    const Vec2 a = d->center(static_cast<int>(u));
    for (const auto& e : d->neighbors(static_cast<int>(u))) {
      const Vec2 b = d->center(e.to);
      EXPECT_FALSE(segments_intersect(a, b, {0, 0}, {1, 0})) << a.x << "," << a.y;
    }
  }
}

TEST(BuildDomain, AnnulusIsConnectedAroundTheHole) {
  const auto d = build_domain(annulus(1.0 / 32));
  const auto tree = dijkstra(*d, d->snap_or_throw({1.0, 0.0}));
  for (std::size_t n = 0; n < d->size(); ++n) EXPECT_TRUE(tree.reached(static_cast<int>(n)));
  EXPECT_FALSE(d->snap({0.0, 0.0}).has_value());
}

TEST(BuildDomain, RejectsDegenerateSpecs) {
  auto zero_area = unit_square(0.1);
  zero_area.outer = {{0, 0}, {1, 0}, {2, 0}};
  expect_error(ErrorCode::DegenerateSpec, [&] { build_domain(zero_area); });

  auto bowtie = unit_square(0.1);
  bowtie.outer = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  expect_error(ErrorCode::DegenerateSpec, [&] { build_domain(bowtie); });

  expect_error(ErrorCode::DegenerateSpec, [&] { build_domain(unit_square(0.0)); });
  expect_error(ErrorCode::DegenerateSpec, [&] { build_domain(unit_square(2.0)); });

  auto outside_hole = unit_square(0.1);
  outside_hole.holes = {{{2, 2}, {3, 2}, {3, 3}}};
  expect_error(ErrorCode::DegenerateSpec, [&] { build_domain(outside_hole); });
}

TEST(BuildDomain, DisconnectedInteriorIsReported) {
  // Two squares joined by a corridor narrower than one cell.
  DomainSpec s;
  s.outer = {{0, 0}, {1, 0}, {1, 0.45}, {2, 0.45}, {2, 0}, {3, 0}, {3, 1}, {2, 1}, {2, 0.55}, {1, 0.55}, {1, 1}, {0, 1}};
  s.h = 1.0 / 16;
  expect_error(ErrorCode::DisconnectedInterior, [&] { build_domain(s); });
}

TEST(Erode, KeepsCellsDeeperThanOneOverK) {
  const auto d = build_domain(unit_square(1.0 / 64));
  const Region r = erode(*d, 4);
  for (std::size_t n = 0; n < d->size(); ++n) {
    const Vec2 c = d->center(static_cast<int>(n));
    const double depth = std::min({c.x, c.y, 1 - c.x, 1 - c.y});
    EXPECT_EQ(r.contains(static_cast<int>(n)), depth > 0.25) << c.x << "," << c.y;
  }
}

TEST(Erode, MonotoneAndExhausting) {
  const auto d = build_domain(annulus(1.0 / 32));
  std::vector<char> prev(d->size(), 0);
  for (int k = 3; k <= 64; ++k) {
    const Region r = erode(*d, k);
    for (std::size_t n = 0; n < d->size(); ++n) {
      EXPECT_TRUE(!prev[n] || r.mask[n]);
    }
    prev = r.mask;
  }
  EXPECT_EQ(erode_to_depth(*d, 0.5 * d->h()).count(), d->size());
}

TEST(Erode, EmptyErosionBeyondMaximalDepth) {
  const auto d = build_domain(unit_square(1.0 / 32));
  expect_error(ErrorCode::EmptyErosion, [&] { erode(*d, 2); });
}

TEST(IntrinsicDistance, SquareWithinMetricationTolerance) {
  const auto d = build_domain(unit_square(1.0 / 64));
  const auto g = intrinsic_distance(*d, {0.2, 0.2}, {0.7, 0.2});
  EXPECT_NEAR(g.distance, 0.5, 0.03 * 0.5);
  EXPECT_TRUE(validate_path(*d, g.path));
}

TEST(IntrinsicDistance, SlitDiskGoesAroundTheSlit) {
  const double h = 1.0 / 128;
  const auto d = build_domain(slit_disk(h));
  for (double t : {0.1, 0.2, 0.3}) {
    const auto g = intrinsic_distance(*d, {0.5, t}, {0.5, -t});
    EXPECT_NEAR(g.distance, 1.0 + 2.0 * t, 2 * h) << "t=" << t;
    EXPECT_TRUE(validate_path(*d, g.path));
  }
}

TEST(IntrinsicDistance, SamePointIsZero) {
  const auto d = build_domain(unit_square(1.0 / 32));
  const auto g = intrinsic_distance(*d, {0.4, 0.4}, {0.4, 0.4});
  EXPECT_EQ(g.distance, 0.0);
  EXPECT_EQ(g.path.vertices.size(), 1u);
}

TEST(IntrinsicDistance, OutsidePointRejected) {
  const auto d = build_domain(annulus(1.0 / 32));
  expect_error(ErrorCode::PointOutsideDomain, [&] { intrinsic_distance(*d, {0, 0}, {1, 1}); });
  expect_error(ErrorCode::PointOutsideDomain, [&] { intrinsic_distance(*d, {5, 0}, {1, 1}); });
}

TEST(IntrinsicDistance, MatchesFloydWarshallOnSmallGrid) {
  // h = 1/10 leaves an 8x8 block of interior cells.
  for (int order : {1, 2, 3}) {
    const auto d = build_domain(unit_square(0.1, Norm::l2, order));
    ASSERT_EQ(d->size(), 64u);
    const auto fw = oracle::floyd_warshall(oracle::grid_weights(8, 8, 0.1, order, false));
    for (int u = 0; u < 64; ++u) {
      const auto tree = dijkstra(*d, u);
      for (int v = 0; v < 64; ++v) {
        const auto [i, j] = d->cell(v);
        const auto [a, b] = d->cell(u);
        EXPECT_NEAR(tree.dist[v], fw[(b - 1) * 8 + (a - 1)][(j - 1) * 8 + (i - 1)], 1e-12);
      }
    }
  }
}

TEST(IntrinsicDistance, MetricProperties) {
  const auto d = build_domain(annulus(1.0 / 32));
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(d->size()) - 1);
  for (int q = 0; q < 100; ++q) {
    const int x = pick(rng), y = pick(rng), z = pick(rng);
    const auto tx = dijkstra(*d, x), ty = dijkstra(*d, y);
    EXPECT_LE(tx.dist[z], tx.dist[y] + ty.dist[z] + 1e-9);
    EXPECT_GE(tx.dist[y] + 1e-12, euclid(d->center(y) - d->center(x)));
    EXPECT_NEAR(tx.dist[y], ty.dist[x], 1e-12);
  }
}

TEST(PathLength, Examples) {
  EXPECT_DOUBLE_EQ(path_length(PLPath{{{0, 0}, {1, 0}, {1, 1}}, false}, Norm::l2), 2.0);
  EXPECT_DOUBLE_EQ(path_length(PLPath{{{0, 0}, {1, 1}}, false}, Norm::l1), 2.0);
  EXPECT_DOUBLE_EQ(path_length(PLPath{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, true}, Norm::l2), 4.0);
  EXPECT_DOUBLE_EQ(path_length(PLPath{{{0.3, 0.3}}, false}, Norm::l2), 0.0);
}

TEST(ConstantSpeedSamples, SegmentAndCorner) {
  const auto s = constant_speed_samples(PLPath{{{0, 0}, {2, 0}}, false}, 3, Norm::l2);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_NEAR(s[1].point.x, 1.0, 1e-15);
  for (const auto& p : s) EXPECT_NEAR(p.velocity.x, 2.0, 1e-15);

  const auto l = constant_speed_samples(PLPath{{{0, 0}, {1, 0}, {1, 1}}, false}, 5, Norm::l2);
  EXPECT_NEAR(l[2].point.x, 1.0, 1e-12);
  EXPECT_NEAR(l[2].point.y, 0.0, 1e-12);
  for (const auto& p : l) EXPECT_NEAR(euclid(p.velocity), 2.0, 1e-12);
}

TEST(ConstantSpeedSamples, StepsMatchArclengthSubdivision) {
  const PLPath path{{{0, 0}, {0.3, 0.1}, {0.5, 0.9}, {1.2, 0.4}}, false};
  const int m = 41;
  const auto s = constant_speed_samples(path, m, Norm::l2);
  const double len = path_length(path, Norm::l2);
  // Oracle: walk the polyline by hand.
  for (int i = 0; i < m; ++i) {
    double target = len * i / (m - 1), acc = 0.0;
    Vec2 expect = path.vertices.back();
    for (std::size_t k = 0; k + 1 < path.vertices.size(); ++k) {
      const Vec2 a = path.vertices[k], b = path.vertices[k + 1];
      const double seg = std::hypot(b.x - a.x, b.y - a.y);
      if (acc + seg >= target) {
        const double t = (target - acc) / seg;
        expect = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        break;
      }
      acc += seg;
    }
    EXPECT_NEAR(s[i].point.x, expect.x, 1e-12);
    EXPECT_NEAR(s[i].point.y, expect.y, 1e-12);
  }
  double walked = 0.0, biggest = 0.0;
  for (int i = 0; i + 1 < m; ++i) {
    const double step = euclid(s[i + 1].point - s[i].point);
    walked += step;
    biggest = std::max(biggest, step);
  }
  EXPECT_NEAR(biggest, len / (m - 1), 1e-12);
  EXPECT_LE(walked, len + 1e-12);
}

TEST(ConstantSpeedSamples, ZeroLengthRejected) {
  expect_error(ErrorCode::ZeroLengthPath,
               [] { constant_speed_samples(PLPath{{{0.5, 0.5}, {0.5, 0.5}}, false}, 4, Norm::l2); });
}
