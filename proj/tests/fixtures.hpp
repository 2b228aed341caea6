#pragma once

// Named domains and random molecules shared by the transport, CLI and
// acceptance tests.

#include <random>

#include "freeflow/molecule.hpp"

namespace fixture {

using namespace freeflow;

inline DomainPtr square(double h, Norm n = Norm::l2, int order = 0) {
  DomainSpec s;
  s.outer = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  s.h = h;
  s.norm = n;
  s.neighborhood_order = order;
  s.basepoint = Vec2{0.5, 0.5};
  return build_domain(s);
}

inline DomainPtr annulus(double h) {
  DomainSpec s;
  s.outer = {{-1.5, -1.5}, {1.5, -1.5}, {1.5, 1.5}, {-1.5, 1.5}};
  s.holes = {{{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}};
  s.h = h;
  s.basepoint = Vec2{1.0, 0.0};
  return build_domain(s);
}

/// The l1 unit disk cut along [0, 1] x {0}, with the 4-neighbour graph.
inline DomainPtr slit_disk(double h) {
  DomainSpec s;
  s.outer = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  s.slits = {{{0, 0}, {1, 0}}};
  s.norm = Norm::l1;
  s.neighborhood_order = 1;
  s.h = h;
  s.basepoint = Vec2{-0.5, 0.0};
  return build_domain(s);
}

/// Between 2 and max_atoms atoms on distinct random cells. Masses are
/// multiples of 1/1000 so rounding at any mass scale divisible by 1000 is
/// exact.
inline Molecule random_molecule(const Domain& d, std::mt19937_64& rng, int max_atoms = 8) {
  std::uniform_int_distribution<int> count(2, max_atoms);
  std::uniform_int_distribution<std::size_t> cell(0, d.size() - 1);
  std::uniform_int_distribution<int> milli(-1000, 1000);
  for (;;) {
    const int n = count(rng);
    Molecule mu;
    long sum = 0;
    for (int a = 0; a + 1 < n; ++a) {
      const int m = milli(rng);
      sum += m;
      mu.atoms.push_back({static_cast<int>(cell(rng)), m / 1000.0});
    }
    mu.atoms.push_back({static_cast<int>(cell(rng)), -sum / 1000.0});
    // Re-balance exactly in integer units after merging duplicate cells.
    mu.canonicalize();
    long total = 0;
    for (auto& a : mu.atoms) {
      const long units = std::lround(a.mass * 1000.0);
      a.mass = units / 1000.0;
      total += units;
    }
    if (mu.atoms.size() < 2 || total != 0) continue;
    return mu;
  }
}

}  // namespace fixture
