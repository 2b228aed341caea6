#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "freeflow/domain.hpp"
#include "freeflow/error.hpp"

namespace freeflow {

struct Atom {
  int node;
  double mass;
};

/// Finitely supported zero-sum measure on the interior cells.
struct Molecule {
  std::vector<Atom> atoms;
  bool basepoint_relative = false;

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass;
    return s;
  }

  double total_variation() const {
    double s = 0.0;
    for (const auto& a : atoms) s += std::abs(a.mass);
    return s;
  }

  bool empty() const { return atoms.empty(); }

  /// Merges duplicate cells, drops zero masses, sorts by node.
  Molecule& canonicalize() {
    std::map<int, double> merged;
    for (const auto& a : atoms) merged[a.node] += a.mass;
    atoms.clear();
    for (const auto& [node, mass] : merged) {
      if (mass != 0.0) atoms.push_back({node, mass});
    }
    return *this;
  }

  void validate(const Domain& d) const {
    for (const auto& a : atoms) {
      require(a.node >= 0 && static_cast<std::size_t>(a.node) < d.size(), ErrorCode::InvalidArgument,
              "atom references a cell outside the interior");
      require(std::isfinite(a.mass), ErrorCode::InvalidArgument, "atom mass is not finite");
    }
    require(std::abs(total_mass()) <= 1e-12 * std::max(1.0, total_variation()), ErrorCode::Unbalanced,
            "molecule masses do not sum to zero");
  }

  /// delta(x) - delta(x0) for the domain basepoint x0.
  static Molecule dirac(const Domain& d, Vec2 x) {
    Molecule m{{{d.snap_or_throw(x), 1.0}, {d.basepoint(), -1.0}}, true};
    m.canonicalize();
    return m;
  }

  /// delta(y) - delta(x).
  static Molecule pair(const Domain& d, Vec2 x, Vec2 y) {
    Molecule m{{{d.snap_or_throw(y), 1.0}, {d.snap_or_throw(x), -1.0}}, false};
    m.canonicalize();
    return m;
  }

  friend Molecule operator+(const Molecule& a, const Molecule& b) {
    Molecule m = a;
    m.atoms.insert(m.atoms.end(), b.atoms.begin(), b.atoms.end());
    m.basepoint_relative = a.basepoint_relative && b.basepoint_relative;
    m.canonicalize();
    return m;
  }

  friend Molecule operator*(double t, const Molecule& a) {
    Molecule m = a;
    for (auto& at : m.atoms) at.mass *= t;
    m.canonicalize();
    return m;
  }
};

/// <f, mu> for a cell-indexed function.
template <class Values>
double pairing(const Molecule& mu, const Values& f) {
  double s = 0.0;
  for (const auto& a : mu.atoms) s += a.mass * f[a.node];
  return s;
}

}  // namespace freeflow
