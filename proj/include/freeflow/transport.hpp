#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "freeflow/domain.hpp"
#include "freeflow/fields.hpp"
#include "freeflow/mincostflow.hpp"
#include "freeflow/molecule.hpp"
#include "freeflow/potential.hpp"

namespace freeflow {

inline constexpr std::int64_t kDefaultMassScale = 10000;

/// A solved transport instance. `network_cell[v]` is the domain node of
/// network node v.
struct TransportResult {
  double norm = 0.0;
  FlowNetwork network;
  FlowSolution solution;
  std::vector<int> network_cell;
};

/// Minimal L1 flow on the grid graph with divergence mu. Arcs exist only
/// between interior cells, so no flux crosses the boundary.
inline TransportResult beckmann_norm(const Domain& domain, const Molecule& mu,
                                     std::int64_t mass_scale = kDefaultMassScale) {
  mu.validate(domain);
  TransportResult r;
  r.network.nodes = domain.size();
  r.network.supplies.assign(domain.size(), 0.0);
  for (const auto& a : mu.atoms) r.network.supplies[a.node] += a.mass;
  r.network.arcs.reserve(2 * domain.edge_count());
  for (std::size_t u = 0; u < domain.size(); ++u) {
    for (const auto& e : domain.neighbors(static_cast<int>(u))) {
      r.network.arcs.push_back({static_cast<int>(u), e.to, e.weight});
    }
  }
  r.network_cell.resize(domain.size());
  for (std::size_t v = 0; v < domain.size(); ++v) r.network_cell[v] = static_cast<int>(v);
  r.solution = min_cost_flow(r.network, mass_scale);
  r.norm = r.solution.total_cost;
  return r;
}

/// Transport between the positive and negative atoms with graph-geodesic
/// costs (complete bipartite network).
inline TransportResult kantorovich_norm(const Domain& domain, const Molecule& mu,
                                        std::int64_t mass_scale = kDefaultMassScale) {
  mu.validate(domain);
  Molecule canon = mu;
  canon.canonicalize();
  TransportResult r;
  std::vector<std::size_t> sources, sinks;
  for (std::size_t a = 0; a < canon.atoms.size(); ++a) {
    r.network_cell.push_back(canon.atoms[a].node);
    r.network.supplies.push_back(canon.atoms[a].mass);
    (canon.atoms[a].mass > 0 ? sources : sinks).push_back(a);
  }
  r.network.nodes = canon.atoms.size();
  for (std::size_t s : sources) {
    const auto tree = dijkstra(domain, canon.atoms[s].node);
    for (std::size_t t : sinks) {
      const double cost = tree.dist[canon.atoms[t].node];
      require(std::isfinite(cost), ErrorCode::Disconnected, "atoms lie in different components");
      r.network.arcs.push_back({static_cast<int>(s), static_cast<int>(t), cost});
    }
  }
  r.solution = min_cost_flow(r.network, mass_scale);
  r.norm = r.solution.total_cost;
  return r;
}

/// Per-cell fluxes on the axis edges to the east and north neighbours. Zero
/// where the edge is not in the domain graph.
struct EdgeFlux {
  DomainPtr domain;
  std::vector<double> east;
  std::vector<double> north;
};

namespace detail {
inline bool has_edge(const Domain& d, int u, int v) {
  if (u < 0 || v < 0) return false;
  for (const auto& e : d.neighbors(u)) {
    if (e.to == v) return true;
  }
  return false;
}
}  // namespace detail

/// Flux of each axis edge: h times the mean of the two adjacent cell
/// components along the edge axis. Unsupported cells count as zero.
inline EdgeFlux flux_projection(const GridVectorField& hfield) {
  const Domain& d = *hfield.domain;
  EdgeFlux f{hfield.domain, std::vector<double>(d.size(), 0.0), std::vector<double>(d.size(), 0.0)};
  auto value = [&](int n) { return hfield.supported(n) ? hfield.values[n] : Vec2{}; };
  for (std::size_t n = 0; n < d.size(); ++n) {
    const int u = static_cast<int>(n);
    const auto [i, j] = d.cell(u);
    const int e = d.node_at(i + 1, j), t = d.node_at(i, j + 1);
    if (detail::has_edge(d, u, e)) f.east[n] = d.h() * 0.5 * (value(u).x + value(e).x);
    if (detail::has_edge(d, u, t)) f.north[n] = d.h() * 0.5 * (value(u).y + value(t).y);
  }
  return f;
}

/// Cost of routing the projected flux itself (a feasible flow).
inline double flux_cost(const EdgeFlux& f) {
  const Domain& d = *f.domain;
  double s = 0.0;
  const double w = norm(Vec2{d.h(), 0.0}, d.norm());
  for (std::size_t n = 0; n < d.size(); ++n) s += (std::abs(f.east[n]) + std::abs(f.north[n])) * w;
  return s;
}

/// -div of the edge flux: inflow minus outflow per cell.
inline Molecule divergence_molecule(const EdgeFlux& f) {
  const Domain& d = *f.domain;
  std::vector<double> mass(d.size(), 0.0);
  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto [i, j] = d.cell(static_cast<int>(n));
    if (f.east[n] != 0.0) {
      mass[n] -= f.east[n];
      mass[d.node_at(i + 1, j)] += f.east[n];
    }
    if (f.north[n] != 0.0) {
      mass[n] -= f.north[n];
      mass[d.node_at(i, j + 1)] += f.north[n];
    }
  }
  Molecule mu;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (mass[n] != 0.0) mu.atoms.push_back({static_cast<int>(n), mass[n]});
  }
  return mu;
}

/// Adds a counter-clockwise circulation of `amount` around the unit face whose
/// lower-left cell is `node`. All four edges must exist.
inline void add_face_circulation(EdgeFlux& f, int node, double amount) {
  const Domain& d = *f.domain;
  const auto [i, j] = d.cell(node);
  const int e = d.node_at(i + 1, j), t = d.node_at(i, j + 1), et = d.node_at(i + 1, j + 1);
  require(detail::has_edge(d, node, e) && detail::has_edge(d, node, t) && detail::has_edge(d, e, et) &&
              detail::has_edge(d, t, et),
          ErrorCode::InvalidArgument, "face is not closed in the graph");
  f.east[node] += amount;
  f.north[e] += amount;
  f.east[t] -= amount;
  f.north[node] -= amount;
}

struct QuotientResult {
  double norm = 0.0;
  Molecule mu;
  TransportResult transport;
  double representative_l1 = 0.0;  // grid L1 of the supplied field
  double projected_flux_cost = 0.0;
  double rounding_slack = 0.0;     // bound on the cost change from mass rounding
  bool certificate_ok = true;      // norm <= projected_flux_cost + rounding_slack
};

inline QuotientResult quotient_norm_from_flux(const EdgeFlux& flux, std::int64_t mass_scale = kDefaultMassScale) {
  const Domain& d = *flux.domain;
  QuotientResult q;
  q.mu = divergence_molecule(flux);
  q.projected_flux_cost = flux_cost(flux);
  // Re-balance the float residue of the divergence onto the largest atom.
  if (!q.mu.atoms.empty()) {
    auto largest = std::max_element(q.mu.atoms.begin(), q.mu.atoms.end(),
                                    [](const Atom& a, const Atom& b) { return std::abs(a.mass) < std::abs(b.mass); });
    largest->mass -= q.mu.total_mass();
  }
  q.transport = beckmann_norm(d, q.mu, mass_scale);
  q.norm = q.transport.norm;
  double diameter = 0.0;
  {
    const auto tree = dijkstra(d, d.basepoint());
    for (double v : tree.dist) diameter = std::max(diameter, v);
    diameter *= 2.0;
  }
  double moved = 0.0;
  for (const auto& a : q.mu.atoms) moved += std::abs(q.transport.solution.supplies[a.node] - a.mass);
  q.rounding_slack = moved * diameter;
  q.certificate_ok = q.norm <= q.projected_flux_cost + q.rounding_slack + 1e-9;
  return q;
}

/// Norm of the class [h] in the quotient by divergence-free fields: the
/// Beckmann norm of the divergence of the projected flux.
inline QuotientResult quotient_norm(const GridVectorField& hfield, std::int64_t mass_scale = kDefaultMassScale) {
  for (std::size_t n = 0; n < hfield.values.size(); ++n) {
    require(!hfield.support[n] || (std::isfinite(hfield.values[n].x) && std::isfinite(hfield.values[n].y)),
            ErrorCode::NonSummable, "field has non-finite values");
  }
  QuotientResult q = quotient_norm_from_flux(flux_projection(hfield), mass_scale);
  q.representative_l1 = l1_norm(hfield);
  return q;
}

struct DualityReport {
  double pairing = 0.0;
  double lip_of_potential = 0.0;
  double gap = 0.0;
  GridScalarField potential;
};

/// Dual certificate: G(c) = min over source atoms s of pi(s) + d(s, c) is
/// 1-Lipschitz for the graph metric, and f = -G pairs with the rounded
/// molecule to the primal cost when the solution is optimal.
inline DualityReport duality_certificate(const Domain& domain, const Molecule& mu, const TransportResult& r) {
  const auto& sol = r.solution;
  require(sol.supplies.size() == r.network.nodes && sol.arc_flows.size() == r.network.arcs.size(),
          ErrorCode::SolutionMismatch, "solution does not match its network");
  require(sol.conservation_error(r.network) <= 1e-9, ErrorCode::SolutionMismatch, "flow does not conserve mass");
  std::vector<double> expected(r.network.nodes, 0.0);
  {
    std::vector<int> slot(domain.size(), -1);
    for (std::size_t v = 0; v < r.network_cell.size(); ++v) slot[r.network_cell[v]] = static_cast<int>(v);
    for (const auto& a : mu.atoms) {
      require(slot[a.node] >= 0, ErrorCode::SolutionMismatch, "atom missing from the network");
      expected[slot[a.node]] += a.mass;
    }
  }
  const auto rounded = round_supplies(expected, sol.mass_scale);
  for (std::size_t v = 0; v < r.network.nodes; ++v) {
    require(std::llround(sol.supplies[v] * static_cast<double>(sol.mass_scale)) == rounded[v],
            ErrorCode::SolutionMismatch, "solution supplies differ from the molecule");
  }

  std::vector<std::pair<int, double>> sources;
  for (std::size_t v = 0; v < r.network.nodes; ++v) {
    if (sol.supplies[v] > 0.0) sources.push_back({r.network_cell[v], sol.node_potentials[v]});
  }
  DualityReport rep;
  rep.potential = GridScalarField(domain, 0.0);
  if (!sources.empty()) {
    const auto tree = dijkstra(domain, sources, [](int) { return true; }, [](int, int) { return true; });
    for (std::size_t n = 0; n < domain.size(); ++n) rep.potential.values[n] = -tree.dist[n];
  }
  for (std::size_t v = 0; v < r.network.nodes; ++v) {
    rep.pairing += sol.supplies[v] * rep.potential.values[r.network_cell[v]];
  }
  rep.lip_of_potential = lipschitz_norm_local(rep.potential);
  rep.gap = std::abs(rep.pairing - sol.total_cost);
  return rep;
}

}  // namespace freeflow
