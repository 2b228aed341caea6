#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "freeflow/domain.hpp"
#include "freeflow/fields.hpp"

namespace freeflow {

struct ReconstructionResult {
  GridScalarField potential;
  int k_used = 0;
  std::vector<double> path_length;  // graph length of the basepoint path per node; NaN when masked
  double residual = 0.0;
  double max_probe_length_ratio = 1.0;
  double tolerance = 0.0;  // the conservativity tolerance the check passed with
  bool region_split = false;  // the mollified region has cells not connected to the basepoint
  ConservativityReport check;
};

namespace detail {

/// Integral of G along a single straight segment between two cell centres.
inline double segment_integral(const GridVectorField& G, Vec2 a, Vec2 b) {
  return line_integral(G, PLPath{{a, b}, false}, G.domain->h());
}

inline bool is_axis_step(const Domain& d, int u, int v) {
  const CellIndex a = d.cell(u), b = d.cell(v);
  return std::abs(a.i - b.i) + std::abs(a.j - b.j) == 1;
}

}  // namespace detail

/// Potential of g * u_k by integration along shortest graph paths from the
/// basepoint, restricted to the basepoint's component of the mollified region.
/// `probe_paths` random cells are re-integrated through a random intermediate
/// cell; the largest discrepancy is the residual.
inline ReconstructionResult reconstruct_potential(const GridVectorField& g, int k, int probe_paths,
                                                  std::uint64_t seed = 1,
                                                  std::optional<double> tolerance = std::nullopt) {
  const Domain& d = *g.domain;
  ReconstructionResult out;
  out.k_used = k;
  out.check = conservativity_check(g, k, std::nullopt, tolerance);
  out.tolerance = out.check.tolerance;
  if (!out.check.conservative) {
    throw Error(ErrorCode::NotConservative, "largest loop integral " + std::to_string(out.check.max_loop_integral) +
                                                " exceeds " + std::to_string(out.check.tolerance));
  }
  const GridVectorField G = mollify(g, make_mollifier(d, k));
  const int base = d.basepoint();
  require(G.supported(base), ErrorCode::BasepointEroded, "basepoint lies outside the mollified region");

  auto in_region = [&](int v) { return G.support[v] != 0; };
  auto edge_ok = [&](int u, int v) {
    if (detail::is_axis_step(d, u, v)) return true;
    return d.segment_in_cells(d.center(u), d.center(v), in_region);
  };
  const std::pair<int, double> src{base, 0.0};
  const auto tree = dijkstra(d, std::span<const std::pair<int, double>>(&src, 1), in_region, edge_ok);

  std::vector<int> order;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (G.support[n] && tree.reached(static_cast<int>(n))) order.push_back(static_cast<int>(n));
  }
  out.region_split = order.size() < G.support_count();
  std::sort(order.begin(), order.end(), [&](int a, int b) { return tree.dist[a] < tree.dist[b]; });

  out.potential = GridScalarField(d, 0.0);
  std::fill(out.potential.support.begin(), out.potential.support.end(), 0);
  out.path_length.assign(d.size(), std::numeric_limits<double>::quiet_NaN());
  for (int v : order) {
    const int p = tree.parent[v];
    out.potential.values[v] =
        p < 0 ? 0.0 : out.potential.values[p] + detail::segment_integral(G, d.center(p), d.center(v));
    out.potential.support[v] = 1;
    out.path_length[v] = tree.dist[v];
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
  for (int q = 0; q < probe_paths && !order.empty(); ++q) {
    const int c = order[pick(rng)];
    const int mid = order[pick(rng)];
    const std::pair<int, double> msrc{mid, 0.0};
    const auto mtree = dijkstra(d, std::span<const std::pair<int, double>>(&msrc, 1), in_region, edge_ok, c);
    const auto nodes = mtree.path_to(c);
    double via = out.potential.values[mid];
    for (std::size_t s = 0; s + 1 < nodes.size(); ++s) {
      via += detail::segment_integral(G, d.center(nodes[s]), d.center(nodes[s + 1]));
    }
    out.residual = std::max(out.residual, std::abs(via - out.potential.values[c]));
    if (tree.dist[c] > 0.0) {
      out.max_probe_length_ratio = std::max(out.max_probe_length_ratio, (tree.dist[mid] + mtree.dist[c]) / tree.dist[c]);
    }
  }
  return out;
}

/// max over graph edges of |f(u) - f(v)| / weight(u, v).
inline double lipschitz_norm_local(const GridScalarField& f) {
  const Domain& d = *f.domain;
  double best = 0.0;
  for (std::size_t u = 0; u < d.size(); ++u) {
    if (!f.support[u]) continue;
    for (const auto& e : d.neighbors(static_cast<int>(u))) {
      if (e.to < static_cast<int>(u) || !f.support[e.to]) continue;
      best = std::max(best, std::abs(f.values[u] - f.values[e.to]) / e.weight);
    }
  }
  return best;
}

/// max over cell pairs of |f(u) - f(v)| / d_graph(u, v). With no sample
/// count every pair is visited (one Dijkstra per source cell).
inline double lipschitz_norm_global(const GridScalarField& f, std::optional<std::size_t> sample_pairs = std::nullopt,
                                    std::uint64_t seed = 1) {
  const Domain& d = *f.domain;
  std::vector<int> nodes;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (f.support[n]) nodes.push_back(static_cast<int>(n));
  }
  if (nodes.size() < 2) return 0.0;

  std::vector<std::vector<int>> targets(nodes.size());
  if (sample_pairs) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
    for (std::size_t q = 0; q < *sample_pairs; ++q) {
      const std::size_t a = pick(rng), b = pick(rng);
      if (a != b) targets[a].push_back(nodes[b]);
    }
  }
  std::vector<double> best(nodes.size(), 0.0);
  parallel_for(
      nodes.size(),
      [&](std::size_t a) {
        if (sample_pairs && targets[a].empty()) return;
        const auto tree = dijkstra(d, nodes[a]);
        const double fu = f.values[nodes[a]];
        auto visit = [&](int v) {
          if (v == nodes[a]) return;
          best[a] = std::max(best[a], std::abs(fu - f.values[v]) / tree.dist[v]);
        };
        if (sample_pairs) {
          for (int v : targets[a]) visit(v);
        } else {
          for (int v : nodes) visit(v);
        }
      },
      8);
  return *std::max_element(best.begin(), best.end());
}

struct IsometryDefect {
  double lip_local = 0.0;
  double grad_sup = 0.0;
  double defect = 0.0;
  double h = 0.0;
};

/// |Lip(f) - sup |grad f|_*| with the finite-difference gradient.
inline IsometryDefect isometry_defect(const GridScalarField& f) {
  IsometryDefect r;
  r.lip_local = lipschitz_norm_local(f);
  r.grad_sup = sup_norm(gradient(f));
  r.defect = std::abs(r.lip_local - r.grad_sup);
  r.h = f.domain->h();
  return r;
}

}  // namespace freeflow
