#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "freeflow/error.hpp"

namespace freeflow {

struct Arc {
  int from;
  int to;
  double cost;
};

/// Uncapacitated transshipment instance. supplies[v] > 0 is mass leaving v.
struct FlowNetwork {
  std::size_t nodes = 0;
  std::vector<Arc> arcs;
  std::vector<double> supplies;
};

struct FlowSolution {
  std::vector<double> arc_flows;        // mass units, >= 0
  double total_cost = 0.0;
  std::vector<double> node_potentials;  // pi(v) - pi(u) <= cost(u, v) on every arc
  std::vector<double> supplies;         // the rounded supplies actually routed
  std::int64_t mass_scale = 1;

  /// max_v |inflow - outflow + supply| over the rounded supplies.
  double conservation_error(const FlowNetwork& net) const {
    std::vector<double> balance(net.nodes, 0.0);
    for (std::size_t e = 0; e < net.arcs.size(); ++e) {
      balance[net.arcs[e].to] += arc_flows[e];
      balance[net.arcs[e].from] -= arc_flows[e];
    }
    double worst = 0.0;
    for (std::size_t v = 0; v < net.nodes; ++v) worst = std::max(worst, std::abs(balance[v] + supplies[v]));
    return worst;
  }

  /// max over flow-carrying arcs of |cost + pi(u) - pi(v)|.
  double slackness_error(const FlowNetwork& net) const {
    double worst = 0.0;
    for (std::size_t e = 0; e < net.arcs.size(); ++e) {
      if (arc_flows[e] <= 0.0) continue;
      const auto& a = net.arcs[e];
      worst = std::max(worst, std::abs(a.cost + node_potentials[a.from] - node_potentials[a.to]));
    }
    return worst;
  }

  /// max over all arcs of pi(v) - pi(u) - cost(u, v), clamped at 0.
  double dual_violation(const FlowNetwork& net) const {
    double worst = 0.0;
    for (const auto& a : net.arcs) {
      worst = std::max(worst, node_potentials[a.to] - node_potentials[a.from] - a.cost);
    }
    return worst;
  }
};

/// Supplies rounded to multiples of 1/mass_scale; the rounding residual is
/// absorbed by the largest-magnitude node so the instance stays balanced.
inline std::vector<std::int64_t> round_supplies(const std::vector<double>& supplies, std::int64_t mass_scale) {
  std::vector<std::int64_t> units(supplies.size(), 0);
  std::int64_t residual = 0;
  std::size_t largest = 0;
  for (std::size_t v = 0; v < supplies.size(); ++v) {
    units[v] = std::llround(supplies[v] * static_cast<double>(mass_scale));
    residual += units[v];
    if (std::abs(supplies[v]) > std::abs(supplies[largest])) largest = v;
  }
  if (!units.empty()) units[largest] -= residual;
  return units;
}

/// Successive shortest paths with node potentials on the integer instance at
/// resolution 1/mass_scale. Each round runs one multi-source Dijkstra on
/// reduced costs from every node with excess and stops at the first node with
/// deficit; unsettled nodes receive the capped distance so reduced costs stay
/// non-negative.
inline FlowSolution min_cost_flow(const FlowNetwork& net, std::int64_t mass_scale) {
  require(mass_scale >= 1, ErrorCode::InvalidArgument, "mass scale must be at least 1");
  require(net.supplies.size() == net.nodes, ErrorCode::InvalidArgument, "supply vector size mismatch");
  double sum = 0.0, var = 0.0;
  for (double s : net.supplies) {
    sum += s;
    var += std::abs(s);
  }
  require(std::abs(sum) <= 1e-9 * std::max(1.0, var), ErrorCode::Unbalanced, "supplies do not sum to zero");
  for (const auto& a : net.arcs) {
    require(a.cost >= 0.0 && std::isfinite(a.cost), ErrorCode::InvalidArgument, "arc costs must be finite and >= 0");
    require(a.from >= 0 && a.to >= 0 && static_cast<std::size_t>(a.from) < net.nodes &&
                static_cast<std::size_t>(a.to) < net.nodes,
            ErrorCode::InvalidArgument, "arc endpoint out of range");
  }

  const std::size_t n = net.nodes;
  const std::size_t m = net.arcs.size();
  std::vector<std::int64_t> excess = round_supplies(net.supplies, mass_scale);
  std::vector<std::int64_t> flow(m, 0);
  std::vector<double> pi(n, 0.0);

  // Residual arcs: id 2e is forward (unbounded), 2e+1 is the reverse of e.
  std::vector<std::size_t> start(n + 1, 0);
  for (const auto& a : net.arcs) {
    ++start[a.from + 1];
    ++start[a.to + 1];
  }
  for (std::size_t v = 0; v < n; ++v) start[v + 1] += start[v];
  std::vector<std::size_t> residual(2 * m);
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t e = 0; e < m; ++e) {
      residual[fill[net.arcs[e].from]++] = 2 * e;
      residual[fill[net.arcs[e].to]++] = 2 * e + 1;
    }
  }
  auto head = [&](std::size_t r) { return r % 2 == 0 ? net.arcs[r / 2].to : net.arcs[r / 2].from; };
  auto tail = [&](std::size_t r) { return r % 2 == 0 ? net.arcs[r / 2].from : net.arcs[r / 2].to; };
  auto rcost = [&](std::size_t r) { return r % 2 == 0 ? net.arcs[r / 2].cost : -net.arcs[r / 2].cost; };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<std::size_t> via(n, static_cast<std::size_t>(-1));
  std::vector<char> settled(n, 0);
  using Item = std::pair<double, int>;

  for (;;) {
    bool any_excess = false;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(settled.begin(), settled.end(), 0);
    for (std::size_t v = 0; v < n; ++v) {
      if (excess[v] > 0) {
        any_excess = true;
        dist[v] = 0.0;
        via[v] = static_cast<std::size_t>(-1);
        heap.push({0.0, static_cast<int>(v)});
      }
    }
    if (!any_excess) break;

    int sink = -1;
    while (!heap.empty()) {
      const auto [du, u] = heap.top();
      heap.pop();
      if (settled[u]) continue;
      settled[u] = 1;
      if (excess[u] < 0) {
        sink = u;
        break;
      }
      for (std::size_t k = start[u]; k < start[u + 1]; ++k) {
        const std::size_t r = residual[k];
        if (r % 2 == 1 && flow[r / 2] == 0) continue;
        const int v = head(r);
        if (settled[v]) continue;
        const double reduced = std::max(0.0, rcost(r) + pi[u] - pi[v]);
        if (du + reduced < dist[v]) {
          dist[v] = du + reduced;
          via[v] = r;
          heap.push({dist[v], v});
        }
      }
    }
    require(sink >= 0, ErrorCode::Disconnected, "some supply cannot reach any demand");

    const double cap_d = dist[sink];
    for (std::size_t v = 0; v < n; ++v) pi[v] += std::min(dist[v], cap_d);

    std::int64_t push = -excess[sink];
    int v = sink;
    while (via[v] != static_cast<std::size_t>(-1)) {
      const std::size_t r = via[v];
      if (r % 2 == 1) push = std::min(push, flow[r / 2]);
      v = tail(r);
    }
    push = std::min(push, excess[v]);
    const int source = v;
    for (v = sink; v != source;) {
      const std::size_t r = via[v];
      if (r % 2 == 0) {
        flow[r / 2] += push;
      } else {
        flow[r / 2] -= push;
      }
      v = tail(r);
    }
    excess[source] -= push;
    excess[sink] += push;
  }

  FlowSolution sol;
  sol.mass_scale = mass_scale;
  sol.arc_flows.resize(m);
  const double scale = static_cast<double>(mass_scale);
  for (std::size_t e = 0; e < m; ++e) {
    sol.arc_flows[e] = static_cast<double>(flow[e]) / scale;
    sol.total_cost += sol.arc_flows[e] * net.arcs[e].cost;
  }
  const auto rounded = round_supplies(net.supplies, mass_scale);
  sol.supplies.resize(n);
  for (std::size_t v = 0; v < n; ++v) sol.supplies[v] = static_cast<double>(rounded[v]) / scale;
  sol.node_potentials = std::move(pi);
  return sol;
}

}  // namespace freeflow
