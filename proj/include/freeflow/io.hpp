#pragma once

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "freeflow/domain.hpp"
#include "freeflow/error.hpp"
#include "freeflow/fields.hpp"
#include "freeflow/flows.hpp"
#include "freeflow/molecule.hpp"
#include "freeflow/transport.hpp"

namespace freeflow::io {

using json = nlohmann::json;

/// Shortest decimal text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline Vec2 point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(ErrorCode::ConfigInvalid, std::string(what) + " must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Polygon polygon(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::ConfigInvalid, std::string(what) + " must be a list of points");
  Polygon p;
  for (const auto& v : j) p.push_back(point(v, what));
  return p;
}

inline json point_json(Vec2 p) { return json::array({p.x, p.y}); }

template <class T>
T number(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw Error(ErrorCode::ConfigInvalid, std::string(key) + " must be a number");
  return j[key].get<T>();
}

}  // namespace detail

inline DomainSpec domain_spec_from_json(const json& j) {
  if (!j.is_object() || !j.contains("outer")) throw Error(ErrorCode::ConfigInvalid, "domain needs an outer polygon");
  DomainSpec s;
  s.outer = detail::polygon(j["outer"], "outer");
  if (j.contains("holes")) {
    for (const auto& hole : j["holes"]) s.holes.push_back(detail::polygon(hole, "hole"));
  }
  if (j.contains("slits")) {
    for (const auto& slit : j["slits"]) {
      if (!slit.is_array() || slit.size() != 2) throw Error(ErrorCode::ConfigInvalid, "slit must be two points");
      s.slits.push_back({detail::point(slit[0], "slit"), detail::point(slit[1], "slit")});
    }
  }
  if (j.contains("norm")) s.norm = parse_norm(j["norm"].get<std::string>());
  s.h = detail::number(j, "h", s.h);
  s.neighborhood_order = detail::number(j, "K", s.neighborhood_order);
  if (j.contains("basepoint")) s.basepoint = detail::point(j["basepoint"], "basepoint");
  return s;
}

inline json to_json(const DomainSpec& s) {
  json j;
  j["outer"] = json::array();
  for (const auto& p : s.outer) j["outer"].push_back(detail::point_json(p));
  j["holes"] = json::array();
  for (const auto& hole : s.holes) {
    json h = json::array();
    for (const auto& p : hole) h.push_back(detail::point_json(p));
    j["holes"].push_back(h);
  }
  j["slits"] = json::array();
  for (const auto& sl : s.slits) j["slits"].push_back({detail::point_json(sl.a), detail::point_json(sl.b)});
  j["norm"] = to_string(s.norm);
  j["h"] = s.h;
  j["K"] = s.neighborhood_order;
  if (s.basepoint) j["basepoint"] = detail::point_json(*s.basepoint);
  return j;
}

/// Atoms are snapped to their cells; atoms landing on the same cell merge.
inline Molecule molecule_from_json(const Domain& d, const json& j) {
  if (!j.is_object() || !j.contains("atoms") || !j["atoms"].is_array()) {
    throw Error(ErrorCode::ConfigInvalid, "molecule needs an atoms list");
  }
  Molecule mu;
  for (const auto& a : j["atoms"]) {
    if (!a.contains("p") || !a.contains("m") || !a["m"].is_number()) {
      throw Error(ErrorCode::ConfigInvalid, "atom needs p and m");
    }
    mu.atoms.push_back({d.snap_or_throw(detail::point(a["p"], "atom")), a["m"].get<double>()});
  }
  mu.canonicalize();
  return mu;
}

inline json to_json(const Domain& d, const Molecule& mu) {
  json atoms = json::array();
  for (const auto& a : mu.atoms) atoms.push_back({{"p", detail::point_json(d.center(a.node))}, {"m", a.mass}});
  return {{"atoms", atoms}};
}

inline SpindleSpec spindle_spec_from_json(const json& j) {
  if (!j.is_object() || !j.contains("x") || !j.contains("y")) {
    throw Error(ErrorCode::ConfigInvalid, "spindle needs x and y");
  }
  SpindleSpec s;
  s.x = detail::point(j["x"], "spindle x");
  s.y = detail::point(j["y"], "spindle y");
  s.epsilon = detail::number(j, "epsilon", s.epsilon);
  s.subsamples = detail::number(j, "subsamples", s.subsamples);
  if (j.contains("psi")) s.profile = parse_profile(j["psi"].get<std::string>());
  return s;
}

inline json to_json(const SpindleSpec& s) {
  return {{"x", detail::point_json(s.x)},
          {"y", detail::point_json(s.y)},
          {"epsilon", s.epsilon},
          {"psi", s.profile.name},
          {"subsamples", s.subsamples}};
}

inline PLPath path_from_json(const json& j, bool closed) {
  PLPath p;
  p.vertices = detail::polygon(j, "path");
  p.closed = closed;
  return p;
}

// CSV dumps. Only supported cells are written; loading marks every other
// cell unsupported, so a dump reloads into an identical field.

inline void write_mask_csv(std::ostream& os, const Domain& d) {
  os << "i,j,cx,cy,interior,dist_to_boundary\n";
  for (int j = 0; j < d.ny(); ++j) {
    for (int i = 0; i < d.nx(); ++i) {
      const int n = d.node_at(i, j);
      const Vec2 c = d.cell_center(i, j);
      os << i << ',' << j << ',' << fmt(c.x) << ',' << fmt(c.y) << ',' << (n >= 0 ? 1 : 0) << ','
         << fmt(n >= 0 ? d.dist_to_boundary(n) : 0.0) << '\n';
    }
  }
}

inline void write_field_csv(std::ostream& os, const GridScalarField& f) {
  const Domain& d = *f.domain;
  os << "i,j,cx,cy,v\n";
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (!f.support[n]) continue;
    const auto [i, j] = d.cell(static_cast<int>(n));
    const Vec2 c = d.center(static_cast<int>(n));
    os << i << ',' << j << ',' << fmt(c.x) << ',' << fmt(c.y) << ',' << fmt(f.values[n]) << '\n';
  }
}

inline void write_field_csv(std::ostream& os, const GridVectorField& f) {
  const Domain& d = *f.domain;
  os << "i,j,cx,cy,vx,vy\n";
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (!f.support[n]) continue;
    const auto [i, j] = d.cell(static_cast<int>(n));
    const Vec2 c = d.center(static_cast<int>(n));
    os << i << ',' << j << ',' << fmt(c.x) << ',' << fmt(c.y) << ',' << fmt(f.values[n].x) << ','
       << fmt(f.values[n].y) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw Error(ErrorCode::IoError, "bad number on line " + std::to_string(line));
  return v;
}

template <class T, std::size_t Width>
GridField<T> read_field(std::istream& is, const Domain& d, const char* header) {
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw Error(ErrorCode::IoError, std::string("expected header ") + header);
  }
  GridField<T> f(d);
  std::fill(f.support.begin(), f.support.end(), 0);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != Width) throw Error(ErrorCode::IoError, "wrong column count on line " + std::to_string(lineno));
    const int i = static_cast<int>(parse_double(cells[0], lineno));
    const int j = static_cast<int>(parse_double(cells[1], lineno));
    const int n = d.node_at(i, j);
    if (n < 0) throw Error(ErrorCode::IoError, "cell on line " + std::to_string(lineno) + " is not interior");
    const Vec2 c{parse_double(cells[2], lineno), parse_double(cells[3], lineno)};
    if (euclid(c - d.center(n)) > 0.25 * d.h()) {
      throw Error(ErrorCode::IoError, "cell centre on line " + std::to_string(lineno) + " does not match the grid");
    }
    if constexpr (Width == 5) {
      f.values[n] = parse_double(cells[4], lineno);
    } else {
      f.values[n] = Vec2{parse_double(cells[4], lineno), parse_double(cells[5], lineno)};
    }
    f.support[n] = 1;
  }
  return f;
}

}  // namespace detail

inline GridScalarField read_scalar_field_csv(std::istream& is, const Domain& d) {
  return detail::read_field<double, 5>(is, d, "i,j,cx,cy,v");
}

inline GridVectorField read_vector_field_csv(std::istream& is, const Domain& d) {
  return detail::read_field<Vec2, 6>(is, d, "i,j,cx,cy,vx,vy");
}

/// Arcs carrying flow: network endpoints, flow and unit cost.
inline void write_arcs_csv(std::ostream& os, const TransportResult& r) {
  os << "u,v,flow,cost\n";
  const auto& arcs = r.network.arcs;
  for (std::size_t e = 0; e < arcs.size(); ++e) {
    if (r.solution.arc_flows[e] == 0.0) continue;
    os << arcs[e].from << ',' << arcs[e].to << ',' << fmt(r.solution.arc_flows[e]) << ',' << fmt(arcs[e].cost) << '\n';
  }
}

/// Flow-carrying arcs with endpoint positions, for plotting.
inline void write_flow_plot_csv(std::ostream& os, const Domain& d, const TransportResult& r) {
  os << "ux,uy,vx,vy,flow\n";
  const auto& arcs = r.network.arcs;
  for (std::size_t e = 0; e < arcs.size(); ++e) {
    if (r.solution.arc_flows[e] == 0.0) continue;
    const Vec2 a = d.center(r.network_cell[arcs[e].from]), b = d.center(r.network_cell[arcs[e].to]);
    os << fmt(a.x) << ',' << fmt(a.y) << ',' << fmt(b.x) << ',' << fmt(b.y) << ',' << fmt(r.solution.arc_flows[e]) << '\n';
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  return out;
}

}  // namespace freeflow::io
