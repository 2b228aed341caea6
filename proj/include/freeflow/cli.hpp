#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "freeflow/domain.hpp"
#include "freeflow/error.hpp"
#include "freeflow/fields.hpp"
#include "freeflow/flows.hpp"
#include "freeflow/io.hpp"
#include "freeflow/molecule.hpp"
#include "freeflow/potential.hpp"
#include "freeflow/transport.hpp"

namespace freeflow::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"rasterize",    "dist",      "lipnorm",  "reconstruct",
                                              "conservativity", "spindle", "loopsmear", "beckmann",
                                              "kantorovich",  "quotient",  "compare",  "vortex-demo"};
  return names;
}

struct Options {
  std::string command;
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::optional<std::int64_t> mass_scale;
  std::map<std::string, double> tolerances;
  std::vector<std::string> plots;
};

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigInvalid = 2, kIoError = 3, kModuleError = 4 };

struct Check {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  std::string relation;  // "abs_diff", "rel_diff", "le" or "ge"
  bool pass = false;
};

/// Plot series collected while running a command.
struct Series {
  std::optional<GridVectorField> vector_field;
  std::optional<GridScalarField> scalar_field;
  std::optional<TransportResult> flow;
  DomainPtr flow_domain;
  std::vector<std::array<double, 3>> convergence;  // (h, k, error)
};

struct Report {
  std::string command;
  std::string inputs_digest;
  std::uint64_t seed = 1;
  json params = json::object();
  json results = json::object();
  std::vector<Check> checks;
  std::vector<std::string> artifacts;
  json timings = json::object();
  Series series;

  bool pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }

  /// Deterministic body: everything except timings.
  json body() const {
    json j;
    j["command"] = command;
    j["inputs_digest"] = inputs_digest;
    j["seed"] = seed;
    j["params"] = params;
    j["results"] = results;
    j["checks"] = json::array();
    for (const auto& c : checks) {
      j["checks"].push_back({{"name", c.name},
                             {"value", c.value},
                             {"target", c.target},
                             {"tolerance", c.tolerance},
                             {"relation", c.relation},
                             {"pass", c.pass}});
    }
    j["artifacts"] = artifacts;
    j["pass"] = pass();
    return j;
  }
};

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Writes CSV files for one plot kind into `dir`; returns the file names.
inline std::vector<std::string> emit_plot_data(const Series& s, const std::string& kind, const fs::path& dir) {
  std::vector<std::string> files;
  if (kind == "field") {
    require(s.vector_field || s.scalar_field, ErrorCode::MissingSeries, "no field series in this report");
    if (s.vector_field) {
      auto out = io::open_output((dir / "field_plot.csv").string());
      io::write_field_csv(out, *s.vector_field);
      files.push_back("field_plot.csv");
    }
    if (s.scalar_field) {
      auto out = io::open_output((dir / "scalar_plot.csv").string());
      io::write_field_csv(out, *s.scalar_field);
      files.push_back("scalar_plot.csv");
    }
  } else if (kind == "flow") {
    require(s.flow.has_value(), ErrorCode::MissingSeries, "no flow series in this report");
    auto out = io::open_output((dir / "flow_plot.csv").string());
    io::write_flow_plot_csv(out, *s.flow_domain, *s.flow);
    files.push_back("flow_plot.csv");
  } else if (kind == "convergence") {
    require(!s.convergence.empty(), ErrorCode::MissingSeries, "no convergence series in this report");
    auto out = io::open_output((dir / "convergence.csv").string());
    out << "h,k,error\n";
    for (const auto& [h, k, e] : s.convergence) out << io::fmt(h) << ',' << io::fmt(k) << ',' << io::fmt(e) << '\n';
    files.push_back("convergence.csv");
  } else {
    throw Error(ErrorCode::ConfigInvalid, "unknown plot kind " + kind);
  }
  return files;
}

namespace detail {

using Clock = std::chrono::steady_clock;

/// Shared state of one command run.
class Context {
 public:
  Context(const Options& opt, json config, fs::path base) : opt_(opt), config_(std::move(config)), base_(std::move(base)) {
    if (config_.contains("tolerances")) {
      for (const auto& [name, v] : config_["tolerances"].items()) {
        if (!v.is_number()) throw Error(ErrorCode::ConfigInvalid, "tolerance " + name + " must be a number");
        tolerances_[name] = v.get<double>();
      }
    }
    for (const auto& [name, v] : opt.tolerances) tolerances_[name] = v;
    for (const auto& [name, v] : tolerances_) {
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::ConfigInvalid, "tolerance " + name + " must be > 0");
    }
    mass_scale_ = opt.mass_scale.value_or(config_.value("mass_scale", kDefaultMassScale));
    if (mass_scale_ < 1) throw Error(ErrorCode::ConfigInvalid, "mass_scale must be >= 1");
    report.command = opt.command;
    report.seed = opt.seed;
  }

  const json& config() const { return config_; }
  std::int64_t mass_scale() const { return mass_scale_; }
  std::uint64_t seed() const { return opt_.seed; }

  const json& block(const char* key) const {
    if (!config_.contains(key)) throw Error(ErrorCode::ConfigInvalid, std::string("config needs a ") + key + " block");
    return config_[key];
  }

  int integer(const char* key, int fallback) const {
    if (!config_.contains(key)) return fallback;
    if (!config_[key].is_number_integer()) throw Error(ErrorCode::ConfigInvalid, std::string(key) + " must be an integer");
    return config_[key].get<int>();
  }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_ / path;
  }

  template <class Fn>
  auto timed(const std::string& label, Fn&& fn) {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      report.timings[label] = std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto v = fn();
      report.timings[label] = std::chrono::duration<double>(Clock::now() - t0).count();
      return v;
    }
  }

  DomainPtr domain() {
    if (!domain_) {
      domain_ = timed("build_domain", [&] { return build_domain(io::domain_spec_from_json(block("domain"))); });
      report.params["h"] = domain_->h();
      report.params["norm"] = to_string(domain_->norm());
      report.params["K"] = domain_->order();
    }
    return domain_;
  }

  void set_k(int k) {
    k_ = k;
    report.params["k"] = k;
  }
  void uses_mass_scale() {
    with_mass_ = true;
    report.params["mass_scale"] = mass_scale_;
  }

  /// Records a numeric result tagged with units and the parameters in force.
  void result(const std::string& name, double value, const std::string& units) {
    json r{{"value", value}, {"units", units}};
    r["h"] = domain_ ? json(domain_->h()) : json(nullptr);
    r["k"] = k_ ? json(*k_) : json(nullptr);
    r["mass_scale"] = with_mass_ ? json(mass_scale_) : json(nullptr);
    report.results[name] = r;
  }
  void flag(const std::string& name, bool value) { report.results[name] = {{"value", value}, {"units", "bool"}}; }

  double tolerance(const std::string& name, double fallback) const {
    const auto it = tolerances_.find(name);
    return it == tolerances_.end() ? fallback : it->second;
  }

  void check_close(const std::string& name, double value, double target, double default_tol) {
    const double tol = tolerance(name, default_tol);
    report.checks.push_back({name, value, target, tol, "abs_diff", std::abs(value - target) <= tol});
  }
  void check_rel(const std::string& name, double value, double target, double default_tol) {
    const double tol = tolerance(name, default_tol);
    const double rel = std::abs(value - target) / std::max(std::abs(target), 1e-300);
    report.checks.push_back({name, value, target, tol, "rel_diff", rel <= tol});
  }
  void check_le(const std::string& name, double value, double bound, double default_tol) {
    const double tol = tolerance(name, default_tol);
    report.checks.push_back({name, value, bound, tol, "le", value <= bound + tol});
  }
  void check_ge(const std::string& name, double value, double bound) {
    report.checks.push_back({name, value, bound, 0.0, "ge", value >= bound});
  }
  void check_flag(const std::string& name, bool value, bool expected) {
    report.checks.push_back({name, value ? 1.0 : 0.0, expected ? 1.0 : 0.0, 0.0, "abs_diff", value == expected});
  }

  /// Checks from the config's "expect" block against recorded results.
  void expectations() {
    if (!config_.contains("expect")) return;
    for (const auto& [name, target] : config_["expect"].items()) {
      if (!report.results.contains(name)) throw Error(ErrorCode::ConfigInvalid, "expected result " + name + " not produced");
      const json& v = report.results[name]["value"];
      if (target.is_boolean()) {
        check_flag(name, v.get<bool>(), target.get<bool>());
      } else if (target.is_number()) {
        check_close(name, v.get<double>(), target.get<double>(), 1e-9);
      } else {
        throw Error(ErrorCode::ConfigInvalid, "expectation " + name + " must be a number or bool");
      }
    }
  }

  fs::path out_path(const std::string& name) {
    report.artifacts.push_back(name);
    return fs::path(opt_.out) / name;
  }

  Report report;

 private:
  const Options& opt_;
  json config_;
  fs::path base_;
  std::map<std::string, double> tolerances_;
  std::int64_t mass_scale_ = kDefaultMassScale;
  DomainPtr domain_;
  std::optional<int> k_;
  bool with_mass_ = false;
};

/// A vector field with, when known, the potential it is the gradient of.
struct FieldSource {
  GridVectorField field;
  std::function<double(Vec2)> potential;
};

inline FieldSource vector_source(Context& ctx, const Domain& d, const json& j) {
  const std::string src = j.value("source", "");
  if (src == "vortex") {
    const Vec2 c = j.contains("center") ? io::detail::point(j["center"], "center") : Vec2{};
    return {sample_field(d, vortex_field(c, j.value("min_radius", 0.5))), {}};
  }
  if (src == "linear") {
    const Vec2 a = io::detail::point(j.at("a"), "a");
    return {GridVectorField(d, a), [a](Vec2 p) { return dot(a, p); }};
  }
  if (src == "trig") {
    const auto f = random_trig_function(j.value("seed", ctx.seed()), j.value("terms", 3));
    return {GridVectorField::sample(d, f.gradient), f.value};
  }
  if (src == "distance_gradient") {
    const Vec2 q = io::detail::point(j.at("point"), "point");
    const double r = j.value("min_radius", d.h());
    AnalyticField g{[q](Vec2 p) { return (p - q) / euclid(p - q); }, [q, r](Vec2 p) { return euclid(p - q) >= r; }};
    return {sample_field(d, g), [q](Vec2 p) { return euclid(p - q); }};
  }
  if (src == "csv") {
    std::ifstream in(ctx.resolve(j.at("path").get<std::string>()));
    if (!in) throw Error(ErrorCode::IoError, "cannot open field csv");
    return {io::read_vector_field_csv(in, d), {}};
  }
  if (src == "spindle") return {spindle_field(d, io::spindle_spec_from_json(j)).field, {}};
  if (src == "loop_smear") {
    return {loop_smear(d, io::path_from_json(j.at("loop"), true), j.at("k").get<int>()), {}};
  }
  if (src == "sum") {
    FieldSource acc{GridVectorField(d), {}};
    for (const auto& part : j.at("terms")) {
      const auto s = vector_source(ctx, d, part);
      for (std::size_t n = 0; n < d.size(); ++n) {
        acc.field.support[n] = acc.field.support[n] && s.field.support[n];
        acc.field.values[n] += s.field.values[n];
      }
    }
    return acc;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown field source '" + src + "'");
}

inline GridScalarField scalar_source(Context& ctx, const Domain& d, const json& j) {
  const std::string src = j.value("source", "");
  if (src == "trig") return GridScalarField::sample(d, random_trig_function(j.value("seed", ctx.seed()), j.value("terms", 3)).value);
  if (src == "linear") {
    const Vec2 a = io::detail::point(j.at("a"), "a");
    return GridScalarField::sample(d, [a](Vec2 p) { return dot(a, p); });
  }
  if (src == "distance") {
    const Vec2 q = io::detail::point(j.at("point"), "point");
    return GridScalarField::sample(d, [q](Vec2 p) { return euclid(p - q); });
  }
  if (src == "csv") {
    std::ifstream in(ctx.resolve(j.at("path").get<std::string>()));
    if (!in) throw Error(ErrorCode::IoError, "cannot open function csv");
    return io::read_scalar_field_csv(in, d);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown function source '" + src + "'");
}

template <class Field>
void dump_field(Context& ctx, const std::string& name, const Field& f) {
  auto out = io::open_output(ctx.out_path(name).string());
  io::write_field_csv(out, f);
}

inline void dump_transport(Context& ctx, const std::string& prefix, const Domain& d, const TransportResult& r,
                           const DualityReport& dual) {
  {
    auto out = io::open_output(ctx.out_path(prefix + "_arcs.csv").string());
    io::write_arcs_csv(out, r);
  }
  json summary{{"norm", r.norm}, {"gap", dual.gap}, {"lip", dual.lip_of_potential}, {"mass_scale", ctx.mass_scale()}};
  auto out = io::open_output(ctx.out_path(prefix + "_summary.json").string());
  out << summary.dump(2) << '\n';
  ctx.report.series.flow = r;
  ctx.report.series.flow_domain = d.shared_from_this();
}

// ---- commands ----

inline void cmd_rasterize(Context& ctx) {
  const auto d = ctx.domain();
  ctx.result("interior_cells", static_cast<double>(d->size()), "count");
  ctx.result("graph_edges", static_cast<double>(d->edge_count()), "count");
  ctx.result("nx", d->nx(), "count");
  ctx.result("ny", d->ny(), "count");
  ctx.result("max_dist_to_boundary", d->max_dist_to_boundary(), "length");
  ctx.result("interior_area", static_cast<double>(d->size()) * d->h() * d->h(), "area");
  auto out = io::open_output(ctx.out_path("mask.csv").string());
  io::write_mask_csv(out, *d);
}

inline void cmd_dist(Context& ctx) {
  const auto d = ctx.domain();
  const Vec2 x = io::detail::point(ctx.block("x"), "x"), y = io::detail::point(ctx.block("y"), "y");
  const auto g = ctx.timed("dijkstra", [&] { return intrinsic_distance(*d, x, y); });
  ctx.result("distance", g.distance, "length");
  ctx.result("norm_distance", norm(y - x, d->norm()), "length");
  ctx.result("path_vertices", static_cast<double>(g.path.vertices.size()), "count");
  auto out = io::open_output(ctx.out_path("path.csv").string());
  out << "x,y\n";
  for (const auto& p : g.path.vertices) out << io::fmt(p.x) << ',' << io::fmt(p.y) << '\n';
}

inline json potential_report(const GridScalarField& f, double residual, std::optional<int> k,
                             std::optional<std::size_t> pairs, std::uint64_t seed) {
  const auto iso = isometry_defect(f);
  json j{{"lip_local", iso.lip_local},
         {"lip_global", lipschitz_norm_global(f, pairs, seed)},
         {"grad_sup", iso.grad_sup},
         {"isometry_defect", iso.defect},
         {"residual", residual},
         {"h", iso.h}};
  j["k"] = k ? json(*k) : json(nullptr);
  return j;
}

inline std::optional<std::size_t> lip_pairs(const Context& ctx) {
  if (ctx.config().contains("lip_pairs")) return ctx.config()["lip_pairs"].get<std::size_t>();
  return std::nullopt;
}

inline void cmd_lipnorm(Context& ctx) {
  const auto d = ctx.domain();
  const auto f = scalar_source(ctx, *d, ctx.block("function"));
  const auto rep = ctx.timed("lipschitz", [&] { return potential_report(f, 0.0, std::nullopt, lip_pairs(ctx), ctx.seed()); });
  for (const char* key : {"lip_local", "lip_global", "grad_sup", "isometry_defect"}) {
    ctx.result(key, rep[key].get<double>(), "1");
  }
  ctx.check_le("lip_global_le_local", rep["lip_global"].get<double>(), rep["lip_local"].get<double>(), 1e-12);
  auto out = io::open_output(ctx.out_path("potential_report.json").string());
  out << rep.dump(2) << '\n';
  ctx.report.series.scalar_field = f;
}

/// sup over reconstructed cells farther than `min_clearance` from the
/// boundary of |F - (f - f(x0))|.
inline double reconstruction_error(const ReconstructionResult& r, const std::function<double(Vec2)>& f,
                                   double min_clearance = 0.0) {
  const Domain& d = *r.potential.domain;
  const double f0 = f(d.center(d.basepoint()));
  double err = 0.0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    if (r.potential.support[n] && d.dist_to_boundary(static_cast<int>(n)) > min_clearance) err = std::max(err, std::abs(r.potential.values[n] - (f(d.center(static_cast<int>(n))) - f0)));
  }
  return err;
}

inline void cmd_reconstruct(Context& ctx) {
  const auto d = ctx.domain();
  const int k = ctx.integer("k", 8);
  ctx.set_k(k);
  const int probes = ctx.integer("probe_paths", 16);
  const auto src = vector_source(ctx, *d, ctx.block("field"));
  const auto r = ctx.timed("reconstruct", [&] { return reconstruct_potential(src.field, k, probes, ctx.seed()); });
  ctx.result("residual", r.residual, "potential");
  ctx.result("conservativity_tolerance", r.tolerance, "potential");
  ctx.result("max_loop_integral", r.check.max_loop_integral, "potential");
  ctx.result("reconstructed_cells", static_cast<double>(r.potential.support_count()), "count");
  ctx.flag("region_split", r.region_split);
  ctx.check_le("residual", r.residual, 0.0, r.tolerance);
  if (src.potential) {
    ctx.result("error", reconstruction_error(r, src.potential), "potential");
  }
  const auto rep = ctx.timed("potential_report",
                             [&] { return potential_report(r.potential, r.residual, k, lip_pairs(ctx), ctx.seed()); });
  {
    auto out = io::open_output(ctx.out_path("potential_report.json").string());
    out << rep.dump(2) << '\n';
  }
  dump_field(ctx, "potential.csv", r.potential);
  ctx.report.series.scalar_field = r.potential;

  if (ctx.config().contains("levels")) {
    require(static_cast<bool>(src.potential), ErrorCode::ConfigInvalid, "convergence levels need an analytic potential");
    // Every level is measured on the coarsest level's region, which the finer
    // regions contain.
    double prev = 0.0, worst_ratio = std::numeric_limits<double>::infinity();
    std::optional<double> clearance;
    for (const auto& level : ctx.config()["levels"]) {
      auto spec = io::domain_spec_from_json(ctx.block("domain"));
      spec.h = level.at("h").get<double>();
      const int lk = level.at("k").get<int>();
      const auto ld = build_domain(spec);
      const auto ls = vector_source(ctx, *ld, ctx.block("field"));
      const auto lr = ctx.timed("level_" + std::to_string(lk), [&] { return reconstruct_potential(ls.field, lk, 0, ctx.seed()); });
      if (!clearance) clearance = 1.0 / lk + 0.5 * spec.h;
      const double err = reconstruction_error(lr, ls.potential, *clearance);
      if (!ctx.report.series.convergence.empty()) worst_ratio = std::min(worst_ratio, prev / err);
      prev = err;
      ctx.report.series.convergence.push_back({spec.h, static_cast<double>(lk), err});
    }
    if (ctx.report.series.convergence.size() >= 2) {
      ctx.result("min_error_ratio", worst_ratio, "1");
      ctx.check_ge("min_error_ratio", worst_ratio, ctx.tolerance("min_error_ratio", 1.7));
    }
  }
}

inline void cmd_conservativity(Context& ctx) {
  const auto d = ctx.domain();
  const int k = ctx.integer("k", 8);
  ctx.set_k(k);
  const auto src = vector_source(ctx, *d, ctx.block("field"));
  std::optional<double> tol;
  if (ctx.config().contains("loop_tolerance")) tol = ctx.config()["loop_tolerance"].get<double>();
  const auto rep = ctx.timed("conservativity", [&] { return conservativity_check(src.field, k, std::nullopt, tol); });
  ctx.result("max_loop_integral", rep.max_loop_integral, "potential");
  ctx.result("tolerance", rep.tolerance, "potential");
  ctx.result("loops_checked", static_cast<double>(rep.loops_checked), "count");
  for (std::size_t q = 0; q < rep.hole_loop_integrals.size(); ++q) {
    ctx.result("hole_loop_integral_" + std::to_string(q), rep.hole_loop_integrals[q], "potential");
  }
  const double sym = jacobian_symmetry_defect(src.field, make_mollifier(*d, k));
  ctx.result("jacobian_symmetry_defect", sym, "1/length");
  ctx.flag("conservative", rep.conservative);
  ctx.report.series.vector_field = mollify(src.field, make_mollifier(*d, k));
}

inline void cmd_spindle(Context& ctx) {
  const auto d = ctx.domain();
  ctx.uses_mass_scale();
  const auto spec = io::spindle_spec_from_json(ctx.block("spindle"));
  const auto s = ctx.timed("spindle", [&] { return spindle_field(*d, spec); });
  ctx.result("l1_norm", s.l1_norm, "length");
  ctx.result("l1_bound", s.bound, "length");
  ctx.check_le("l1_norm", s.l1_norm, s.bound, 0.02);

  const Vec2 lo{std::min(spec.x.x, spec.y.x) - spec.epsilon, std::min(spec.x.y, spec.y.y) - spec.epsilon};
  const Vec2 hi{std::max(spec.x.x, spec.y.x) + spec.epsilon, std::max(spec.x.y, spec.y.y) + spec.epsilon};
  double worst = 0.0;
  for (const auto& phi : gaussian_battery(Rect{lo, hi})) {
    worst = std::max(worst, std::abs(weak_divergence_pairing(s.field, phi) - (phi.value(spec.y) - phi.value(spec.x))));
  }
  ctx.result("weak_divergence_error", worst, "potential");
  ctx.check_le("weak_divergence_error", worst, 0.0, 1e-2);

  const auto q = ctx.timed("quotient", [&] { return quotient_norm(s.field, ctx.mass_scale()); });
  const double dxy = intrinsic_distance(*d, spec.x, spec.y).distance;
  ctx.result("quotient_norm", q.norm, "length");
  ctx.result("graph_distance", dxy, "length");
  ctx.check_rel("quotient_vs_distance", q.norm, dxy, 0.05);
  dump_field(ctx, "spindle_field.csv", s.field);
  ctx.report.series.vector_field = s.field;
  ctx.report.series.flow = q.transport;
  ctx.report.series.flow_domain = d;
}

inline void cmd_loopsmear(Context& ctx) {
  const auto d = ctx.domain();
  ctx.uses_mass_scale();
  const int k = ctx.integer("k", 8);
  ctx.set_k(k);
  const auto loop = io::path_from_json(ctx.block("loop"), true);
  const auto h = ctx.timed("loop_smear", [&] { return loop_smear(*d, loop, k); });
  const auto q = ctx.timed("quotient", [&] { return quotient_norm(h, ctx.mass_scale()); });
  double largest = 0.0;
  for (const auto& a : q.mu.atoms) largest = std::max(largest, std::abs(a.mass));
  ctx.result("l1_norm", l1_norm(h), "length");
  ctx.result("max_divergence_mass", largest, "mass");
  ctx.result("quotient_norm", q.norm, "length");
  ctx.check_le("max_divergence_mass", largest, 0.0, 1e-2);
  ctx.check_le("quotient_norm", q.norm, 0.0, 1e-2);
  dump_field(ctx, "loop_field.csv", h);
  ctx.report.series.vector_field = h;
}

inline void record_transport(Context& ctx, const std::string& prefix, const Domain& d, const Molecule& mu,
                             const TransportResult& r) {
  const auto dual = ctx.timed(prefix + "_duality", [&] { return duality_certificate(d, mu, r); });
  ctx.result(prefix + "_norm", r.norm, "length");
  ctx.result(prefix + "_gap", dual.gap, "length");
  ctx.result(prefix + "_lip", dual.lip_of_potential, "1");
  ctx.check_le(prefix + "_gap", dual.gap, 0.0, 1e-9);
  ctx.check_le(prefix + "_lip", dual.lip_of_potential, 1.0, 1e-9);
  dump_transport(ctx, prefix, d, r, dual);
}

inline void cmd_transport(Context& ctx, bool beckmann) {
  const auto d = ctx.domain();
  ctx.uses_mass_scale();
  const auto mu = io::molecule_from_json(*d, ctx.block("molecule"));
  const auto r = ctx.timed("solve", [&] {
    return beckmann ? beckmann_norm(*d, mu, ctx.mass_scale()) : kantorovich_norm(*d, mu, ctx.mass_scale());
  });
  record_transport(ctx, beckmann ? "beckmann" : "kantorovich", *d, mu, r);
}

inline void cmd_compare(Context& ctx) {
  const auto d = ctx.domain();
  ctx.uses_mass_scale();
  const auto mu = io::molecule_from_json(*d, ctx.block("molecule"));
  const auto b = ctx.timed("beckmann", [&] { return beckmann_norm(*d, mu, ctx.mass_scale()); });
  const auto k = ctx.timed("kantorovich", [&] { return kantorovich_norm(*d, mu, ctx.mass_scale()); });
  record_transport(ctx, "beckmann", *d, mu, b);
  record_transport(ctx, "kantorovich", *d, mu, k);
  ctx.result("difference", std::abs(b.norm - k.norm), "length");
  ctx.check_close("beckmann_vs_kantorovich", b.norm, k.norm, 1e-9);
}

inline void cmd_quotient(Context& ctx) {
  const auto d = ctx.domain();
  ctx.uses_mass_scale();
  const auto src = vector_source(ctx, *d, ctx.block("field"));
  const auto q = ctx.timed("quotient", [&] { return quotient_norm(src.field, ctx.mass_scale()); });
  ctx.result("quotient_norm", q.norm, "length");
  ctx.result("representative_l1", q.representative_l1, "length");
  ctx.result("projected_flux_cost", q.projected_flux_cost, "length");
  ctx.result("rounding_slack", q.rounding_slack, "length");
  ctx.result("divergence_atoms", static_cast<double>(q.mu.atoms.size()), "count");
  ctx.check_le("representative_feasible", q.norm, q.projected_flux_cost + q.rounding_slack, 1e-9);
  const auto dual = duality_certificate(*d, q.mu, q.transport);
  ctx.result("gap", dual.gap, "length");
  ctx.check_le("gap", dual.gap, 0.0, 1e-9);
  dump_transport(ctx, "quotient", *d, q.transport, dual);
}

inline void cmd_vortex_demo(Context& ctx) {
  const auto d = ctx.domain();
  const int k = ctx.integer("k", 8);
  ctx.set_k(k);
  const json& vj = ctx.config().contains("vortex") ? ctx.config()["vortex"] : json::object();
  const Vec2 c = vj.contains("center") ? io::detail::point(vj["center"], "center") : Vec2{};
  const auto vortex = vortex_field(c, vj.value("min_radius", 0.5));
  const auto g = sample_field(*d, vortex);
  const auto rep = ctx.timed("conservativity", [&] { return conservativity_check(g, k); });
  require(!rep.hole_loop_integrals.empty(), ErrorCode::ConfigInvalid, "vortex demo needs a domain with a hole");
  const double hole = rep.hole_loop_integrals.front();
  const double sym = jacobian_symmetry_defect(g, make_mollifier(*d, k));
  ctx.result("hole_loop_integral", hole, "potential");
  ctx.result("jacobian_symmetry_defect", sym, "1/length");
  ctx.flag("conservative", rep.conservative);
  ctx.check_close("hole_loop_integral", hole, 2.0 * std::numbers::pi, 0.05);
  ctx.check_le("jacobian_symmetry_defect", sym, 0.0, 0.05);
  ctx.check_flag("not_conservative", !rep.conservative, true);

  bool refused = false;
  try {
    reconstruct_potential(g, k, 0, ctx.seed());
  } catch (const Error& e) {
    refused = e.code() == ErrorCode::NotConservative;
  }
  ctx.flag("reconstruction_refused", refused);
  ctx.check_flag("reconstruction_refused", refused, true);

  if (ctx.config().contains("subdomain")) {
    auto spec = io::domain_spec_from_json(ctx.config()["subdomain"]);
    const auto sub = build_domain(spec);
    const auto sg = sample_field(*sub, vortex);
    const auto srep = ctx.timed("subdomain", [&] { return conservativity_check(sg, k); });
    ctx.flag("subdomain_conservative", srep.conservative);
    ctx.result("subdomain_max_loop_integral", srep.max_loop_integral, "potential");
    ctx.check_flag("subdomain_conservative", srep.conservative, true);
  }
  ctx.report.series.vector_field = mollify(g, make_mollifier(*d, k));
}

inline void dispatch(Context& ctx) {
  const std::string& c = ctx.report.command;
  if (c == "rasterize") return cmd_rasterize(ctx);
  if (c == "dist") return cmd_dist(ctx);
  if (c == "lipnorm") return cmd_lipnorm(ctx);
  if (c == "reconstruct") return cmd_reconstruct(ctx);
  if (c == "conservativity") return cmd_conservativity(ctx);
  if (c == "spindle") return cmd_spindle(ctx);
  if (c == "loopsmear") return cmd_loopsmear(ctx);
  if (c == "beckmann") return cmd_transport(ctx, true);
  if (c == "kantorovich") return cmd_transport(ctx, false);
  if (c == "quotient") return cmd_quotient(ctx);
  if (c == "compare") return cmd_compare(ctx);
  if (c == "vortex-demo") return cmd_vortex_demo(ctx);
  throw Error(ErrorCode::ConfigInvalid, "unknown command " + c);
}

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid: return kConfigInvalid;
    case ErrorCode::IoError: return kIoError;
    default: return kModuleError;
  }
}

}  // namespace detail

/// Runs one command and writes report.json, timings.json and the command's
/// artifacts into opt.out.
inline Report run(const Options& opt) {
  std::ifstream in(opt.config, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + opt.config);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json config;
  try {
    config = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  if (!config.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");

  fs::create_directories(opt.out);
  detail::Context ctx(opt, config, fs::path(opt.config).parent_path());
  std::string digest_input = text + "|seed=" + std::to_string(opt.seed) + "|mass_scale=" + std::to_string(ctx.mass_scale());
  for (const auto& [name, v] : opt.tolerances) digest_input += "|" + name + "=" + io::fmt(v);
  ctx.report.inputs_digest = fnv1a(digest_input);
  ctx.report.params["mass_scale"] = nullptr;
  ctx.report.params["k"] = nullptr;

  try {
    detail::dispatch(ctx);
    ctx.expectations();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  for (const auto& kind : opt.plots) {
    for (const auto& f : emit_plot_data(ctx.report.series, kind, opt.out)) ctx.report.artifacts.push_back(f);
  }
  {
    auto out = io::open_output((fs::path(opt.out) / "report.json").string());
    out << ctx.report.body().dump(2) << '\n';
  }
  {
    auto out = io::open_output((fs::path(opt.out) / "timings.json").string());
    out << ctx.report.timings.dump(2) << '\n';
  }
  return ctx.report;
}

inline std::map<std::string, double> parse_tolerances(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ConfigInvalid, "--tol expects NAME=VAL, got " + item);
    char* end = nullptr;
    const std::string val = item.substr(eq + 1);
    const double v = std::strtod(val.c_str(), &end);
    if (val.empty() || *end != '\0') throw Error(ErrorCode::ConfigInvalid, "--tol value is not a number: " + item);
    out[item.substr(0, eq)] = v;
  }
  return out;
}

/// Command-line entry point; returns the process exit code.
inline int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-free space experiments on polygonal grid domains"};
  Options opt;
  std::vector<std::string> tols;
  std::int64_t mass_scale = 0;
  app.add_option("command", opt.command, "Command to run")->required()->check(CLI::IsMember(commands()));
  app.add_option("--config", opt.config, "Experiment config (JSON)")->required();
  app.add_option("--out", opt.out, "Output directory");
  app.add_option("--seed", opt.seed, "Random seed");
  auto* ms = app.add_option("--mass-scale", mass_scale, "Mass resolution 1/N for transport");
  app.add_option("--tol", tols, "Tolerance override NAME=VAL")->allow_extra_args(false);
  app.add_option("--plot", opt.plots, "Emit plot data: field, flow or convergence")->allow_extra_args(false);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigInvalid;
  }
  if (ms->count() > 0) opt.mass_scale = mass_scale;

  auto fail = [&](ErrorCode code, const std::string& message) {
    const json err{{"command", opt.command}, {"error", std::string(to_string(code))}, {"message", message}};
    std::cout << err.dump() << '\n';
    std::error_code ec;
    fs::create_directories(opt.out, ec);
    if (std::ofstream out(fs::path(opt.out) / "error.json"); out) out << err.dump(2) << '\n';
    return detail::exit_code_for(code);
  };
  try {
    opt.tolerances = parse_tolerances(tols);
    const Report rep = run(opt);
    std::cout << rep.body().dump(2) << '\n';
    return rep.pass() ? kOk : kCheckFailed;
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorCode::IoError, e.what());
  }
}

}  // namespace freeflow::cli
