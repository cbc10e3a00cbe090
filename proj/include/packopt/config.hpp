#pragma once

// Flat `key = value` case configuration with `#` comments and dotted keys.
// Unknown keys are errors.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/io/atomic_file.hpp"
#include "packopt/metrics.hpp"
#include "packopt/shapeopt.hpp"

namespace packopt {

struct CaseConfig {
  PhysicsConfig physics;
  OptimizerConfig optimizer;
  ShapeConstraintConfig shape;
  std::string output_dir = "out";
  int vtk_every = 10;  // 0 disables per-iteration VTK output
  unsigned long long seed = 1;

  void validate() const {
    physics.fluid.validate();
    physics.transport.validate();
    optimizer.validate();
    if (!(physics.inlet.u_in >= 0.0)) throw ConfigError("inlet.u_in must be >= 0");
    if (vtk_every < 0) throw ConfigError("output.vtk_every must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

template <class I>
I parse_int(const std::string& key, const std::string& v) {
  I x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct ConfigEntry {
  std::string key;
  std::function<void(CaseConfig&, const std::string&)> set;
  std::function<std::string(const CaseConfig&)> get;
};

inline std::string role_name(MotionRole r) {
  switch (r) {
    case MotionRole::Fixed: return "fixed";
    case MotionRole::Sliding: return "sliding";
    case MotionRole::Free: return "free";
  }
  return "fixed";
}

inline MotionRole parse_role(const std::string& key, const std::string& v) {
  if (v == "fixed") return MotionRole::Fixed;
  if (v == "sliding") return MotionRole::Sliding;
  if (v == "free") return MotionRole::Free;
  throw ConfigError(key + ": expected fixed, sliding or free, got '" + v + "'");
}

inline const std::vector<ConfigEntry>& config_entries() {
  static const std::vector<ConfigEntry> entries = [] {
    std::vector<ConfigEntry> e;
    auto num = [&e](std::string key, auto member) {
      e.push_back({key, [key, member](CaseConfig& c, const std::string& v) { member(c) = parse_double(key, v); },
                   [member](const CaseConfig& c) { return fmt_double(member(const_cast<CaseConfig&>(c))); }});
    };
    auto integer = [&e](std::string key, auto member) {
      e.push_back({key, [key, member](CaseConfig& c, const std::string& v) {
                     using I = std::remove_reference_t<decltype(member(c))>;
                     member(c) = parse_int<I>(key, v);
                   },
                   [member](const CaseConfig& c) { return std::to_string(member(const_cast<CaseConfig&>(c))); }});
    };
    auto boolean = [&e](std::string key, auto member) {
      e.push_back({key, [key, member](CaseConfig& c, const std::string& v) { member(c) = parse_bool(key, v); },
                   [member](const CaseConfig& c) {
                     return std::string(member(const_cast<CaseConfig&>(c)) ? "true" : "false");
                   }});
    };
    using C = CaseConfig;
    num("fluid.rho", [](C& c) -> double& { return c.physics.fluid.rho; });
    num("fluid.mu", [](C& c) -> double& { return c.physics.fluid.mu; });
    num("transport.D", [](C& c) -> double& { return c.physics.transport.D; });
    num("transport.c_in", [](C& c) -> double& { return c.physics.transport.c_in; });
    num("transport.c_pack", [](C& c) -> double& { return c.physics.transport.c_pack; });
    boolean("transport.supg", [](C& c) -> bool& { return c.physics.transport_solver.stab.supg; });
    boolean("transport.crosswind", [](C& c) -> bool& { return c.physics.transport_solver.stab.crosswind; });
    num("transport.crosswind_C", [](C& c) -> double& { return c.physics.transport_solver.stab.crosswind_c; });
    num("inlet.u_in", [](C& c) -> double& { return c.physics.inlet.u_in; });
    e.push_back({"inlet.profile",
                 [](C& c, const std::string& v) {
                   if (v == "uniform") c.physics.inlet.profile = InletProfile::Uniform;
                   else if (v == "parabolic") c.physics.inlet.profile = InletProfile::Parabolic;
                   else throw ConfigError("inlet.profile: expected uniform or parabolic, got '" + v + "'");
                 },
                 [](const C& c) {
                   return std::string(c.physics.inlet.profile == InletProfile::Uniform ? "uniform" : "parabolic");
                 }});
    num("flow.rel_tol", [](C& c) -> double& { return c.physics.flow.newton.rel_tol; });
    integer("flow.max_iter", [](C& c) -> int& { return c.physics.flow.newton.max_iter; });
    integer("flow.max_backtracks", [](C& c) -> int& { return c.physics.flow.newton.max_backtracks; });
    boolean("flow.supg", [](C& c) -> bool& { return c.physics.flow.stab.supg; });
    boolean("flow.pspg", [](C& c) -> bool& { return c.physics.flow.stab.pspg; });
    boolean("flow.lsic", [](C& c) -> bool& { return c.physics.flow.stab.lsic; });
    boolean("flow.continuation", [](C& c) -> bool& { return c.physics.flow.continuation; });
    integer("flow.continuation_steps", [](C& c) -> int& { return c.physics.flow.continuation_steps; });
    e.push_back({"linear.method",
                 [](C& c, const std::string& v) {
                   LinearMethod m;
                   if (v == "direct") m = LinearMethod::Direct;
                   else if (v == "gmres") m = LinearMethod::Gmres;
                   else throw ConfigError("linear.method: expected direct or gmres, got '" + v + "'");
                   c.physics.flow.newton.linear.method = m;
                   c.physics.transport_solver.linear.method = m;
                 },
                 [](const C& c) {
                   return std::string(c.physics.flow.newton.linear.method == LinearMethod::Direct ? "direct" : "gmres");
                 }});
    e.push_back({"linear.preconditioner",
                 [](C& c, const std::string& v) {
                   Preconditioner p;
                   if (v == "ilu") p = Preconditioner::Ilu;
                   else if (v == "jacobi") p = Preconditioner::Jacobi;
                   else throw ConfigError("linear.preconditioner: expected ilu or jacobi, got '" + v + "'");
                   c.physics.flow.newton.linear.preconditioner = p;
                   c.physics.transport_solver.linear.preconditioner = p;
                 },
                 [](const C& c) {
                   return std::string(c.physics.flow.newton.linear.preconditioner == Preconditioner::Ilu ? "ilu" : "jacobi");
                 }});
    e.push_back({"linear.rel_tol",
                 [](C& c, const std::string& v) {
                   const double x = parse_double("linear.rel_tol", v);
                   c.physics.flow.newton.linear.rel_tol = x;
                   c.physics.transport_solver.linear.rel_tol = x;
                 },
                 [](const C& c) { return fmt_double(c.physics.flow.newton.linear.rel_tol); }});
    e.push_back({"linear.max_iter",
                 [](C& c, const std::string& v) {
                   const int x = parse_int<int>("linear.max_iter", v);
                   c.physics.flow.newton.linear.max_iter = x;
                   c.physics.transport_solver.linear.max_iter = x;
                 },
                 [](const C& c) { return std::to_string(c.physics.flow.newton.linear.max_iter); }});
    e.push_back({"linear.restart",
                 [](C& c, const std::string& v) {
                   const int x = parse_int<int>("linear.restart", v);
                   c.physics.flow.newton.linear.restart = x;
                   c.physics.transport_solver.linear.restart = x;
                 },
                 [](const C& c) { return std::to_string(c.physics.flow.newton.linear.restart); }});
    integer("optimizer.max_iterations", [](C& c) -> int& { return c.optimizer.max_iterations; });
    num("optimizer.initial_step", [](C& c) -> double& { return c.optimizer.initial_step; });
    num("optimizer.armijo", [](C& c) -> double& { return c.optimizer.armijo; });
    num("optimizer.shrink", [](C& c) -> double& { return c.optimizer.shrink; });
    num("optimizer.grow", [](C& c) -> double& { return c.optimizer.grow; });
    integer("optimizer.max_halvings", [](C& c) -> int& { return c.optimizer.max_halvings; });
    num("optimizer.quality_floor", [](C& c) -> double& { return c.optimizer.quality_floor; });
    num("optimizer.grad_tol", [](C& c) -> double& { return c.optimizer.grad_tol; });
    integer("optimizer.audit_every", [](C& c) -> int& { return c.optimizer.audit_every; });
    num("optimizer.audit_eps", [](C& c) -> double& { return c.optimizer.audit_eps; });
    num("optimizer.trust_radius", [](C& c) -> double& { return c.optimizer.trust_radius; });
    num("optimizer.quality_guard", [](C& c) -> double& { return c.optimizer.quality_guard; });
    num("optimizer.min_step", [](C& c) -> double& { return c.optimizer.min_step; });
    for (auto tag : kAllTags) {
      const std::string key = "shape." + std::string(tag_name(tag));
      e.push_back({key, [key, tag](C& c, const std::string& v) { c.shape.set_role(tag, parse_role(key, v)); },
                   [tag](const C& c) { return role_name(c.shape.role(tag)); }});
    }
    e.push_back({"shape.interior",
                 [](C& c, const std::string& v) { c.shape.interior = parse_role("shape.interior", v); },
                 [](const C& c) { return role_name(c.shape.interior); }});
    e.push_back({"jacket.normal",
                 [](C& c, const std::string& v) {
                   if (v == "facets") c.shape.jacket_normal = JacketNormalMode::Facets;
                   else if (v == "cylinder-z") c.shape.jacket_normal = JacketNormalMode::CylinderZ;
                   else throw ConfigError("jacket.normal: expected facets or cylinder-z, got '" + v + "'");
                 },
                 [](const C& c) {
                   return std::string(c.shape.jacket_normal == JacketNormalMode::Facets ? "facets" : "cylinder-z");
                 }});
    num("shape.stiffening", [](C& c) -> double& { return c.shape.stiffening; });
    num("jacket.center_x", [](C& c) -> double& { return c.shape.jacket_center[0]; });
    num("jacket.center_y", [](C& c) -> double& { return c.shape.jacket_center[1]; });
    e.push_back({"output.dir", [](C& c, const std::string& v) { c.output_dir = v; },
                 [](const C& c) { return c.output_dir; }});
    integer("output.vtk_every", [](C& c) -> int& { return c.vtk_every; });
    integer("seed", [](C& c) -> unsigned long long& { return c.seed; });
    return e;
  }();
  return entries;
}

}  // namespace detail

/// Applies `key = value` lines on top of `base`.
inline CaseConfig parse_config(const std::string& text, CaseConfig base = {}) {
  const auto& entries = detail::config_entries();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const detail::ConfigEntry& e) { return e.key == key; });
    if (it == entries.end())
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty value for " + key);
    it->set(base, value);
  }
  base.validate();
  return base;
}

inline CaseConfig read_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path));
}

/// Every key with its current value, in parseable form.
inline std::string format_config(const CaseConfig& cfg) {
  std::string out;
  for (const auto& e : detail::config_entries()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace packopt
