// packopt command line: forward solves, shape optimization, gradient checks,
// mesh inspection and case generation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "packopt/packopt.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace packopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;
constexpr int kExitGradcheck = 3;

json metrics_json(const CaseMetrics& m) {
  return json{{"beta", m.beta}, {"c_out", m.c_out}, {"vdot", m.vdot},
              {"a_geo", m.a_geo}, {"dp", m.dp},       {"J", m.J}};
}

void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

CaseConfig load_config(const std::string& path) {
  return path.empty() ? CaseConfig{} : read_config(path);
}

template <int Dim>
void write_solution_vtk(const fs::path& path, const Mesh<Dim>& mesh, const CaseSolution<Dim>& s) {
  const auto u = s.flow.velocity_field();
  const Vector p = s.flow.pressure_field();
  io::VtkFields<Dim> f;
  f.vectors.push_back({"u", &u});
  f.scalars.push_back({"p", &p});
  f.scalars.push_back({"c", &s.c});
  io::write_vtk(path, mesh, f);
}

std::string iter_name(const char* stem, int it, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", stem, it, ext);
  return buf;
}

template <int Dim>
int run_simulate(const Mesh<Dim>& mesh, const CaseConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const auto s = solve_case(mesh, cfg.physics);
  write_solution_vtk(out / "solution.vtk", mesh, s);
  json j = metrics_json(s.metrics);
  write_json(out / "metrics.json", j);
  j["newton_iterations"] = s.flow_report.newton_iterations;
  j["continuation"] = s.flow_report.used_continuation;
  j["mass_imbalance"] = s.flow_report.mass_imbalance;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

template <int Dim>
int run_optimize(Mesh<Dim> mesh, const CaseConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const int every = cfg.vtk_every;
  std::printf("%5s %14s %12s %12s %12s %8s %11s %11s\n", "iter", "beta", "c_out", "dp", "a_geo",
              "min_q", "step", "|g|");
  auto callback = [&](const Mesh<Dim>& m, const CaseSolution<Dim>& s, const OptimizationRecord& r) {
    std::printf("%5d %14.8g %12.6g %12.6g %12.6g %8.4f %11.4e %11.4e\n", r.iter, r.beta, r.c_out,
                r.dp, r.a_geo, r.min_quality, r.step, r.grad_norm);
    std::fflush(stdout);
    if (every > 0 && r.iter % every == 0) write_solution_vtk(out / iter_name("iter", r.iter, "vtk"), m, s);
  };
  auto res = optimize(mesh, cfg.physics, cfg.optimizer, cfg.shape, IterationCallback<Dim>(callback));
  io::write_history(out / "history.csv", res.history);
  io::write_msh(out / "final.msh", mesh);
  write_solution_vtk(out / "final.vtk", mesh, res.solution);

  const auto& first = res.history.front();
  const auto& last = res.history.back();
  json j = metrics_json(res.solution.metrics);
  j["iterations"] = last.iter;
  j["stop_reason"] = stop_reason_name(res.reason);
  j["message"] = res.message;
  j["beta_initial"] = first.beta;
  j["beta_change"] = last.beta / first.beta - 1.0;
  j["a_geo_change"] = last.a_geo / first.a_geo - 1.0;
  j["dp_initial"] = first.dp;
  j["dp_change"] = last.dp / first.dp - 1.0;
  j["max_displacement"] = res.max_displacement;
  j["trust_radius_exceeded"] = res.trust_exceeded;
  j["ascent_violations"] = res.ascent_violations;
  json audits = json::array();
  for (const auto& a : res.audits)
    audits.push_back({{"iter", a.iter}, {"fd", a.fd}, {"adjoint", a.adjoint}, {"rel_error", a.rel_error}});
  j["audits"] = audits;
  write_json(out / "metrics.json", j);
  std::printf("stop: %s%s%s\n", stop_reason_name(res.reason), res.message.empty() ? "" : ": ",
              res.message.c_str());
  return res.reason == StopReason::Failed ? kExitFailure : kExitOk;
}

template <int Dim>
int run_gradcheck(const Mesh<Dim>& mesh, const CaseConfig& cfg, GradcheckConfig gc) {
  const auto sc = build_constraints(mesh, cfg.shape);
  const auto r = gradient_check(mesh, cfg.physics, sc, gc);
  std::printf("J = %.12g, h_mean = %.6g\n", r.J, r.h_mean);
  std::printf("%4s %10s %22s %22s %10s\n", "dir", "eps", "fd", "adjoint", "rel_err");
  for (const auto& row : r.rows)
    std::printf("%4d %10.1e %22.14e %22.14e %10.3e\n", row.direction, row.eps, row.fd, row.adjoint,
                row.rel_error);
  std::printf("worst relative error %.3e, worst best-eps error %.3e\n", r.worst_error, r.worst_best_error);
  if (!r.passed(gc.tolerance)) {
    std::printf("FAIL: relative error above %.1e\n", gc.tolerance);
    return kExitGradcheck;
  }
  std::printf("PASS\n");
  return kExitOk;
}

template <int Dim>
int run_mesh_quality(const Mesh<Dim>& mesh, int bins) {
  std::vector<int> hist(bins, 0);
  for (int c = 0; c < mesh.cell_count(); ++c) {
    const double q = cell_quality(mesh, c);
    hist[std::clamp(static_cast<int>(q * bins), 0, bins - 1)]++;
  }
  std::printf("dimension %d, %d vertices, %d cells, %d boundary facets\n", Dim, mesh.vertex_count(),
              mesh.cell_count(), mesh.facet_count());
  std::printf("min quality %.6f\nmean quality %.6f\n", min_quality(mesh), mean_quality(mesh));
  for (int b = 0; b < bins; ++b)
    std::printf("[%.2f, %.2f) %d\n", static_cast<double>(b) / bins, static_cast<double>(b + 1) / bins,
                hist[b]);
  return kExitOk;
}

Obstacle parse_obstacle(const std::string& s) {
  Obstacle o;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &o.x, &o.y, &o.r) != 3)
    throw ConfigError("--obstacle expects x,y,r, got '" + s + "'");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Packed-column mass-transfer surrogate with adjoint shape optimization"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print every configuration key with its default and exit");

  std::string mesh_path, config_path, out_dir;
  auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--mesh", mesh_path, "Input mesh (MSH 2.2 ASCII)")->required()->check(CLI::ExistingFile);
    sub->add_option("--config", config_path, "Case configuration (key = value)")->check(CLI::ExistingFile);
    if (with_out) sub->add_option("--out", out_dir, "Output directory (default: output.dir)");
  };

  auto* simulate = app.add_subcommand("simulate", "Forward solve; writes VTK and metrics JSON");
  add_common(simulate, true);

  auto* optimize_cmd = app.add_subcommand("optimize", "Shape optimization of beta");
  add_common(optimize_cmd, true);
  int max_iterations = -1;
  optimize_cmd->add_option("--max-iterations", max_iterations, "Override optimizer.max_iterations");

  auto* gradcheck = app.add_subcommand("gradcheck", "Adjoint gradient against central differences");
  add_common(gradcheck, false);
  GradcheckConfig gc;
  bool seed_given = false;
  gradcheck->add_option("--directions", gc.directions, "Number of random admissible directions")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--eps", gc.eps, "Largest FD step in mean edge lengths (then /10, /100)")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", gc.tolerance, "Maximum accepted relative error");
  gradcheck->add_option("--seed", gc.seed, "Direction seed (default: config seed)")->each([&](const std::string&) {
    seed_given = true;
  });

  auto* quality = app.add_subcommand("mesh-quality", "Min/mean quality and histogram");
  quality->add_option("--mesh", mesh_path, "Input mesh")->required()->check(CLI::ExistingFile);
  int bins = 10;
  quality->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);

  auto* make_case = app.add_subcommand("make-case", "Generate a 2D channel with circular obstacles");
  std::string case_out, kind = "channel-obstacles";
  ChannelSpec spec;
  std::vector<std::string> obstacles;
  bool desk = false;
  make_case->add_option("kind", kind, "Case kind")->check(CLI::IsMember({"channel-obstacles"}));
  make_case->add_option("--out", case_out, "Output MSH file")->required();
  make_case->add_flag("--desk", desk, "Use the built-in four-obstacle desk layout");
  make_case->add_option("--length", spec.length, "Channel length [m]")->check(CLI::PositiveNumber);
  make_case->add_option("--height", spec.height, "Channel height [m]")->check(CLI::PositiveNumber);
  make_case->add_option("--edge", spec.h, "Target edge length [m]")->check(CLI::PositiveNumber);
  make_case->add_option("--obstacle", obstacles, "Obstacle x,y,r [m] (repeatable)");
  make_case->add_flag("--mirror", spec.mirror, "Mesh the lower half and reflect it");
  make_case->add_option("--min-quality", spec.min_quality, "Required minimum cell quality");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (print_config) {
      std::cout << format_config(CaseConfig{});
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return kExitUsage;
    }

    if (*make_case) {
      if (desk) {
        const ChannelSpec d = desk_channel();
        spec.obstacles = d.obstacles;
      }
      for (const auto& o : obstacles) spec.obstacles.push_back(parse_obstacle(o));
      const auto mesh = make_channel_mesh(spec);
      io::write_msh(case_out, mesh);
      std::printf("wrote %s: %d vertices, %d cells, min quality %.4f\n", case_out.c_str(),
                  mesh.vertex_count(), mesh.cell_count(), min_quality(mesh));
      return kExitOk;
    }

    const auto mesh = io::read_msh(mesh_path);
    if (*quality) return std::visit([&](const auto& m) { return run_mesh_quality(m, bins); }, mesh);

    CaseConfig cfg = load_config(config_path);
    if (max_iterations >= 0) cfg.optimizer.max_iterations = max_iterations;
    cfg.validate();
    const fs::path out = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);

    if (*simulate) return std::visit([&](const auto& m) { return run_simulate(m, cfg, out); }, mesh);
    if (*optimize_cmd) return std::visit([&](const auto& m) { return run_optimize(m, cfg, out); }, mesh);
    if (*gradcheck) {
      if (!seed_given) gc.seed = cfg.seed;
      return std::visit([&](const auto& m) { return run_gradcheck(m, cfg, gc); }, mesh);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
