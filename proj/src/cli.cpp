#include "chemoflow/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "chemoflow/parallel.hpp"

#ifndef CHEMOFLOW_VERSION
#define CHEMOFLOW_VERSION "unknown"
#endif

namespace chemoflow {

namespace {

namespace fs = std::filesystem;

void write_metadata(const RunConfig& cfg, const fs::path& dir, const std::string& command,
                    const nlohmann::json& extra) {
  nlohmann::json meta{{"artifact", "chemoflow"},
                      {"version", CHEMOFLOW_VERSION},
                      {"command", command},
                      {"seed", cfg.seed},
                      {"config", to_json(cfg)}};
  meta.update(extra);
  std::ofstream out(dir / "metadata.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + (dir / "metadata.json").string());
  out << meta.dump(2) << '\n';
}

Eigen::ArrayXXd cell_u(const FluidState& s) {
  const auto nx = s.p.rows();
  return 0.5 * (s.u.topRows(nx) + s.u.bottomRows(nx));
}

Eigen::ArrayXXd cell_v(const FluidState& s) {
  const auto ny = s.p.cols();
  return 0.5 * (s.v.leftCols(ny) + s.v.rightCols(ny));
}

class SnapshotWriter {
 public:
  SnapshotWriter(const Mesh& mesh, const OutputConfig& out) : mesh_(mesh), out_(out) {}

  void write(const MacroState& m, const FluidState* f, const FluidSolver* solver) {
    for (const std::string& name : out_.fields) {
      SnapshotRecord rec;
      if (name == "n1") rec = field_record(mesh_, m.n1, m.t, name);
      else if (name == "n2") rec = field_record(mesh_, m.n2, m.t, name);
      else if (name == "w1") rec = field_record(mesh_, m.w1, m.t, name);
      else if (name == "w2") rec = field_record(mesh_, m.w2, m.t, name);
      else if (!f || !solver) throw std::logic_error("snapshot: field " + name + " needs a fluid state");
      else if (name == "speed") rec = field_record(solver->speed(*f), m.t, name);
      else if (name == "p") rec = field_record(f->p, m.t, name);
      else if (name == "u") rec = field_record(cell_u(*f), m.t, name);
      else if (name == "v") rec = field_record(cell_v(*f), m.t, name);
      else throw std::logic_error("snapshot: unknown field " + name);
      write_snapshot(rec, out_.format, fs::path(out_.out_dir) / snapshot_filename(name, index_, out_.format));
    }
    times_.push_back(m.t);
    ++index_;
  }

  const std::vector<double>& times() const { return times_; }

 private:
  const Mesh& mesh_;
  const OutputConfig& out_;
  int index_ = 0;
  std::vector<double> times_;
};

bool due(double mark, double t, double dt) { return mark <= t + 1e-9 * dt; }

}  // namespace

RunSummary execute_run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  set_thread_count(cfg.threads);
  const fs::path dir(cfg.output.out_dir);
  fs::create_directories(dir);
  write_metadata(cfg, dir, "run", {{"status", "running"}});

  const Mesh mesh(cfg.grid);
  const MacroSolver macro(mesh, cfg.model, cfg.step);
  const std::vector<double> marks = cfg.snapshot_schedule();
  SnapshotWriter snaps(mesh, cfg.output);
  DiagnosticsWriter diag(dir / "diagnostics.csv", cfg.fluid_enabled);
  RunSummary summary;

  auto finish = [&](const std::string& status) {
    summary.snapshot_times = snaps.times();
    write_metadata(cfg, dir, "run",
                   {{"status", status}, {"t_final", summary.t_final}, {"steps", summary.steps},
                    {"snapshot_times", summary.snapshot_times}});
  };

  try {
    if (!cfg.fluid_enabled) {
      RunControl control{cfg.t_end, marks};
      RunResult r = run(macro, initial_state(mesh, cfg), control,
                        [&](const MacroState& s) { snaps.write(s, nullptr, nullptr); });
      for (const Diagnostics& d : r.series) diag.write(d);
      summary.t_final = r.final_state.t;
      summary.steps = static_cast<int>(r.series.size());
    } else {
      FluidConfig fc = cfg.fluid;
      fc.dt = cfg.step.dt;
      const FluidSolver fluid(mesh, cfg.model, fc);
      FluidState fs = fluid.initial_state();
      MacroState ms = initial_state(mesh, cfg);
      {
        const FaceVelocity vel = fs.velocity();
        const ChemicalFields w = macro.solve_chemicals(ms.n1, ms.n2, &vel, &ms);
        if (!w.ok()) throw StepFailure(0.0, "initial chemical solve failed");
        ms.w1 = w.w1;
        ms.w2 = w.w2;
      }
      const double dt = cfg.step.dt;
      const auto total = static_cast<long>(std::ceil(cfg.t_end / dt - 1e-9));
      std::size_t next = 0;
      auto emit = [&] {
        while (next < marks.size() && due(marks[next], ms.t, dt)) {
          snaps.write(ms, &fs, &fluid);
          ++next;
        }
      };
      emit();
      for (long k = 0; k < total; ++k) {
        CoupledOutcome o = coupled_step(fluid, macro, fs, ms);
        if (!o.macro.accepted) {
          std::ostringstream msg;
          msg << "step failed at t=" << ms.t << ": " << o.macro.message;
          throw StepFailure(ms.t, msg.str());
        }
        const double t = static_cast<double>(k + 1) * dt;
        fs = std::move(o.fluid);
        fs.t = t;
        ms = std::move(o.macro.state);
        ms.t = t;
        Diagnostics d = diagnostics(mesh, ms);
        d.dt = dt;
        d.newton_iterations = o.macro.newton_iterations;
        d.gmres_iterations = o.macro.gmres_iterations;
        d.residual = o.macro.max_final_residual;
        diag.write(d, o.monitor.kinetic_energy, o.monitor.max_divergence, o.monitor.vertical_momentum);
        ++summary.steps;
        emit();
      }
      summary.t_final = ms.t;
    }
  } catch (const StepFailure&) {
    finish("failed");
    throw;
  }
  finish("ok");
  log << "run: " << summary.steps << " steps to t=" << summary.t_final << ", " << summary.snapshot_times.size()
      << " snapshots in " << dir.string() << '\n';
  return summary;
}

std::vector<ConvergenceRow> execute_kinetic_study(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir(cfg.output.out_dir);
  fs::create_directories(dir);
  const KineticSetup setup = kinetic_setup(cfg);
  const std::vector<ConvergenceRow> rows = convergence_study(cfg.kinetic.eps, setup);
  write_convergence_csv((dir / "convergence.csv").string(), rows);
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows)
    table.push_back({{"eps", r.eps}, {"error", r.error}, {"ratio", std::isnan(r.ratio) ? nlohmann::json() : nlohmann::json(r.ratio)}});
  write_metadata(cfg, dir, "kinetic-study", {{"status", "ok"}, {"rows", table}});
  for (const auto& r : rows) log << "eps=" << r.eps << " error=" << r.error << " ratio=" << r.ratio << '\n';
  return rows;
}

std::vector<InvariantResult> check_invariants(const RunConfig& cfg, int steps) {
  cfg.validate();
  set_thread_count(cfg.threads);
  const Mesh mesh(cfg.grid);
  const MacroSolver macro(mesh, cfg.model, cfg.step);
  const double dt = cfg.step.dt;
  const double growth = (1.0 + std::max(cfg.model.a1, cfg.model.a2) * dt) * 1.05;

  std::optional<FluidSolver> fluid;
  FluidState fs;
  MacroState ms = initial_state(mesh, cfg);
  FaceVelocity vel = FaceVelocity::zeros(mesh.nx(), mesh.ny());
  if (cfg.fluid_enabled) {
    FluidConfig fc = cfg.fluid;
    fc.dt = dt;
    fluid.emplace(mesh, cfg.model, fc);
    fs = fluid->initial_state();
    vel = fs.velocity();
  }
  const ChemicalFields w = macro.solve_chemicals(ms.n1, ms.n2, cfg.fluid_enabled ? &vel : nullptr, &ms);
  ms.w1 = w.w1;
  ms.w2 = w.w2;

  bool finite = ms.all_finite(), nonneg = true, mass_ok = true, div_ok = true, newton_ok = true;
  double worst_min = std::min(ms.n1.minCoeff(), ms.n2.minCoeff()), worst_ratio = 0.0, worst_div = 0.0;
  std::string failure;
  Diagnostics prev = diagnostics(mesh, ms);
  for (int k = 0; k < steps; ++k) {
    StepOutcome o;
    if (fluid) {
      CoupledOutcome c = coupled_step(*fluid, macro, fs, ms);
      fs = std::move(c.fluid);
      worst_div = std::max(worst_div, c.monitor.max_divergence);
      o = std::move(c.macro);
    } else {
      o = macro.step(ms);
    }
    if (!o.accepted) {
      newton_ok = false;
      failure = o.message;
      break;
    }
    ms = std::move(o.state);
    const Diagnostics d = diagnostics(mesh, ms);
    finite = finite && ms.all_finite();
    worst_min = std::min({worst_min, d.min[0], d.min[1]});
    for (int s = 0; s < 2; ++s) {
      if (prev.mass[s] > 0.0) worst_ratio = std::max(worst_ratio, d.mass[s] / (growth * prev.mass[s]));
      if (d.mass[s] > growth * prev.mass[s] + 1e-14) mass_ok = false;
    }
    prev = d;
  }
  nonneg = worst_min >= -1e-8;
  div_ok = worst_div <= 1e-8;

  auto fmt = [](double v) {
    std::ostringstream s;
    s << v;
    return s.str();
  };
  std::vector<InvariantResult> out{
      {"steps accepted", newton_ok, newton_ok ? std::to_string(steps) + " steps" : failure},
      {"finite fields", finite, ""},
      {"nonnegative densities", nonneg, "min=" + fmt(worst_min)},
      {"mass growth bound", mass_ok, "max ratio=" + fmt(worst_ratio)},
  };
  if (fluid) out.push_back({"discrete divergence", div_ok, "max=" + fmt(worst_div)});
  return out;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"chemoflow: cross-diffusion predator-prey solver"};
  app.set_version_flag("--version", std::string(CHEMOFLOW_VERSION));
  app.require_subcommand(1);

  struct Options {
    std::string preset, config, out_dir, format;
    std::optional<double> t_end, dt;
    std::optional<int> nx, ny, threads, steps;
    std::optional<std::uint64_t> seed;
  } opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", opt.preset, "Preset name")
        ->check(CLI::IsMember(preset_names()));
    sub->add_option("--config", opt.config, "TOML configuration file");
    sub->add_option("--out-dir", opt.out_dir, "Output directory");
    sub->add_option("--t-end", opt.t_end, "Final time");
    sub->add_option("--dt", opt.dt, "Time step");
    sub->add_option("--nx", opt.nx, "Cells in x");
    sub->add_option("--ny", opt.ny, "Cells in y");
    sub->add_option("--seed", opt.seed, "RNG seed");
    sub->add_option("--threads", opt.threads, "Worker threads");
    sub->add_option("--format", opt.format, "Snapshot format")->check(CLI::IsMember({"csv", "pgm"}));
  };
  CLI::App* run_cmd = app.add_subcommand("run", "Run a simulation");
  CLI::App* kin_cmd = app.add_subcommand("kinetic-study", "Kinetic diffusion-limit convergence table");
  CLI::App* chk_cmd = app.add_subcommand("check", "Invariant checks on a short run");
  for (CLI::App* sub : {run_cmd, kin_cmd, chk_cmd}) add_common(sub);
  chk_cmd->add_option("--steps", opt.steps, "Steps to check (default 10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunConfig cfg;
  try {
    if (!opt.config.empty() && !opt.preset.empty()) throw ConfigError("use either --preset or --config");
    if (!opt.config.empty()) cfg = load_config(opt.config);
    else if (!opt.preset.empty()) cfg = preset(opt.preset);
    else if (!kin_cmd->parsed()) throw ConfigError("one of --preset or --config is required");
    if (opt.out_dir.size()) cfg.output.out_dir = opt.out_dir;
    if (opt.t_end) cfg.t_end = *opt.t_end;
    if (opt.dt) cfg.step.dt = cfg.fluid.dt = *opt.dt;
    if (opt.nx) cfg.grid.nx = *opt.nx;
    if (opt.ny) cfg.grid.ny = *opt.ny;
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.threads) cfg.threads = *opt.threads;
    if (!opt.format.empty()) cfg.output.format = parse_format(opt.format);
    if (opt.steps && *opt.steps < 1) throw ConfigError("--steps must be >= 1");
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      execute_run(cfg, std::cout);
    } else if (kin_cmd->parsed()) {
      execute_kinetic_study(cfg, std::cout);
    } else {
      const auto results = check_invariants(cfg, opt.steps.value_or(10));
      bool all = true;
      for (const auto& r : results) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name;
        if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
        std::cout << '\n';
        all = all && r.pass;
      }
      return all ? 0 : 1;
    }
  } catch (const StepFailure& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace chemoflow
