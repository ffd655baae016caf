// Acceptance checks. `acceptance` runs all criteria; `acceptance N` runs one.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "chemoflow/cli.hpp"
#include "chemoflow/config.hpp"
#include "chemoflow/fluid_solver.hpp"
#include "chemoflow/kinetic.hpp"
#include "chemoflow/macro_solver.hpp"
#include "chemoflow/parallel.hpp"
#include "chemoflow/rng.hpp"

using namespace chemoflow;
using Vec = Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MacroState prepared(const MacroSolver& s, MacroState st) {
  const ChemicalFields w = s.solve_chemicals(st.n1, st.n2);
  st.w1 = w.w1;
  st.w2 = w.w2;
  return st;
}

double mass(const Mesh& m, const MacroState& s) { return m.cell_measure() * (s.n1.sum() + s.n2.sum()); }

double variance(const Vec& v) { return (v.array() - v.mean()).square().mean(); }

Verdict mass_conservation() {
  const Clock clock;
  RunConfig cfg = preset("example1");
  cfg.grid.nx = cfg.grid.ny = 64;
  cfg.model.a1 = cfg.model.a2 = cfg.model.b1 = cfg.model.b2 = cfg.model.c1 = cfg.model.c2 = 0.0;
  cfg.step.dt = 1e-3;
  const Mesh mesh(cfg.grid);
  const MacroSolver solver(mesh, cfg.model, cfg.step);
  MacroState s = prepared(solver, initial_state(mesh, cfg));
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    StepOutcome o = solver.step(s);
    if (!o.accepted) return {false, "step " + std::to_string(k) + " failed: " + o.message};
    const double before = mass(mesh, s), after = mass(mesh, o.state);
    worst = std::max(worst, std::abs(after - before) / before);
    s = std::move(o.state);
  }
  const double t = clock.seconds();
  return {worst <= 1e-10 && t < 60.0, fmt("max per-step relative drift %.3g, %.1f s", worst, t)};
}

Verdict nonnegativity() {
  RunConfig cfg = preset("example1");
  cfg.grid.nx = cfg.grid.ny = 64;
  const Mesh mesh(cfg.grid);
  const MacroSolver solver(mesh, cfg.model, cfg.step);
  double worst = std::numeric_limits<double>::infinity();
  int snaps = 0;
  RunControl control{cfg.t_end, cfg.snapshot_schedule()};
  try {
    run(solver, initial_state(mesh, cfg), control, [&](const MacroState& s) {
      worst = std::min({worst, s.n1.minCoeff(), s.n2.minCoeff()});
      ++snaps;
    });
  } catch (const StepFailure& e) {
    return {false, e.what()};
  }
  const bool all = snaps == static_cast<int>(control.snapshot_times.size());
  return {all && worst >= -1e-8, fmt("min density %.3g over %d snapshots", worst, snaps)};
}

Verdict mass_inequality() {
  const RunConfig cfg = preset("example3");
  const Mesh mesh(cfg.grid);
  const MacroSolver solver(mesh, cfg.model, cfg.step);
  const double growth = 1.0 + std::max(cfg.model.a1, cfg.model.a2) * cfg.step.dt;
  MacroState s = prepared(solver, initial_state(mesh, cfg));
  double worst = 0.0;
  const int steps = static_cast<int>(std::lround(cfg.t_end / cfg.step.dt));
  for (int k = 0; k < steps; ++k) {
    StepOutcome o = solver.step(s);
    if (!o.accepted) return {false, "step " + std::to_string(k) + " failed: " + o.message};
    worst = std::max(worst, mass(mesh, o.state) / (growth * 1.05 * mass(mesh, s)));
    s = std::move(o.state);
  }
  return {worst <= 1.0, fmt("max M(k+1) / bound = %.6f over %d steps", worst, steps)};
}

Verdict chemical_convergence() {
  const Clock clock;
  std::vector<double> err;
  for (int n : {32, 64, 128}) {
    GridSpec g;
    g.nx = g.ny = n;
    const Mesh m(g);
    ModelParams p = preset("example1").model;
    p.alpha1 = p.beta1 = 1.0;
    const MacroSolver s(m, p, preset("example1").step);
    Vec rhs(m.fluid_count()), exact(m.fluid_count());
    for (int k = 0; k < m.fluid_count(); ++k) {
      const Vec2 x = m.center(m.fluid_cell(k));
      exact[k] = std::cos(kPi * x.x()) * std::cos(kPi * x.y());
      rhs[k] = (2 * kPi * kPi + 1.0) * exact[k];
    }
    const ChemicalFields w = s.solve_chemicals(Vec::Zero(m.fluid_count()), rhs);
    if (!w.ok()) return {false, "chemical solve failed at " + std::to_string(n)};
    err.push_back(std::sqrt(m.cell_measure() * (w.w1 - exact).squaredNorm()));
  }
  const double o1 = std::log2(err[0] / err[1]), o2 = std::log2(err[1] / err[2]);
  const double t = clock.seconds();
  return {o1 >= 1.8 && o2 >= 1.8 && t < 30.0, fmt("orders %.3f, %.3f, %.1f s", o1, o2, t)};
}

Verdict newton_quality() {
  RunConfig cfg = preset("example1");
  cfg.grid.nx = cfg.grid.ny = 64;
  const Mesh mesh(cfg.grid);
  const MacroSolver solver(mesh, cfg.model, cfg.step);
  MacroState s = prepared(solver, initial_state(mesh, cfg));
  int worst_iters = 0, substeps = 0;
  double worst_res = 0.0;
  const int steps = static_cast<int>(std::lround(cfg.t_end / cfg.step.dt));
  for (int k = 0; k < steps; ++k) {
    StepOutcome o = solver.step(s);
    if (!o.accepted) return {false, "step " + std::to_string(k) + " failed: " + o.message};
    worst_iters = std::max(worst_iters, o.max_newton_iterations);
    worst_res = std::max(worst_res, o.max_final_residual);
    substeps += o.substeps;
    s = std::move(o.state);
  }

  // Jacobian probe on an 8x8 state with chemotaxis active.
  RunConfig small = preset("example1");
  small.grid.nx = small.grid.ny = 8;
  const Mesh pm(small.grid);
  const MacroSolver ps(pm, small.model, small.step);
  // Generic state: neighbors differ by far more than the FD step, away from the
  // kink of the min face value.
  MacroState prev = MacroState::zeros(pm.fluid_count());
  for (int k = 0; k < pm.fluid_count(); ++k) {
    prev.n1[k] = 0.2 + SplitMix64::uniform_at(11, k);
    prev.n2[k] = 0.2 + SplitMix64::uniform_at(12, k);
  }
  const ChemicalFields w = ps.solve_chemicals(prev.n1, prev.n2);
  Vec x(ps.unknowns());
  x << prev.n1 * 1.1, prev.n2 * 0.9;
  const double dt = small.step.dt;
  const auto jac = ps.density_jacobian(prev, x, w, dt);
  const double fd = linalg::check_jacobian<double>(
      [&](const Vec& y) { return ps.density_residual(prev, y, w, dt); }, jac, x, 1e-6);

  const bool ok = worst_iters <= 10 && worst_res <= 1e-10 && fd <= 1e-5;
  return {ok, fmt("%d steps (%d substeps), max %d Newton iterations, max residual %.3g, FD discrepancy %.3g",
                  steps, substeps, worst_iters, worst_res, fd)};
}

Verdict gmres_oracle() {
  const int n = 16, N = n * n;
  const double h = 1.0 / (n + 1);
  std::vector<Eigen::Triplet<double>> t;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int r = i + n * j;
      t.emplace_back(r, r, 4.0 / (h * h));
      if (i > 0) t.emplace_back(r, r - 1, -1.0 / (h * h));
      if (i < n - 1) t.emplace_back(r, r + 1, -1.0 / (h * h));
      if (j > 0) t.emplace_back(r, r - n, -1.0 / (h * h));
      if (j < n - 1) t.emplace_back(r, r + n, -1.0 / (h * h));
    }
  linalg::SparseMatrix<double> a(N, N);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  Vec b(N);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      b[i + n * j] = std::sin(kPi * (i + 1) * h) * std::sin(2 * kPi * (j + 1) * h) + 0.1 * (i - j);
  const Vec exact = linalg::dense_solve(a, b);
  Vec x = Vec::Zero(N);
  linalg::KrylovConfig cfg;
  cfg.rtol = 1e-12;
  const linalg::KrylovStats st = linalg::gmres<double>(a, b, x, cfg);
  const double e = (x - exact).lpNorm<Eigen::Infinity>();
  return {st.converged && e <= 1e-8, fmt("max error %.3g after %d iterations", e, st.iterations)};
}

Verdict stationary_fixed_point() {
  RunConfig cfg = preset("example3");
  cfg.grid.nx = cfg.grid.ny = 32;
  cfg.model.chemo1.coefficient = cfg.model.chemo2.coefficient = 0.0;
  cfg.initial.perturbation = 0.0;
  const Mesh mesh(cfg.grid);
  const MacroSolver solver(mesh, cfg.model, cfg.step);
  const auto star = stationary_state(cfg.model);
  MacroState s = prepared(solver, initial_state(mesh, cfg));
  for (int k = 0; k < 100; ++k) {
    StepOutcome o = solver.step(s);
    if (!o.accepted) return {false, o.message};
    s = std::move(o.state);
  }
  const double d = std::max((s.n1.array() - star.n1).abs().maxCoeff(), (s.n2.array() - star.n2).abs().maxCoeff());
  return {d <= 1e-8, fmt("max deviation %.3g from (%.6g, %.6g)", d, star.n1, star.n2)};
}

Verdict pattern_onset() {
  const Clock clock;
  const RunConfig cfg = preset("example3");
  const Mesh mesh(cfg.grid);
  const MacroSolver solver(mesh, cfg.model, cfg.step);
  const MacroState init = initial_state(mesh, cfg);
  const double v0 = variance(init.n2);
  RunResult r;
  try {
    r = run(solver, init, RunControl{cfg.t_end, {}});
  } catch (const StepFailure& e) {
    return {false, e.what()};
  }
  const double v1 = variance(r.final_state.n2), t = clock.seconds();
  return {v1 >= 10.0 * v0 && t < 300.0,
          fmt("var(n2) %.3g -> %.3g (x%.3g) by t=%.3g, %.1f s", v0, v1, v1 / v0, r.final_state.t, t)};
}

Verdict kinetic_limit() {
  const Clock clock;
  const KineticSetup base = diffusion_limit_setup();
  const auto rows = convergence_study({0.4, 0.2, 0.1}, base);
  bool ok = true;
  std::ostringstream os;
  for (const auto& row : rows) {
    os << "eps=" << row.eps << " err=" << row.error;
    if (std::isfinite(row.ratio)) {
      os << " ratio=" << row.ratio;
      ok = ok && row.ratio >= 1.5 && row.ratio <= 2.5;
    }
    os << "; ";
  }
  const auto ap = convergence_study({1e-6}, base);
  const bool stable = std::isfinite(ap[0].error) && ap[0].error <= 1e-4;
  os << "eps=1e-6 err=" << ap[0].error << " at dt=" << base.dt;
  const double t = clock.seconds();
  os << ", " << fmt("%.1f s", t);
  return {ok && stable && t < 60.0, os.str()};
}

struct ChannelTrace {
  double max_div = 0.0;
  double worst_excess = -std::numeric_limits<double>::infinity();  // max (ΔKE - 1.1 W)
  int excess_steps = 0;
  double slope = 0.0;  // least-squares trend of vertical momentum in time
  double mom_first = 0.0, mom_last = 0.0;
  int steps = 0;
  std::string failure;
};

ChannelTrace run_channel(const std::string& name) {
  const RunConfig cfg = preset(name);
  const Mesh mesh(cfg.grid);
  FluidConfig fc = cfg.fluid;
  fc.dt = cfg.step.dt;
  const FluidSolver fluid(mesh, cfg.model, fc);
  const MacroSolver macro(mesh, cfg.model, cfg.step);
  FluidState fs = fluid.initial_state();
  MacroState ms = initial_state(mesh, cfg);
  {
    const FaceVelocity vel = fs.velocity();
    const ChemicalFields w = macro.solve_chemicals(ms.n1, ms.n2, &vel, &ms);
    ms.w1 = w.w1;
    ms.w2 = w.w2;
  }
  ChannelTrace tr;
  const double dt = cfg.step.dt;
  const int steps = static_cast<int>(std::lround(cfg.t_end / dt));
  double ke = fluid.kinetic_energy(fs);
  double st = 0, sm = 0, stt = 0, stm = 0;
  tr.mom_first = fluid.vertical_momentum(fs);
  for (int k = 0; k < steps; ++k) {
    CoupledOutcome o = coupled_step(fluid, macro, fs, ms);
    if (!o.macro.accepted) {
      tr.failure = "step " + std::to_string(k) + ": " + o.macro.message;
      return tr;
    }
    tr.max_div = std::max(tr.max_div, o.monitor.max_divergence);
    const double excess = (o.monitor.kinetic_energy - ke) - 1.1 * o.monitor.work_bound;
    tr.worst_excess = std::max(tr.worst_excess, excess);
    if (excess > 0.0) ++tr.excess_steps;
    ke = o.monitor.kinetic_energy;
    const double t = (k + 1) * dt, m = o.monitor.vertical_momentum;
    st += t;
    sm += m;
    stt += t * t;
    stm += t * m;
    tr.mom_last = m;
    fs = std::move(o.fluid);
    ms = std::move(o.macro.state);
    ++tr.steps;
  }
  const double n = tr.steps;
  tr.slope = (n * stm - st * sm) / (n * stt - st * st);
  return tr;
}

Verdict fluid_projection() {
  const ChannelTrace a = run_channel("test1"), b = run_channel("test2");
  if (!a.failure.empty()) return {false, "test1 " + a.failure};
  if (!b.failure.empty()) return {false, "test2 " + b.failure};
  const double div = std::max(a.max_div, b.max_div);
  const bool energy = a.excess_steps == 0 && b.excess_steps == 0;
  const bool trend = (a.slope > 0) != (b.slope > 0) && a.slope != 0.0 && b.slope != 0.0;
  return {div <= 1e-8 && energy && trend,
          fmt("max div %.3g; energy excess steps %d/%d (worst %.3g, %.3g); vertical momentum slope "
              "test1 %.3g (%.3g -> %.3g), test2 %.3g (%.3g -> %.3g)",
              div, a.excess_steps, b.excess_steps, a.worst_excess, b.worst_excess, a.slope, a.mom_first,
              a.mom_last, b.slope, b.mom_first, b.mom_last)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Largest relative difference between numeric CSV snapshot files of two runs.
double csv_difference(const fs::path& a, const fs::path& b) {
  const SnapshotRecord x = read_snapshot_csv(a), y = read_snapshot_csv(b);
  if (x.values.size() != y.values.size()) return std::numeric_limits<double>::infinity();
  double scale = 0.0, diff = 0.0;
  for (std::size_t k = 0; k < x.values.size(); ++k) {
    scale = std::max(scale, std::abs(x.values[k]));
    diff = std::max(diff, std::abs(x.values[k] - y.values[k]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "chemoflow_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream log, os;
  bool ok = true;
  double worst_threaded = 0.0;
  int files = 0;
  for (const std::string& name : preset_names()) {
    RunConfig cfg = preset(name);
    const bool channel = cfg.fluid_enabled;
    cfg.grid.nx = channel ? 64 : 32;
    cfg.grid.ny = channel ? 32 : 32;
    cfg.t_end = 10 * cfg.step.dt;
    cfg.seed = 17;
    cfg.output.snapshot_times = {5 * cfg.step.dt, cfg.t_end};
    auto launch = [&](const std::string& tag, int threads) {
      RunConfig c = cfg;
      c.threads = threads;
      c.output.out_dir = (root / name / tag).string();
      execute_run(c, log);
      return fs::path(c.output.out_dir);
    };
    const fs::path a = launch("a", 1), b = launch("b", 1), p = launch("threads", 4);
    for (const auto& e : fs::directory_iterator(a)) {
      const std::string file = e.path().filename().string();
      if (file == "metadata.json") continue;
      ++files;
      if (slurp(e.path()) != slurp(b / file)) {
        ok = false;
        os << name << "/" << file << " differs between serial runs; ";
      }
      if (file != "diagnostics.csv") {
        const double d = csv_difference(e.path(), p / file);
        worst_threaded = std::max(worst_threaded, d);
      }
    }
  }
  set_thread_count(1);
  ok = ok && worst_threaded <= 1e-12;
  os << files << " serial files compared bitwise, max threaded relative difference " << worst_threaded;
  return {ok, os.str()};
}

struct Criterion {
  const char* name;
  std::function<Verdict()> check;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"mass conservation", mass_conservation},
      {"nonnegativity", nonnegativity},
      {"mass inequality", mass_inequality},
      {"chemical convergence", chemical_convergence},
      {"newton quality", newton_quality},
      {"gmres oracle", gmres_oracle},
      {"stationary fixed point", stationary_fixed_point},
      {"pattern onset", pattern_onset},
      {"kinetic diffusion limit", kinetic_limit},
      {"fluid projection", fluid_projection},
      {"determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int k = 1; k < argc; ++k) ids.push_back(std::stoi(argv[k]));
  if (ids.empty())
    for (int k = 1; k <= static_cast<int>(criteria().size()); ++k) ids.push_back(k);
  int failures = 0;
  for (int id : ids) {
    if (id < 1 || id > static_cast<int>(criteria().size())) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    const Criterion& c = criteria()[id - 1];
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " " << c.name << ": " << v.detail
              << std::endl;
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
