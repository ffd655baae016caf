#include <cmath>

#include "chemoflow/config.hpp"
#include "chemoflow/rng.hpp"

namespace chemoflow {

namespace {

StepConfig default_step(double dt) {
  StepConfig s;
  s.dt = dt;
  s.krylov.preconditioner = linalg::PreconditionerKind::Ilut;
  s.chemical_krylov.preconditioner = linalg::PreconditionerKind::Lu;
  return s;
}

ModelParams example1_model() {
  ModelParams p;
  p.a1 = 10.0;
  p.a2 = 0.1;
  p.b1 = p.b2 = 2.0;
  p.c1 = 0.4;
  p.c2 = 0.01;
  p.d1 = p.d2 = 1.0;
  p.alpha1 = p.alpha2 = 1.0;
  p.beta1 = 20.0;
  p.beta2 = 100.0;
  p.chemo1 = {ChemoLaw::Kind::Linear, 2.0};
  p.chemo2 = {ChemoLaw::Kind::Linear, -0.8};
  p.f2_coupling_sign = 1;
  return p;
}

void example3_kinetics(ModelParams& p) {
  p.a1 = 0.61;
  p.a2 = 0.52;
  p.b1 = 0.4575;
  p.b2 = 0.31;
  p.c1 = 9.5;
  p.c2 = 8.2;
  p.f2_coupling_sign = -1;
}

RunConfig unit_square(int n) {
  RunConfig c;
  c.grid.nx = c.grid.ny = n;
  c.grid.lx = c.grid.ly = 1.0;
  return c;
}

RunConfig example1() {
  RunConfig c = unit_square(256);
  c.preset = "example1";
  c.model = example1_model();
  c.step = default_step(1e-3);
  c.t_end = 0.15;
  c.initial.kind = InitialCondition::Kind::Pockets;
  c.initial.pockets = {
      {{0.3, 0.3}, 0.06, 1.0, 0.0},
      {{0.7, 0.7}, 0.06, 1.0, 0.0},
      {{0.3, 0.7}, 0.06, 0.0, 1.0},
      {{0.7, 0.3}, 0.06, 0.0, 1.0},
  };
  c.output.snapshot_times = {0.01, 0.05, 0.075, 0.15};
  return c;
}

RunConfig example2() {
  RunConfig c = example1();
  c.preset = "example2";
  c.model.chemo2.coefficient = 0.0;
  c.t_end = 0.5;
  c.initial.pockets = {{{0.5, 0.5}, 0.08, 1.0, 1.0}};
  c.output.snapshot_times = {0.0, 0.05, 0.1, 0.5};
  return c;
}

RunConfig example3() {
  RunConfig c = unit_square(128);
  c.preset = "example3";
  c.model = example1_model();
  example3_kinetics(c.model);
  c.step = default_step(1e-4);
  c.t_end = 0.01;
  c.initial.kind = InitialCondition::Kind::Stationary;
  c.initial.perturbation = 1e-3;
  c.output.snapshot_times = {0.001, 0.005, 0.01};
  return c;
}

RunConfig channel(const std::string& name, double gy) {
  RunConfig c;
  c.preset = name;
  c.grid.nx = 128;
  c.grid.ny = 64;
  c.grid.lx = 10.0;
  c.grid.ly = 4.0;
  c.grid.obstacles = {Obstacle::rectangle({2.0, 0.8}, {3.0, 2.0}, BoundaryTag::Obstacle1),
                      Obstacle::rectangle({5.5, 2.0}, {6.5, 3.2}, BoundaryTag::Obstacle2)};
  ModelParams& p = c.model;
  example3_kinetics(p);
  p.d1 = p.d2 = 0.05;
  p.alpha1 = p.alpha2 = 1.0;
  p.beta1 = p.beta2 = 1.0;
  p.chemo1 = {ChemoLaw::Kind::Linear, 0.5};
  p.chemo2 = {ChemoLaw::Kind::Linear, -0.2};
  p.nu = 0.05;
  p.k_conv = 1.0;
  p.grad_phi = Eigen::Vector2d(0.0, gy);
  c.step = default_step(0.02);
  c.step.obstacle_dirichlet = true;
  c.fluid_enabled = true;
  c.fluid.dt = c.step.dt;
  c.t_end = 15.0;
  c.initial.kind = InitialCondition::Kind::Pockets;
  c.initial.pockets = {{{1.0, 1.2}, 0.4, 1.0, 0.0}, {{1.0, 2.8}, 0.4, 0.0, 1.0}};
  c.output.fields = {"n1", "n2", "w1", "w2", "speed", "p"};
  return c;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"example1", "example2", "example3", "test1", "test2"};
  return names;
}

RunConfig preset(const std::string& name) {
  if (name == "example1") return example1();
  if (name == "example2") return example2();
  if (name == "example3") return example3();
  if (name == "test1") {
    RunConfig c = channel("test1", 0.0);
    c.output.snapshot_times = {5.0, 7.0, 10.0, 15.0};
    return c;
  }
  if (name == "test2") {
    RunConfig c = channel("test2", -1.0);
    c.output.snapshot_times = {3.0, 5.0, 7.0, 15.0};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

MacroState initial_state(const Mesh& mesh, const RunConfig& cfg) {
  const int n = mesh.fluid_count();
  MacroState s = MacroState::zeros(n);
  const InitialCondition& ic = cfg.initial;
  switch (ic.kind) {
    case InitialCondition::Kind::Uniform:
      s.n1.setConstant(ic.background1);
      s.n2.setConstant(ic.background2);
      break;
    case InitialCondition::Kind::Pockets:
      for (int k = 0; k < n; ++k) {
        const Vec2 x = mesh.center(mesh.fluid_cell(k));
        double v1 = ic.background1, v2 = ic.background2;
        for (const Pocket& p : ic.pockets) {
          const double g = std::exp(-(x - p.center).squaredNorm() / (p.radius * p.radius));
          v1 += p.amplitude1 * g;
          v2 += p.amplitude2 * g;
        }
        s.n1[k] = v1;
        s.n2[k] = v2;
      }
      break;
    case InitialCondition::Kind::Stationary: {
      const auto star = stationary_state(cfg.model);
      // Counter k = s * N + c over species s and full-grid cell c.
      const auto total = static_cast<std::uint64_t>(mesh.cell_count());
      for (int k = 0; k < n; ++k) {
        const auto c = static_cast<std::uint64_t>(mesh.linear(mesh.fluid_cell(k)));
        s.n1[k] = star.n1 + ic.perturbation * SplitMix64::uniform_at(cfg.seed, c);
        s.n2[k] = star.n2 + ic.perturbation * SplitMix64::uniform_at(cfg.seed, total + c);
      }
      break;
    }
  }
  return s;
}

KineticSetup kinetic_setup(const RunConfig& cfg) {
  KineticSetup s = diffusion_limit_setup();
  const KineticStudyConfig& k = cfg.kinetic;
  s.cells = k.cells;
  s.length = k.length;
  s.dt = k.dt;
  s.t_end = k.t_end;
  s.kinetic.r = k.r;
  s.kinetic.sigma1 = k.sigma1;
  s.kinetic.sigma2 = k.sigma2;
  const double L = k.length, tau = 2.0 * std::acos(-1.0) / L;
  s.initial.n1 = [tau](double x) { return 1.0 + 0.5 * std::cos(tau * x); };
  s.initial.n2 = s.initial.n1;
  s.initial.dev1 = [tau](double x) { return 0.25 * std::sin(tau * x); };
  s.initial.dev2 = s.initial.dev1;
  return s;
}

}  // namespace chemoflow
