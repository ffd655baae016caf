#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "chemoflow/model.hpp"

namespace chemoflow {

/// Relaxation rates, speed and scaling of the two-velocity kinetic model.
struct KineticParams {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double r = 1.0;    // V = {-r, +r}
  double eps = 1.0;

  void validate() const;
};

/// Velocities of V = {-r, +r}, in that order.
inline std::array<double, 2> velocity_set(double r) { return {-r, r}; }

/// Equilibrium M(v) = 1/|V| for the counting measure on V, ordered as velocity_set.
std::array<double, 2> equilibrium_weight(double r);

/// D = r² / (d σ).
double limit_diffusion_coefficient(double r, double sigma, int dim = 1);
inline double limit_diffusion_coefficient(const KineticParams& p, int species = 1, int dim = 1) {
  return limit_diffusion_coefficient(p.r, species == 1 ? p.sigma1 : p.sigma2, dim);
}

/// Periodic 1D grid: n at cell centers x_i = (i + ½) dx, g at interfaces
/// x_{i+½}, column 0 for v = -r and column 1 for v = +r.
struct KineticState {
  Eigen::VectorXd n1, n2;
  Eigen::ArrayX2d g1, g2;
  Eigen::VectorXd w1, w2;
  double t = 0.0;
};

/// Initial data. `dev(x)` is f(x, +r) - M n(x); the -r value is its negative.
struct KineticProfile {
  std::function<double(double)> n1;
  std::function<double(double)> n2;
  std::function<double(double)> dev1;
  std::function<double(double)> dev2;
};

struct KineticSetup {
  int cells = 200;
  double length = 1.0;
  double dt = 5e-4;
  double t_end = 0.25;
  ModelParams model;  // reactions, chemotaxis, chemical coefficients
  KineticParams kinetic;
  KineticProfile initial;

  void validate() const;
};

/// Largest dt allowed by the explicit transport part, +inf when unconstrained.
double kinetic_dt_limit(const KineticParams& p, double dx);

class KineticSolver {
 public:
  explicit KineticSolver(KineticSetup setup);

  const KineticSetup& setup() const { return setup_; }
  double dx() const { return dx_; }

  KineticState initial_state() const;
  /// Periodic -w'' + α w = β n for both signals.
  void solve_chemicals(KineticState& s) const;
  /// One asymptotic-preserving step; throws std::domain_error on a CFL violation.
  KineticState step(const KineticState& s, double dt) const;
  KineticState run(double t_end) const;

 private:
  KineticSetup setup_;
  double dx_;
};

/// f = M n + ε g per velocity, on interfaces with n averaged from the two cells.
Eigen::ArrayX2d reconstruct(const Eigen::VectorXd& n, const Eigen::ArrayX2d& g, double r, double eps);

/// Velocity moment ⟨g⟩ per interface.
Eigen::ArrayXd velocity_average(const Eigen::ArrayX2d& g);

/// Chemotactic source (σ / (r²|V|)) v χ(n) ∂x w at the interfaces.
Eigen::ArrayX2d chemotaxis_source(const Eigen::VectorXd& n, const Eigen::VectorXd& w, const ChemoLaw& law,
                                  double sigma, double r, double dx);

/// Macro analogue: implicit diffusion with D = r²/σ, explicit chemotaxis and
/// reaction, on the same periodic grid.
struct MacroProfile1D {
  Eigen::VectorXd n1, n2;
};
MacroProfile1D macro_reference_1d(const KineticSetup& setup, double t_end);

struct ConvergenceRow {
  double eps;
  double error;  // ‖n_kinetic - n_macro‖_L¹ summed over species
  double ratio;  // E(previous ε) / E(ε), NaN on the first row
};

std::vector<ConvergenceRow> convergence_study(const std::vector<double>& eps_list, const KineticSetup& base);

/// Columns eps, error, ratio.
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows);

/// Pure diffusion limit configuration used by the study: r = 1, σ = 10,
/// 200 cells on [0, 1], T = 0.25, dt = 5e-4, cosine density with an
/// off-equilibrium sine flux.
KineticSetup diffusion_limit_setup();

}  // namespace chemoflow
