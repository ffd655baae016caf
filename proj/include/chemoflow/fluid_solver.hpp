#pragma once

#include <Eigen/Core>
#include <vector>

#include "chemoflow/linalg.hpp"
#include "chemoflow/macro_solver.hpp"
#include "chemoflow/mesh.hpp"
#include "chemoflow/model.hpp"

namespace chemoflow {

/// Staggered velocities and cell pressure. u: (nx+1) x ny on x-faces,
/// v: nx x (ny+1) on y-faces, p: nx x ny.
struct FluidState {
  Eigen::ArrayXXd u;
  Eigen::ArrayXXd v;
  Eigen::ArrayXXd p;
  double t = 0.0;

  static FluidState zeros(int nx, int ny);
  FaceVelocity velocity() const { return {u, v}; }
};

struct FluidConfig {
  double dt = 1e-2;
  /// Peak factor of the inlet profile u = scale * 2 ŷ(1 - ŷ).
  double inflow_scale = 1.0;
  linalg::KrylovConfig poisson{1e-12, 500, 30, linalg::PreconditionerKind::Lu};
  linalg::KrylovConfig viscous{1e-12, 500, 30, linalg::PreconditionerKind::Lu};

  void validate() const;
};

/// Energy bookkeeping of one fluid step.
struct FluidMonitor {
  double kinetic_energy = 0.0;
  double max_divergence = 0.0;
  double vertical_momentum = 0.0;
  double work_bound = 0.0;  // inflow + forcing work available over the step
  int poisson_iterations = 0;
};

/// Projection method for the incompressible momentum equation on the channel
/// geometry of the mesh: slip walls on Γ1/Γ3, parabolic inflow on Γ4,
/// zero-gradient outflow on Γ2, no-slip obstacles.
class FluidSolver {
 public:
  FluidSolver(const Mesh& mesh, const ModelParams& params, FluidConfig cfg);

  const Mesh& mesh() const { return *mesh_; }
  const FluidConfig& config() const { return cfg_; }

  double inflow_profile(double y) const;

  /// The inlet profile carried across the channel, then projected.
  FluidState initial_state() const;

  /// Sets all prescribed face values; the outlet copies its upstream column and
  /// is shifted uniformly so total outflow equals total inflow.
  void apply_bcs(FluidState& s) const;

  FluidState advect_velocity(const FluidState& s, double dt) const;
  /// Implicit viscosity with the buoyancy force -Q(n1, n2)∇φ; n1, n2 use the
  /// fluid numbering of the mesh.
  FluidState diffuse_and_force(const FluidState& s, const Eigen::VectorXd& n1, const Eigen::VectorXd& n2,
                               double dt) const;
  FluidState project(const FluidState& s, double dt, linalg::KrylovStats* stats = nullptr) const;

  /// advect -> diffuse and force -> boundary data -> project.
  FluidState step(const FluidState& s, const Eigen::VectorXd& n1, const Eigen::VectorXd& n2,
                  FluidMonitor* monitor = nullptr) const;

  /// Cell divergence, zero on solid cells.
  Eigen::ArrayXXd divergence(const FluidState& s) const;
  double max_divergence(const FluidState& s) const;
  double kinetic_energy(const FluidState& s) const;
  double vertical_momentum(const FluidState& s) const;
  /// dt times (kinetic-energy flux through the inlet plus |forcing power|).
  double work_bound(const FluidState& s, const Eigen::VectorXd& n1, const Eigen::VectorXd& n2, double dt) const;

  /// Cell-centered speed |U| on the full grid.
  Eigen::ArrayXXd speed(const FluidState& s) const;

 private:
  enum class Kind : std::uint8_t { Unknown, Zero, Inlet, Outlet, Wall };
  bool fluid(int i, int j) const;
  Kind u_kind(int i, int j) const;
  Kind v_kind(int i, int j) const;
  double interp_u(double x, double y, const Eigen::ArrayXXd& u) const;
  double interp_v(double x, double y, const Eigen::ArrayXXd& v) const;
  double cell_q(int i, int j, const Eigen::VectorXd& n1, const Eigen::VectorXd& n2) const;
  linalg::SparseMatrix<double> viscous_matrix(bool u_component, double dt) const;

  const Mesh* mesh_;
  ModelParams params_;
  FluidConfig cfg_;
  std::vector<int> u_index_, v_index_;  // unknown numbering, -1 when prescribed
  std::vector<std::pair<int, int>> u_faces_, v_faces_;
  linalg::SparseMatrix<double> poisson_;
  linalg::Preconditioner<double> poisson_pre_;
  linalg::SparseMatrix<double> visc_u_, visc_v_;
  linalg::Preconditioner<double> visc_u_pre_, visc_v_pre_;
};

struct CoupledOutcome {
  FluidState fluid;
  StepOutcome macro;
  FluidMonitor monitor;
};

/// One split step: fluid with the current densities, then chemicals and
/// densities advected by the new velocity.
CoupledOutcome coupled_step(const FluidSolver& fluid, const MacroSolver& macro, const FluidState& fs,
                            const MacroState& ms);

}  // namespace chemoflow
