#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "chemoflow/linalg.hpp"
#include "chemoflow/mesh.hpp"
#include "chemoflow/model.hpp"

namespace chemoflow {

/// Cell-centered fields on the fluid cells of a mesh (dense fluid numbering).
struct MacroState {
  Eigen::VectorXd n1, n2;  // predator, prey
  Eigen::VectorXd w1, w2;  // signal emitted by n2, by n1
  double t = 0.0;

  static MacroState zeros(int fluid_cells);
  bool all_finite() const;
};

enum class ReactionMode { Implicit, Explicit };

struct StepConfig {
  double dt = 1e-3;
  linalg::NewtonConfig newton;
  linalg::KrylovConfig krylov;           // Newton inner solves
  linalg::KrylovConfig chemical_krylov;  // elliptic chemical solves
  ReactionMode reaction = ReactionMode::Implicit;
  /// Homogeneous Dirichlet densities on obstacle faces (fluid-coupled runs).
  bool obstacle_dirichlet = false;
  /// Debug only: discretize the chemical flux sum with the opposite sign (+Δw).
  bool literal_chemical_sign = false;
  int max_dt_halvings = 4;

  void validate() const;
};

/// Interface density min(max(0, nK), max(0, nL)) fed to the chemotactic law.
double face_value(double nk, double nl);

struct FaceValue {
  double value;
  double d_first;   // ∂/∂nK
  double d_second;  // ∂/∂nL
};
/// face_value with the subgradient where the left argument wins ties.
FaceValue face_value_with_derivative(double nk, double nl);

struct ChemicalFields {
  Eigen::VectorXd w1, w2;
  linalg::KrylovStats stats1, stats2;
  bool ok() const { return stats1.converged && stats2.converged; }
};

struct StepOutcome {
  MacroState state;
  bool accepted = false;
  int substeps = 0;
  int newton_iterations = 0;       // summed over substeps
  int max_newton_iterations = 0;   // worst single substep
  int gmres_iterations = 0;        // Newton inner + chemical solves
  double max_final_residual = 0.0; // worst converged ‖F‖∞ over substeps
  std::string message;
};

/// Implicit finite-volume stepper: lagged elliptic chemical solves followed by a
/// Newton solve for the two densities.
class MacroSolver {
 public:
  MacroSolver(const Mesh& mesh, const ModelParams& params, StepConfig cfg);

  const Mesh& mesh() const { return *mesh_; }
  const ModelParams& params() const { return params_; }
  const StepConfig& config() const { return cfg_; }
  int unknowns() const { return 2 * mesh_->fluid_count(); }

  /// Solves -Δw1 + α1 w1 = β1 n2 and -Δw2 + α2 w2 = β2 n1 (plus upwind U·∇w when a
  /// velocity is given) with no-flux boundaries. `warm` seeds GMRES if given.
  ChemicalFields solve_chemicals(const Eigen::VectorXd& n1_prev, const Eigen::VectorXd& n2_prev,
                                 const FaceVelocity* velocity = nullptr, const MacroState* warm = nullptr) const;

  /// Residual of the density equations for the blocked unknown [n1; n2].
  Eigen::VectorXd density_residual(const MacroState& prev, const Eigen::VectorXd& guess, const ChemicalFields& w,
                                   double dt, const FaceVelocity* velocity = nullptr) const;
  linalg::SparseMatrix<double> density_jacobian(const MacroState& prev, const Eigen::VectorXd& guess,
                                                const ChemicalFields& w, double dt,
                                                const FaceVelocity* velocity = nullptr) const;

  /// One attempt at dt without retries.
  StepOutcome try_step(const MacroState& state, double dt, const FaceVelocity* velocity = nullptr) const;
  /// Advances by cfg.dt; a failed Newton solve is retried as two half steps,
  /// recursively, at most max_dt_halvings levels deep.
  StepOutcome step(const MacroState& state, const FaceVelocity* velocity = nullptr) const;
  StepOutcome step(const MacroState& state, double dt, const FaceVelocity* velocity) const;

 private:
  linalg::SparseMatrix<double> chemical_matrix(double alpha, const FaceVelocity* velocity) const;
  StepOutcome advance(const MacroState& state, double dt, const FaceVelocity* velocity, int depth) const;

  const Mesh* mesh_;
  ModelParams params_;
  StepConfig cfg_;
  linalg::SparseMatrix<double> jac_pattern_;
  linalg::SparseMatrix<double> still_chem1_, still_chem2_;
  linalg::Preconditioner<double> still_pre1_, still_pre2_;
};

struct Diagnostics {
  double t = 0.0;
  double dt = 0.0;
  std::array<double, 2> mass{};
  std::array<double, 2> min{};
  std::array<double, 2> max{};
  std::array<double, 2> l2{};
  int newton_iterations = 0;
  int gmres_iterations = 0;
  double residual = 0.0;
};

/// Total mass Σ|K| n_i, extrema and L² norms of both densities.
Diagnostics diagnostics(const Mesh& mesh, const MacroState& state);

struct RunControl {
  double t_end = 0.0;
  std::vector<double> snapshot_times;  // emitted when reached, sorted ascending
};

struct RunResult {
  MacroState final_state;
  std::vector<Diagnostics> series;  // one record per accepted step
};

using SnapshotSink = std::function<void(const MacroState&)>;

/// Steps from `init` to t_end, landing exactly on each snapshot time. The
/// chemicals of the initial state are solved before the first step.
RunResult run(const MacroSolver& solver, MacroState init, const RunControl& control,
              const SnapshotSink& sink = {}, const FaceVelocity* velocity = nullptr);

class StepFailure : public std::runtime_error {
 public:
  StepFailure(double t, const std::string& what) : std::runtime_error(what), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace chemoflow
