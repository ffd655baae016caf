#include "chemoflow/macro_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chemoflow/parallel.hpp"

namespace chemoflow {

using Vec = Eigen::VectorXd;
using Csr = linalg::SparseMatrix<double>;

MacroState MacroState::zeros(int fluid_cells) {
  MacroState s;
  s.n1 = Vec::Zero(fluid_cells);
  s.n2 = Vec::Zero(fluid_cells);
  s.w1 = Vec::Zero(fluid_cells);
  s.w2 = Vec::Zero(fluid_cells);
  return s;
}

bool MacroState::all_finite() const {
  return n1.allFinite() && n2.allFinite() && w1.allFinite() && w2.allFinite() && std::isfinite(t);
}

void StepConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step: dt must be > 0");
  if (max_dt_halvings < 0) throw std::invalid_argument("step: max_dt_halvings must be >= 0");
  newton.validate();
  krylov.validate();
  chemical_krylov.validate();
}

double face_value(double nk, double nl) { return std::min(std::max(0.0, nk), std::max(0.0, nl)); }

FaceValue face_value_with_derivative(double nk, double nl) {
  const double pk = std::max(0.0, nk);
  const double pl = std::max(0.0, nl);
  if (pk <= pl) return {pk, nk > 0.0 ? 1.0 : 0.0, 0.0};
  return {pl, 0.0, nl > 0.0 ? 1.0 : 0.0};
}

namespace {

// Index of the stored entry (row, col); the pattern guarantees it exists.
int slot(const Csr& a, int row, int col) {
  const int* inner = a.innerIndexPtr();
  const int b = a.outerIndexPtr()[row];
  const int e = a.outerIndexPtr()[row + 1];
  const int* hit = std::lower_bound(inner + b, inner + e, col);
  return static_cast<int>(hit - inner);
}

struct Neighborhood {
  int other;       // fluid index across the face, -1 on the boundary
  bool owner_side; // k is the stored owner of the face
  double tau;
  double u_out;    // outward velocity from k
};

Neighborhood look(const Mesh& mesh, const Face& f, int k, const FaceVelocity* vel) {
  Neighborhood nb;
  nb.owner_side = f.owner_fluid == k;
  nb.other = f.is_boundary() ? -1 : (nb.owner_side ? f.neighbor_fluid : f.owner_fluid);
  nb.tau = f.transmissibility();
  nb.u_out = 0.0;
  if (vel) {
    const double u = outward_velocity(*vel, f);
    nb.u_out = nb.owner_side ? u : -u;
  }
  (void)mesh;
  return nb;
}

}  // namespace

MacroSolver::MacroSolver(const Mesh& mesh, const ModelParams& params, StepConfig cfg)
    : mesh_(&mesh), params_(params), cfg_(std::move(cfg)) {
  params_.validate();
  cfg_.validate();

  const int n = mesh.fluid_count();
  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 12);
  for (int k = 0; k < n; ++k) {
    for (int s = 0; s < 2; ++s) {
      const int row = s * n + k;
      trip.emplace_back(row, row, 0.0);
      trip.emplace_back(row, (1 - s) * n + k, 0.0);
      for (int fi : mesh.cell_faces(k)) {
        const Face& f = mesh.faces()[fi];
        if (f.is_boundary()) continue;
        const int other = f.owner_fluid == k ? f.neighbor_fluid : f.owner_fluid;
        trip.emplace_back(row, s * n + other, 0.0);
      }
    }
  }
  jac_pattern_.resize(2 * n, 2 * n);
  jac_pattern_.setFromTriplets(trip.begin(), trip.end());
  jac_pattern_.makeCompressed();

  still_chem1_ = chemical_matrix(params_.alpha1, nullptr);
  still_chem2_ = chemical_matrix(params_.alpha2, nullptr);
  still_pre1_ = linalg::Preconditioner<double>::make(cfg_.chemical_krylov.preconditioner, still_chem1_);
  still_pre2_ = linalg::Preconditioner<double>::make(cfg_.chemical_krylov.preconditioner, still_chem2_);
}

Csr MacroSolver::chemical_matrix(double alpha, const FaceVelocity* velocity) const {
  const Mesh& mesh = *mesh_;
  const int n = mesh.fluid_count();
  const double area = mesh.cell_measure();
  const double sign = cfg_.literal_chemical_sign ? -1.0 : 1.0;
  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  for (int k = 0; k < n; ++k) {
    double diag = alpha * area;
    for (int fi : mesh.cell_faces(k)) {
      const Face& f = mesh.faces()[fi];
      if (f.is_boundary()) continue;
      const Neighborhood nb = look(mesh, f, k, velocity);
      diag += sign * nb.tau;
      double off = -sign * nb.tau;
      if (nb.u_out < 0.0) {
        // Advective-form upwind: inflow face carries (w_K - w_L).
        diag += f.measure * -nb.u_out;
        off -= f.measure * -nb.u_out;
      }
      trip.emplace_back(k, nb.other, off);
    }
    trip.emplace_back(k, k, diag);
  }
  Csr a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

ChemicalFields MacroSolver::solve_chemicals(const Vec& n1_prev, const Vec& n2_prev, const FaceVelocity* velocity,
                                            const MacroState* warm) const {
  const int n = mesh_->fluid_count();
  if (n1_prev.size() != n || n2_prev.size() != n)
    throw std::invalid_argument("solve_chemicals: field length differs from the fluid cell count");
  const double area = mesh_->cell_measure();
  ChemicalFields out;
  const Vec rhs1 = (params_.beta1 * area) * n2_prev;
  const Vec rhs2 = (params_.beta2 * area) * n1_prev;
  out.w1 = warm && warm->w1.size() == n ? warm->w1 : Vec::Zero(n);
  out.w2 = warm && warm->w2.size() == n ? warm->w2 : Vec::Zero(n);
  if (velocity) {
    const Csr a1 = chemical_matrix(params_.alpha1, velocity);
    const Csr a2 = chemical_matrix(params_.alpha2, velocity);
    const auto p1 = linalg::Preconditioner<double>::make(cfg_.chemical_krylov.preconditioner, a1);
    const auto p2 = linalg::Preconditioner<double>::make(cfg_.chemical_krylov.preconditioner, a2);
    out.stats1 = linalg::gmres(a1, rhs1, out.w1, cfg_.chemical_krylov, &p1);
    out.stats2 = linalg::gmres(a2, rhs2, out.w2, cfg_.chemical_krylov, &p2);
  } else {
    out.stats1 = linalg::gmres(still_chem1_, rhs1, out.w1, cfg_.chemical_krylov, &still_pre1_);
    out.stats2 = linalg::gmres(still_chem2_, rhs2, out.w2, cfg_.chemical_krylov, &still_pre2_);
  }
  return out;
}

Vec MacroSolver::density_residual(const MacroState& prev, const Vec& guess, const ChemicalFields& w, double dt,
                                  const FaceVelocity* velocity) const {
  const Mesh& mesh = *mesh_;
  const int n = mesh.fluid_count();
  if (guess.size() != 2 * n) throw std::invalid_argument("density_residual: guess must hold [n1; n2]");
  const double area = mesh.cell_measure();
  const bool implicit = cfg_.reaction == ReactionMode::Implicit;
  const double d[2] = {params_.d1, params_.d2};
  const ChemoLaw* law[2] = {&params_.chemo1, &params_.chemo2};
  const Vec* wf[2] = {&w.w1, &w.w2};
  const Vec* nprev[2] = {&prev.n1, &prev.n2};

  Vec r(2 * n);
  parallel_for(0, n, [&](int b, int e) {
    for (int k = b; k < e; ++k) {
      const double x1 = guess[k], x2 = guess[n + k];
      const Reaction<double> f =
          implicit ? reaction(x1, x2, params_) : reaction(prev.n1[k], prev.n2[k], params_);
      const double fs[2] = {f.f1, f.f2};
      for (int s = 0; s < 2; ++s) {
        const Vec& ww = *wf[s];
        const double nk = guess[s * n + k];
        double acc = area * (nk - (*nprev[s])[k]) / dt - area * fs[s];
        for (int fi : mesh.cell_faces(k)) {
          const Face& face = mesh.faces()[fi];
          const Neighborhood nb = look(mesh, face, k, velocity);
          if (nb.other < 0) {
            if (cfg_.obstacle_dirichlet && is_obstacle(face.tag)) acc += d[s] * nb.tau * nk;
            if (nb.u_out > 0.0) acc += face.measure * nb.u_out * nk;
            continue;
          }
          const double nl = guess[s * n + nb.other];
          const double fv = nb.owner_side ? face_value(nk, nl) : face_value(nl, nk);
          acc -= d[s] * nb.tau * (nl - nk);
          acc += nb.tau * chemo_sensitivity(fv, *law[s]) * (ww[nb.other] - ww[k]);
          acc += face.measure * (std::max(nb.u_out, 0.0) * nk - std::max(-nb.u_out, 0.0) * nl);
        }
        r[s * n + k] = acc;
      }
    }
  });
  return r;
}

Csr MacroSolver::density_jacobian(const MacroState& prev, const Vec& guess, const ChemicalFields& w, double dt,
                                  const FaceVelocity* velocity) const {
  (void)prev;
  const Mesh& mesh = *mesh_;
  const int n = mesh.fluid_count();
  if (guess.size() != 2 * n) throw std::invalid_argument("density_jacobian: guess must hold [n1; n2]");
  const double area = mesh.cell_measure();
  const bool implicit = cfg_.reaction == ReactionMode::Implicit;
  const double d[2] = {params_.d1, params_.d2};
  const ChemoLaw* law[2] = {&params_.chemo1, &params_.chemo2};
  const Vec* wf[2] = {&w.w1, &w.w2};

  Csr jac = jac_pattern_;
  double* val = jac.valuePtr();
  std::fill(val, val + jac.nonZeros(), 0.0);

  parallel_for(0, n, [&](int b, int e) {
    for (int k = b; k < e; ++k) {
      const Eigen::Matrix2d dj =
          implicit ? reaction_jacobian(guess[k], guess[n + k], params_) : Eigen::Matrix2d::Zero().eval();
      for (int s = 0; s < 2; ++s) {
        const int row = s * n + k;
        const Vec& ww = *wf[s];
        const double nk = guess[row];
        double diag = area / dt - area * dj(s, s);
        val[slot(jac, row, (1 - s) * n + k)] = -area * dj(s, 1 - s);
        for (int fi : mesh.cell_faces(k)) {
          const Face& face = mesh.faces()[fi];
          const Neighborhood nb = look(mesh, face, k, velocity);
          if (nb.other < 0) {
            if (cfg_.obstacle_dirichlet && is_obstacle(face.tag)) diag += d[s] * nb.tau;
            if (nb.u_out > 0.0) diag += face.measure * nb.u_out;
            continue;
          }
          const int col = s * n + nb.other;
          const double nl = guess[col];
          double dk, dl, fv;
          if (nb.owner_side) {
            const FaceValue v = face_value_with_derivative(nk, nl);
            fv = v.value, dk = v.d_first, dl = v.d_second;
          } else {
            const FaceValue v = face_value_with_derivative(nl, nk);
            fv = v.value, dk = v.d_second, dl = v.d_first;
          }
          const double chi_p = chemo_sensitivity_derivative(fv, *law[s]) * nb.tau * (ww[nb.other] - ww[k]);
          diag += d[s] * nb.tau + chi_p * dk + face.measure * std::max(nb.u_out, 0.0);
          val[slot(jac, row, col)] += -d[s] * nb.tau + chi_p * dl - face.measure * std::max(-nb.u_out, 0.0);
        }
        val[slot(jac, row, row)] = diag;
      }
    }
  });
  return jac;
}

StepOutcome MacroSolver::try_step(const MacroState& state, double dt, const FaceVelocity* velocity) const {
  StepOutcome out;
  out.substeps = 1;
  const int n = mesh_->fluid_count();
  const ChemicalFields w = solve_chemicals(state.n1, state.n2, velocity, &state);
  out.gmres_iterations = w.stats1.iterations + w.stats2.iterations;
  if (!w.ok()) {
    out.message = "chemical solve failed: " + (w.stats1.converged ? w.stats2.message : w.stats1.message);
    return out;
  }

  Vec x(2 * n);
  x << state.n1, state.n2;
  auto res = [&](const Vec& y) { return density_residual(state, y, w, dt, velocity); };
  auto jac = [&](const Vec& y) { return density_jacobian(state, y, w, dt, velocity); };
  const linalg::NewtonStats ns = linalg::newton<double>(res, jac, x, cfg_.newton, cfg_.krylov);
  out.newton_iterations = ns.iterations;
  out.max_newton_iterations = ns.iterations;
  out.gmres_iterations += ns.linear_iterations;
  if (!ns.converged()) {
    out.message = "newton: " + to_string(ns.status) + (ns.message.empty() ? "" : " (" + ns.message + ")");
    return out;
  }
  out.max_final_residual = ns.final_residual();
  out.state.n1 = x.head(n);
  out.state.n2 = x.tail(n);
  out.state.w1 = w.w1;
  out.state.w2 = w.w2;
  out.state.t = state.t + dt;
  out.accepted = true;
  return out;
}

StepOutcome MacroSolver::advance(const MacroState& state, double dt, const FaceVelocity* velocity, int depth) const {
  StepOutcome first = try_step(state, dt, velocity);
  if (first.accepted || depth >= cfg_.max_dt_halvings) return first;

  const double half = 0.5 * dt;
  StepOutcome a = advance(state, half, velocity, depth + 1);
  if (!a.accepted) return a;
  StepOutcome b = advance(a.state, half, velocity, depth + 1);
  if (b.accepted) b.state.t = state.t + dt;
  StepOutcome sum = b;
  sum.substeps = a.substeps + b.substeps;
  sum.newton_iterations = first.newton_iterations + a.newton_iterations + b.newton_iterations;
  sum.max_newton_iterations = std::max(a.max_newton_iterations, b.max_newton_iterations);
  sum.gmres_iterations = first.gmres_iterations + a.gmres_iterations + b.gmres_iterations;
  sum.max_final_residual = std::max(a.max_final_residual, b.max_final_residual);
  return sum;
}

StepOutcome MacroSolver::step(const MacroState& state, const FaceVelocity* velocity) const {
  return step(state, cfg_.dt, velocity);
}

StepOutcome MacroSolver::step(const MacroState& state, double dt, const FaceVelocity* velocity) const {
  if (!state.all_finite()) throw std::invalid_argument("step: state has non-finite entries");
  const int n = mesh_->fluid_count();
  if (state.n1.size() != n || state.n2.size() != n)
    throw std::invalid_argument("step: state length differs from the fluid cell count");
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be > 0");
  return advance(state, dt, velocity, 0);
}

Diagnostics diagnostics(const Mesh& mesh, const MacroState& state) {
  Diagnostics d;
  d.t = state.t;
  const double area = mesh.cell_measure();
  const Vec* f[2] = {&state.n1, &state.n2};
  for (int s = 0; s < 2; ++s) {
    const Vec& v = *f[s];
    if (v.size() == 0) continue;
    double sum = 0.0, sq = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      sum += v[k];
      sq += v[k] * v[k];
    }
    d.mass[s] = area * sum;
    d.l2[s] = std::sqrt(area * sq);
    d.min[s] = v.minCoeff();
    d.max[s] = v.maxCoeff();
  }
  return d;
}

RunResult run(const MacroSolver& solver, MacroState init, const RunControl& control, const SnapshotSink& sink,
              const FaceVelocity* velocity) {
  if (!(control.t_end >= init.t)) throw std::invalid_argument("run: t_end precedes the initial time");
  RunResult out;
  {
    const ChemicalFields w = solver.solve_chemicals(init.n1, init.n2, velocity, &init);
    if (!w.ok()) throw StepFailure(init.t, "initial chemical solve failed");
    init.w1 = w.w1;
    init.w2 = w.w2;
  }
  std::vector<double> marks;
  for (double t : control.snapshot_times)
    if (t >= init.t && t <= control.t_end) marks.push_back(t);
  std::sort(marks.begin(), marks.end());
  std::size_t next = 0;
  auto emit_due = [&](const MacroState& s) {
    while (next < marks.size() && marks[next] <= s.t + 1e-12 * std::max(1.0, std::abs(s.t))) {
      if (sink) sink(s);
      ++next;
    }
  };

  MacroState cur = std::move(init);
  emit_due(cur);
  const double dt = solver.config().dt;
  while (cur.t < control.t_end) {
    const double target = next < marks.size() ? std::min(marks[next], control.t_end) : control.t_end;
    double h = dt;
    bool land = false;
    if (target - cur.t <= dt * (1.0 + 1e-9)) {
      h = target - cur.t;
      land = true;
    }
    if (h <= 0.0) break;
    StepOutcome o = solver.step(cur, h, velocity);
    if (!o.accepted) {
      std::ostringstream msg;
      msg << "step failed at t=" << cur.t << ": " << o.message;
      throw StepFailure(cur.t, msg.str());
    }
    if (land) o.state.t = target;
    cur = std::move(o.state);
    Diagnostics d = diagnostics(solver.mesh(), cur);
    d.dt = h;
    d.newton_iterations = o.newton_iterations;
    d.gmres_iterations = o.gmres_iterations;
    d.residual = o.max_final_residual;
    out.series.push_back(d);
    emit_due(cur);
  }
  out.final_state = std::move(cur);
  return out;
}

}  // namespace chemoflow
