#include "chemoflow/fluid_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "chemoflow/parallel.hpp"

namespace chemoflow {

using Vec = Eigen::VectorXd;
using Csr = linalg::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double, int>;

FluidState FluidState::zeros(int nx, int ny) {
  FluidState s;
  s.u = Eigen::ArrayXXd::Zero(nx + 1, ny);
  s.v = Eigen::ArrayXXd::Zero(nx, ny + 1);
  s.p = Eigen::ArrayXXd::Zero(nx, ny);
  return s;
}

void FluidConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("fluid: dt must be > 0");
  if (!(inflow_scale >= 0.0)) throw std::invalid_argument("fluid: inflow_scale must be >= 0");
  poisson.validate();
  viscous.validate();
}

namespace {

// One side of a face-velocity stencil.
struct Link {
  enum Type { Unknown, Known, Ghost, Mirror } type;
  int i = 0, j = 0;  // face coordinates for Unknown / Known
  double coef = 0.0; // 1/h²
};

}  // namespace

bool FluidSolver::fluid(int i, int j) const {
  if (i < 0 || j < 0 || i >= mesh_->nx() || j >= mesh_->ny()) return false;
  return mesh_->is_fluid({i, j});
}

FluidSolver::Kind FluidSolver::u_kind(int i, int j) const {
  const int nx = mesh_->nx();
  if (i == 0) return fluid(0, j) ? Kind::Inlet : Kind::Zero;
  if (i == nx) return fluid(nx - 1, j) ? Kind::Outlet : Kind::Zero;
  return fluid(i - 1, j) && fluid(i, j) ? Kind::Unknown : Kind::Zero;
}

FluidSolver::Kind FluidSolver::v_kind(int i, int j) const {
  if (j == 0 || j == mesh_->ny()) return Kind::Wall;
  return fluid(i, j - 1) && fluid(i, j) ? Kind::Unknown : Kind::Zero;
}

FluidSolver::FluidSolver(const Mesh& mesh, const ModelParams& params, FluidConfig cfg)
    : mesh_(&mesh), params_(params), cfg_(std::move(cfg)) {
  params_.validate();
  cfg_.validate();
  const int nx = mesh.nx(), ny = mesh.ny();
  u_index_.assign(static_cast<std::size_t>(nx + 1) * ny, -1);
  v_index_.assign(static_cast<std::size_t>(nx) * (ny + 1), -1);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i <= nx; ++i)
      if (u_kind(i, j) == Kind::Unknown) {
        u_index_[i + (nx + 1) * j] = static_cast<int>(u_faces_.size());
        u_faces_.emplace_back(i, j);
      }
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (v_kind(i, j) == Kind::Unknown) {
        v_index_[i + nx * j] = static_cast<int>(v_faces_.size());
        v_faces_.emplace_back(i, j);
      }

  // -Δq with Neumann data on every prescribed face; the first fluid cell is pinned.
  const int n = mesh.fluid_count();
  const double ix2 = 1.0 / (mesh.dx() * mesh.dx()), iy2 = 1.0 / (mesh.dy() * mesh.dy());
  std::vector<Triplet> trip;
  for (int k = 0; k < n; ++k) {
    if (k == 0) {
      trip.emplace_back(0, 0, 1.0);
      continue;
    }
    const CellIndex c = mesh.fluid_cell(k);
    double diag = 0.0;
    auto link = [&](bool open, int ni, int nj, double w) {
      if (!open) return;
      diag += w;
      trip.emplace_back(k, mesh.fluid_index({ni, nj}), -w);
    };
    link(u_kind(c.i, c.j) == Kind::Unknown, c.i - 1, c.j, ix2);
    link(u_kind(c.i + 1, c.j) == Kind::Unknown, c.i + 1, c.j, ix2);
    link(v_kind(c.i, c.j) == Kind::Unknown, c.i, c.j - 1, iy2);
    link(v_kind(c.i, c.j + 1) == Kind::Unknown, c.i, c.j + 1, iy2);
    trip.emplace_back(k, k, diag);
  }
  poisson_.resize(n, n);
  poisson_.setFromTriplets(trip.begin(), trip.end());
  poisson_.makeCompressed();
  poisson_pre_ = linalg::Preconditioner<double>::make(cfg_.poisson.preconditioner, poisson_);

  if (params_.nu > 0.0) {
    visc_u_ = viscous_matrix(true, cfg_.dt);
    visc_v_ = viscous_matrix(false, cfg_.dt);
    visc_u_pre_ = linalg::Preconditioner<double>::make(cfg_.viscous.preconditioner, visc_u_);
    visc_v_pre_ = linalg::Preconditioner<double>::make(cfg_.viscous.preconditioner, visc_v_);
  }
}

double FluidSolver::inflow_profile(double y) const {
  const double yh = (y - mesh_->spec().origin.y()) / mesh_->spec().ly;
  return cfg_.inflow_scale * 2.0 * yh * (1.0 - yh);
}

namespace {

template <typename KindFn, typename DeepFn>
void u_links(int i, int j, int ny, double ix2, double iy2, KindFn kind, DeepFn all_solid, Link out[4]) {
  for (int s = 0; s < 2; ++s) {
    const int ni = s == 0 ? i - 1 : i + 1;
    const auto k = kind(ni, j);
    if (k == 0) out[s] = {Link::Unknown, ni, j, ix2};
    else if (k == 3) out[s] = {Link::Mirror, ni, j, ix2};
    else out[s] = {Link::Known, ni, j, ix2};
  }
  for (int s = 0; s < 2; ++s) {
    const int nj = s == 0 ? j - 1 : j + 1;
    if (nj < 0 || nj >= ny) {
      out[2 + s] = {Link::Mirror, i, nj, iy2};
      continue;
    }
    const auto k = kind(i, nj);
    if (k == 0) out[2 + s] = {Link::Unknown, i, nj, iy2};
    else if (all_solid(i, nj)) out[2 + s] = {Link::Ghost, i, nj, iy2};
    else out[2 + s] = {Link::Known, i, nj, iy2};
  }
}

}  // namespace

Csr FluidSolver::viscous_matrix(bool u_component, double dt) const {
  const int nx = mesh_->nx(), ny = mesh_->ny();
  const double ix2 = 1.0 / (mesh_->dx() * mesh_->dx()), iy2 = 1.0 / (mesh_->dy() * mesh_->dy());
  const double c = dt * params_.nu;
  const auto& faces = u_component ? u_faces_ : v_faces_;
  const auto& index = u_component ? u_index_ : v_index_;
  const int stride = u_component ? nx + 1 : nx;
  std::vector<Triplet> trip;
  for (std::size_t r = 0; r < faces.size(); ++r) {
    const auto [i, j] = faces[r];
    Link links[4];
    if (u_component) {
      u_links(
          i, j, ny, ix2, iy2, [&](int a, int b) { return static_cast<int>(u_kind(a, b)); },
          [&](int a, int b) { return !fluid(a - 1, b) && !fluid(a, b); }, links);
    } else {
      // Transposed roles: y is the face-normal direction for v.
      for (int s = 0; s < 2; ++s) {
        const int nj = s == 0 ? j - 1 : j + 1;
        links[s] = v_kind(i, nj) == Kind::Unknown ? Link{Link::Unknown, i, nj, iy2} : Link{Link::Known, i, nj, iy2};
      }
      for (int s = 0; s < 2; ++s) {
        const int ni = s == 0 ? i - 1 : i + 1;
        if (ni < 0) links[2 + s] = {Link::Ghost, ni, j, ix2};
        else if (ni >= nx) links[2 + s] = {Link::Mirror, ni, j, ix2};
        else if (v_kind(ni, j) == Kind::Unknown) links[2 + s] = {Link::Unknown, ni, j, ix2};
        else if (!fluid(ni, j - 1) && !fluid(ni, j)) links[2 + s] = {Link::Ghost, ni, j, ix2};
        else links[2 + s] = {Link::Known, ni, j, ix2};
      }
    }
    double diag = 1.0;
    for (const Link& l : links) {
      switch (l.type) {
        case Link::Unknown:
          diag += c * l.coef;
          trip.emplace_back(static_cast<int>(r), index[l.i + stride * l.j], -c * l.coef);
          break;
        case Link::Known: diag += c * l.coef; break;
        case Link::Ghost: diag += 2.0 * c * l.coef; break;
        case Link::Mirror: break;
      }
    }
    trip.emplace_back(static_cast<int>(r), static_cast<int>(r), diag);
  }
  const int m = static_cast<int>(faces.size());
  Csr a(m, m);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

void FluidSolver::apply_bcs(FluidState& s) const {
  const int nx = mesh_->nx(), ny = mesh_->ny();
  const double dy = mesh_->dy();
  double inflow = 0.0, outflow = 0.0, outlet_len = 0.0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      switch (u_kind(i, j)) {
        case Kind::Inlet:
          s.u(i, j) = inflow_profile(mesh_->spec().origin.y() + (j + 0.5) * dy);
          inflow += s.u(i, j) * dy;
          break;
        case Kind::Zero: s.u(i, j) = 0.0; break;
        default: break;
      }
    }
  }
  for (int j = 0; j < ny; ++j) {
    if (u_kind(nx, j) != Kind::Outlet) continue;
    s.u(nx, j) = nx > 1 ? s.u(nx - 1, j) : s.u(0, j);
    outflow += s.u(nx, j) * dy;
    outlet_len += dy;
  }
  if (outlet_len > 0.0) {
    const double shift = (inflow - outflow) / outlet_len;
    for (int j = 0; j < ny; ++j)
      if (u_kind(nx, j) == Kind::Outlet) s.u(nx, j) += shift;
  }
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (v_kind(i, j) != Kind::Unknown) s.v(i, j) = 0.0;
}

FluidState FluidSolver::initial_state() const {
  const int nx = mesh_->nx(), ny = mesh_->ny();
  FluidState s = FluidState::zeros(nx, ny);
  for (int j = 0; j < ny; ++j) {
    const double prof = inflow_profile(mesh_->spec().origin.y() + (j + 0.5) * mesh_->dy());
    for (int i = 0; i <= nx; ++i) s.u(i, j) = prof;
  }
  apply_bcs(s);
  return project(s, cfg_.dt);
}

double FluidSolver::interp_u(double x, double y, const Eigen::ArrayXXd& u) const {
  const Vec2 o = mesh_->spec().origin;
  const double fi = std::clamp((x - o.x()) / mesh_->dx(), 0.0, double(mesh_->nx()));
  const double fj = std::clamp((y - o.y()) / mesh_->dy() - 0.5, 0.0, double(mesh_->ny() - 1));
  const int i0 = std::min(static_cast<int>(fi), std::max(mesh_->nx() - 1, 0));
  const int j0 = std::min(static_cast<int>(fj), std::max(mesh_->ny() - 2, 0));
  const int i1 = std::min(i0 + 1, mesh_->nx());
  const int j1 = std::min(j0 + 1, mesh_->ny() - 1);
  const double a = fi - i0, b = fj - j0;
  return (1 - a) * (1 - b) * u(i0, j0) + a * (1 - b) * u(i1, j0) + (1 - a) * b * u(i0, j1) + a * b * u(i1, j1);
}

double FluidSolver::interp_v(double x, double y, const Eigen::ArrayXXd& v) const {
  const Vec2 o = mesh_->spec().origin;
  const double fi = std::clamp((x - o.x()) / mesh_->dx() - 0.5, 0.0, double(mesh_->nx() - 1));
  const double fj = std::clamp((y - o.y()) / mesh_->dy(), 0.0, double(mesh_->ny()));
  const int i0 = std::min(static_cast<int>(fi), std::max(mesh_->nx() - 2, 0));
  const int j0 = std::min(static_cast<int>(fj), std::max(mesh_->ny() - 1, 0));
  const int i1 = std::min(i0 + 1, mesh_->nx() - 1);
  const int j1 = std::min(j0 + 1, mesh_->ny());
  const double a = fi - i0, b = fj - j0;
  return (1 - a) * (1 - b) * v(i0, j0) + a * (1 - b) * v(i1, j0) + (1 - a) * b * v(i0, j1) + a * b * v(i1, j1);
}

FluidState FluidSolver::advect_velocity(const FluidState& s, double dt) const {
  FluidState out = s;
  const double h = dt * params_.k_conv;
  if (h == 0.0) return out;
  const Vec2 o = mesh_->spec().origin;
  const double dx = mesh_->dx(), dy = mesh_->dy();
  const double x0 = o.x(), x1 = o.x() + mesh_->spec().lx;
  const double y0 = o.y(), y1 = o.y() + mesh_->spec().ly;
  parallel_for(0, static_cast<int>(u_faces_.size()), [&](int b, int e) {
    for (int r = b; r < e; ++r) {
      const auto [i, j] = u_faces_[r];
      const double x = x0 + i * dx, y = y0 + (j + 0.5) * dy;
      const double fx = std::clamp(x - h * s.u(i, j), x0, x1);
      const double fy = std::clamp(y - h * interp_v(x, y, s.v), y0, y1);
      out.u(i, j) = interp_u(fx, fy, s.u);
    }
  });
  parallel_for(0, static_cast<int>(v_faces_.size()), [&](int b, int e) {
    for (int r = b; r < e; ++r) {
      const auto [i, j] = v_faces_[r];
      const double x = x0 + (i + 0.5) * dx, y = y0 + j * dy;
      const double fx = std::clamp(x - h * interp_u(x, y, s.u), x0, x1);
      const double fy = std::clamp(y - h * s.v(i, j), y0, y1);
      out.v(i, j) = interp_v(fx, fy, s.v);
    }
  });
  return out;
}

double FluidSolver::cell_q(int i, int j, const Vec& n1, const Vec& n2) const {
  const int k = mesh_->fluid_index({i, j});
  return k < 0 ? 0.0 : buoyancy_Q(n1[k], n2[k]);
}

FluidState FluidSolver::diffuse_and_force(const FluidState& s, const Vec& n1, const Vec& n2, double dt) const {
  const int n = mesh_->fluid_count();
  if (n1.size() != n || n2.size() != n) throw std::invalid_argument("diffuse_and_force: density length mismatch");
  const double gx = params_.grad_phi.x(), gy = params_.grad_phi.y();
  const double ix2 = 1.0 / (mesh_->dx() * mesh_->dx()), iy2 = 1.0 / (mesh_->dy() * mesh_->dy());
  const double c = dt * params_.nu;
  FluidState out = s;

  // Right-hand sides with known neighbor values folded in.
  Vec bu(u_faces_.size()), bv(v_faces_.size());
  for (std::size_t r = 0; r < u_faces_.size(); ++r) {
    const auto [i, j] = u_faces_[r];
    const double q = 0.5 * (cell_q(i - 1, j, n1, n2) + cell_q(i, j, n1, n2));
    double rhs = s.u(i, j) - dt * q * gx;
    if (c > 0.0) {
      for (int ni : {i - 1, i + 1}) {
        const Kind k = u_kind(ni, j);
        if (k == Kind::Zero || k == Kind::Inlet) rhs += c * ix2 * s.u(ni, j);
      }
    }
    bu[static_cast<Eigen::Index>(r)] = rhs;
  }
  for (std::size_t r = 0; r < v_faces_.size(); ++r) {
    const auto [i, j] = v_faces_[r];
    const double q = 0.5 * (cell_q(i, j - 1, n1, n2) + cell_q(i, j, n1, n2));
    double rhs = s.v(i, j) - dt * q * gy;
    if (c > 0.0) {
      for (int nj : {j - 1, j + 1}) {
        if (v_kind(i, nj) != Kind::Unknown) rhs += c * iy2 * s.v(i, nj);
      }
    }
    bv[static_cast<Eigen::Index>(r)] = rhs;
  }

  Vec xu = bu, xv = bv;
  if (c > 0.0) {
    const bool cached = dt == cfg_.dt;
    const Csr au = cached ? visc_u_ : viscous_matrix(true, dt);
    const Csr av = cached ? visc_v_ : viscous_matrix(false, dt);
    const auto pu = cached ? visc_u_pre_ : linalg::Preconditioner<double>::make(cfg_.viscous.preconditioner, au);
    const auto pv = cached ? visc_v_pre_ : linalg::Preconditioner<double>::make(cfg_.viscous.preconditioner, av);
    const auto su = linalg::gmres(au, bu, xu, cfg_.viscous, &pu);
    const auto sv = linalg::gmres(av, bv, xv, cfg_.viscous, &pv);
    if (!su.converged || !sv.converged) throw std::runtime_error("diffuse_and_force: viscous solve failed");
  }
  for (std::size_t r = 0; r < u_faces_.size(); ++r) out.u(u_faces_[r].first, u_faces_[r].second) = xu[r];
  for (std::size_t r = 0; r < v_faces_.size(); ++r) out.v(v_faces_[r].first, v_faces_[r].second) = xv[r];
  return out;
}

Eigen::ArrayXXd FluidSolver::divergence(const FluidState& s) const {
  const int nx = mesh_->nx(), ny = mesh_->ny();
  Eigen::ArrayXXd d = Eigen::ArrayXXd::Zero(nx, ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (fluid(i, j))
        d(i, j) = (s.u(i + 1, j) - s.u(i, j)) / mesh_->dx() + (s.v(i, j + 1) - s.v(i, j)) / mesh_->dy();
  return d;
}

double FluidSolver::max_divergence(const FluidState& s) const {
  return s.u.size() == 0 ? 0.0 : divergence(s).abs().maxCoeff();
}

FluidState FluidSolver::project(const FluidState& s, double dt, linalg::KrylovStats* stats) const {
  const int n = mesh_->fluid_count();
  const Eigen::ArrayXXd div = divergence(s);
  double net = 0.0, scale = 0.0;
  for (int j = 0; j < mesh_->ny(); ++j) {
    scale += std::abs(s.u(0, j)) + std::abs(s.u(mesh_->nx(), j));
    for (int i = 0; i < mesh_->nx(); ++i) net += div(i, j);
  }
  net *= mesh_->cell_measure();
  scale *= mesh_->dy();
  if (std::abs(net) > 1e-9 * std::max(1.0, scale))
    throw std::runtime_error("project: boundary fluxes are incompatible (net inflow != net outflow)");

  Vec b(n);
  for (int k = 0; k < n; ++k) {
    const CellIndex c = mesh_->fluid_cell(k);
    b[k] = k == 0 ? 0.0 : -div(c.i, c.j) / dt;
  }
  Vec q = Vec::Zero(n);
  const linalg::KrylovStats st = linalg::gmres(poisson_, b, q, cfg_.poisson, &poisson_pre_);
  if (stats) *stats = st;
  if (!st.converged) throw std::runtime_error("project: pressure Poisson solve did not converge");

  FluidState out = s;
  out.p = Eigen::ArrayXXd::Zero(mesh_->nx(), mesh_->ny());
  for (int k = 0; k < n; ++k) {
    const CellIndex c = mesh_->fluid_cell(k);
    out.p(c.i, c.j) = q[k];
  }
  for (const auto& [i, j] : u_faces_) out.u(i, j) -= dt * (out.p(i, j) - out.p(i - 1, j)) / mesh_->dx();
  for (const auto& [i, j] : v_faces_) out.v(i, j) -= dt * (out.p(i, j) - out.p(i, j - 1)) / mesh_->dy();
  return out;
}

FluidState FluidSolver::step(const FluidState& s, const Vec& n1, const Vec& n2, FluidMonitor* monitor) const {
  const double dt = cfg_.dt;
  FluidState a = advect_velocity(s, dt);
  FluidState b = diffuse_and_force(a, n1, n2, dt);
  apply_bcs(b);
  linalg::KrylovStats st;
  FluidState c = project(b, dt, &st);
  c.t = s.t + dt;
  if (monitor) {
    monitor->kinetic_energy = kinetic_energy(c);
    monitor->max_divergence = max_divergence(c);
    monitor->vertical_momentum = vertical_momentum(c);
    monitor->work_bound = work_bound(s, n1, n2, dt);
    monitor->poisson_iterations = st.iterations;
  }
  return c;
}

double FluidSolver::kinetic_energy(const FluidState& s) const {
  return 0.5 * mesh_->cell_measure() * (s.u.square().sum() + s.v.square().sum());
}

double FluidSolver::vertical_momentum(const FluidState& s) const { return mesh_->cell_measure() * s.v.sum(); }

double FluidSolver::work_bound(const FluidState& s, const Vec& n1, const Vec& n2, double dt) const {
  const int nx = mesh_->nx(), ny = mesh_->ny();
  const double dy = mesh_->dy();
  double flux = 0.0;
  for (int j = 0; j < ny; ++j) {
    if (u_kind(0, j) == Kind::Inlet) {
      const double u = s.u(0, j);
      flux += (0.5 * u * u + s.p(0, j)) * u * dy;
    }
    if (u_kind(nx, j) == Kind::Outlet) {
      const double u = s.u(nx, j);
      flux -= (0.5 * u * u + s.p(nx - 1, j)) * u * dy;
    }
  }
  double power = 0.0;
  const double gx = params_.grad_phi.x(), gy = params_.grad_phi.y();
  if (gx != 0.0 || gy != 0.0) {
    for (const auto& [i, j] : u_faces_)
      power += std::abs(0.5 * (cell_q(i - 1, j, n1, n2) + cell_q(i, j, n1, n2)) * gx * s.u(i, j));
    for (const auto& [i, j] : v_faces_)
      power += std::abs(0.5 * (cell_q(i, j - 1, n1, n2) + cell_q(i, j, n1, n2)) * gy * s.v(i, j));
    power *= mesh_->cell_measure();
  }
  return dt * (std::max(flux, 0.0) + power);
}

Eigen::ArrayXXd FluidSolver::speed(const FluidState& s) const {
  const int nx = mesh_->nx(), ny = mesh_->ny();
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(nx, ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double u = 0.5 * (s.u(i, j) + s.u(i + 1, j));
      const double v = 0.5 * (s.v(i, j) + s.v(i, j + 1));
      out(i, j) = std::hypot(u, v);
    }
  return out;
}

CoupledOutcome coupled_step(const FluidSolver& fluid, const MacroSolver& macro, const FluidState& fs,
                            const MacroState& ms) {
  if (&fluid.mesh() != &macro.mesh()) throw std::invalid_argument("coupled_step: solvers must share one mesh");
  if (std::abs(fluid.config().dt - macro.config().dt) > 1e-15 * fluid.config().dt)
    throw std::invalid_argument("coupled_step: fluid and macro time steps differ");
  CoupledOutcome out;
  out.fluid = fluid.step(fs, ms.n1, ms.n2, &out.monitor);
  const FaceVelocity vel = out.fluid.velocity();
  out.macro = macro.step(ms, &vel);
  return out;
}

}  // namespace chemoflow
