#include "chemoflow/kinetic.hpp"

#include <Eigen/SparseLU>
#include <Eigen/SparseCore>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "chemoflow/macro_solver.hpp"

namespace chemoflow {

using Vec = Eigen::VectorXd;
using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

void KineticParams::validate() const {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("kinetic: sigma must be > 0");
  if (!(r > 0.0)) throw std::invalid_argument("kinetic: r must be > 0");
  if (!(eps > 0.0)) throw std::invalid_argument("kinetic: eps must be > 0");
}

void KineticSetup::validate() const {
  if (cells < 3) throw std::invalid_argument("kinetic: need at least 3 cells");
  if (!(length > 0.0)) throw std::invalid_argument("kinetic: length must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("kinetic: dt must be > 0");
  if (!(t_end >= 0.0)) throw std::invalid_argument("kinetic: t_end must be >= 0");
  if (!initial.n1 || !initial.n2) throw std::invalid_argument("kinetic: initial densities missing");
  model.validate();
  kinetic.validate();
}

std::array<double, 2> equilibrium_weight(double r) {
  const auto v = velocity_set(r);
  return {1.0 / double(v.size()), 1.0 / double(v.size())};
}

double limit_diffusion_coefficient(double r, double sigma, int dim) {
  if (!(sigma > 0.0)) throw std::invalid_argument("limit_diffusion_coefficient: sigma must be > 0");
  if (dim < 1) throw std::invalid_argument("limit_diffusion_coefficient: dim must be >= 1");
  return r * r / (dim * sigma);
}

double kinetic_dt_limit(const KineticParams& p, double dx) {
  const double sigma = std::min(p.sigma1, p.sigma2);
  const double rate = 2.0 * p.r / (p.eps * dx) - sigma / (p.eps * p.eps);
  return rate > 0.0 ? 2.0 / rate : std::numeric_limits<double>::infinity();
}

Eigen::ArrayX2d reconstruct(const Vec& n, const Eigen::ArrayX2d& g, double r, double eps) {
  const auto m = equilibrium_weight(r);
  const Eigen::Index c = n.size();
  Eigen::ArrayX2d f(c, 2);
  for (Eigen::Index i = 0; i < c; ++i) {
    const double nb = 0.5 * (n[i] + n[(i + 1) % c]);
    for (int q = 0; q < 2; ++q) f(i, q) = m[q] * nb + eps * g(i, q);
  }
  return f;
}

Eigen::ArrayXd velocity_average(const Eigen::ArrayX2d& g) { return g.rowwise().sum(); }

Eigen::ArrayX2d chemotaxis_source(const Vec& n, const Vec& w, const ChemoLaw& law, double sigma, double r,
                                  double dx) {
  const auto v = velocity_set(r);
  const Eigen::Index c = n.size();
  const double pre = sigma / (r * r * double(v.size()));
  Eigen::ArrayX2d s(c, 2);
  for (Eigen::Index i = 0; i < c; ++i) {
    const Eigen::Index e = (i + 1) % c;
    const double chi = chemo_sensitivity(face_value(n[i], n[e]), law);
    const double grad = (w[e] - w[i]) / dx;
    for (int q = 0; q < 2; ++q) s(i, q) = pre * v[q] * chi * grad;
  }
  return s;
}

namespace {

// Periodic (I - c Δ_h) or (-Δ_h + α) depending on the coefficients: diag, off.
ColMatrix periodic_tridiagonal(int n, double diag, double off) {
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(3 * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, diag);
    t.emplace_back(i, (i + 1) % n, off);
    t.emplace_back(i, (i + n - 1) % n, off);
  }
  ColMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

Vec lu_solve(const ColMatrix& a, const Vec& b) {
  Eigen::SparseLU<ColMatrix> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw std::runtime_error("kinetic: LU factorization failed");
  return lu.solve(b);
}

// Pointwise reaction f(v)(a - b|V| f1 - c|V| f2); its velocity sum at f = M n is F.
struct PointReaction {
  const ModelParams* p;
  double nv;  // |V|
  double operator()(int species, double f1, double f2) const {
    if (species == 1) return f1 * (p->a1 - p->b1 * nv * f1 - p->c1 * nv * f2);
    return f2 * (p->a2 - p->c2 * nv * f2 + p->f2_coupling_sign * p->b2 * nv * f1);
  }
};

Vec sample(const std::function<double(double)>& fn, int n, double dx, double shift) {
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = fn ? fn((i + shift) * dx) : 0.0;
  return out;
}

}  // namespace

KineticSolver::KineticSolver(KineticSetup setup) : setup_(std::move(setup)) {
  setup_.validate();
  dx_ = setup_.length / setup_.cells;
}

KineticState KineticSolver::initial_state() const {
  const int n = setup_.cells;
  const double eps = setup_.kinetic.eps;
  KineticState s;
  s.n1 = sample(setup_.initial.n1, n, dx_, 0.5);
  s.n2 = sample(setup_.initial.n2, n, dx_, 0.5);
  const Vec d1 = sample(setup_.initial.dev1, n, dx_, 1.0);
  const Vec d2 = sample(setup_.initial.dev2, n, dx_, 1.0);
  s.g1.resize(n, 2);
  s.g2.resize(n, 2);
  s.g1.col(0) = -d1.array() / eps;
  s.g1.col(1) = d1.array() / eps;
  s.g2.col(0) = -d2.array() / eps;
  s.g2.col(1) = d2.array() / eps;
  solve_chemicals(s);
  return s;
}

void KineticSolver::solve_chemicals(KineticState& s) const {
  const int n = setup_.cells;
  const double k = 1.0 / (dx_ * dx_);
  const ModelParams& p = setup_.model;
  s.w1 = lu_solve(periodic_tridiagonal(n, 2.0 * k + p.alpha1, -k), p.beta1 * s.n2);
  s.w2 = lu_solve(periodic_tridiagonal(n, 2.0 * k + p.alpha2, -k), p.beta2 * s.n1);
}

KineticState KineticSolver::step(const KineticState& s, double dt) const {
  const KineticParams& kp = setup_.kinetic;
  if (dt > kinetic_dt_limit(kp, dx_) * (1.0 + 1e-12))
    throw std::domain_error("kinetic: time step violates the transport CFL bound");
  const int n = setup_.cells;
  const double eps = kp.eps, r = kp.r;
  const auto v = velocity_set(r);
  const auto m = equilibrium_weight(r);
  const PointReaction g2{&setup_.model, double(v.size())};

  // Reaction sources from f = M n + ε g (g averaged to cells, n averaged to interfaces).
  Eigen::ArrayX2d f1c(n, 2), f2c(n, 2);
  for (int i = 0; i < n; ++i) {
    const int w = (i + n - 1) % n;
    for (int q = 0; q < 2; ++q) {
      f1c(i, q) = m[q] * s.n1[i] + eps * 0.5 * (s.g1(w, q) + s.g1(i, q));
      f2c(i, q) = m[q] * s.n2[i] + eps * 0.5 * (s.g2(w, q) + s.g2(i, q));
    }
  }
  const Eigen::ArrayX2d f1f = reconstruct(s.n1, s.g1, r, eps);
  const Eigen::ArrayX2d f2f = reconstruct(s.n2, s.g2, r, eps);

  KineticState out;
  out.t = s.t + dt;
  for (int sp = 1; sp <= 2; ++sp) {
    const Vec& nn = sp == 1 ? s.n1 : s.n2;
    const Eigen::ArrayX2d& g = sp == 1 ? s.g1 : s.g2;
    const double sigma = sp == 1 ? kp.sigma1 : kp.sigma2;
    const ChemoLaw& law = sp == 1 ? setup_.model.chemo1 : setup_.model.chemo2;
    const Vec& w = sp == 1 ? s.w1 : s.w2;
    const double a = sigma * dt / (eps * eps);

    const Eigen::ArrayX2d g1src = chemotaxis_source(nn, w, law, sigma, r, dx_);
    Eigen::ArrayX2d h(n, 2);
    for (int i = 0; i < n; ++i) {
      const int e = (i + 1) % n, wst = (i + n - 1) % n;
      double tr[2], rc[2];
      for (int q = 0; q < 2; ++q) {
        const double dg = v[q] > 0 ? (g(i, q) - g(wst, q)) / dx_ : (g(e, q) - g(i, q)) / dx_;
        tr[q] = v[q] * dg;
        rc[q] = g2(sp, f1f(i, q), f2f(i, q));
      }
      const double tr_avg = m[0] * tr[0] + m[1] * tr[1];
      const double rc_avg = m[0] * (rc[0] + rc[1]);
      for (int q = 0; q < 2; ++q) {
        h(i, q) = g(i, q) - dt / eps * (tr[q] - tr_avg) + dt / (eps * eps) * g1src(i, q) +
                  dt / eps * (rc[q] - rc_avg);
      }
    }

    Vec rhs(n);
    const Eigen::ArrayXd j = h.col(0) * v[0] + h.col(1) * v[1];
    for (int i = 0; i < n; ++i) {
      const int wst = (i + n - 1) % n;
      const double src = sp == 1 ? g2(1, f1c(i, 0), f2c(i, 0)) + g2(1, f1c(i, 1), f2c(i, 1))
                                 : g2(2, f1c(i, 0), f2c(i, 0)) + g2(2, f1c(i, 1), f2c(i, 1));
      rhs[i] = nn[i] - dt / ((1.0 + a) * dx_) * (j[i] - j[wst]) + dt * src;
    }
    const double c = dt * dt * r * r / (eps * eps + sigma * dt) / (dx_ * dx_);
    const Vec next = lu_solve(periodic_tridiagonal(n, 1.0 + 2.0 * c, -c), rhs);

    Eigen::ArrayX2d gn(n, 2);
    for (int i = 0; i < n; ++i) {
      const double dn = (next[(i + 1) % n] - next[i]) / dx_;
      for (int q = 0; q < 2; ++q) gn(i, q) = (h(i, q) - dt / (eps * eps) * v[q] * m[q] * dn) / (1.0 + a);
    }
    const Eigen::ArrayXd mean = 0.5 * velocity_average(gn);
    gn.colwise() -= mean;

    if (sp == 1) {
      out.n1 = next;
      out.g1 = gn;
    } else {
      out.n2 = next;
      out.g2 = gn;
    }
  }
  solve_chemicals(out);
  return out;
}

KineticState KineticSolver::run(double t_end) const {
  KineticState s = initial_state();
  const double dt = setup_.dt;
  while (s.t < t_end - 1e-12 * dt) {
    const double h = std::min(dt, t_end - s.t);
    s = step(s, h);
  }
  return s;
}

MacroProfile1D macro_reference_1d(const KineticSetup& setup, double t_end) {
  setup.validate();
  const int n = setup.cells;
  const double dx = setup.length / n;
  const ModelParams& p = setup.model;
  const double d1 = limit_diffusion_coefficient(setup.kinetic, 1);
  const double d2 = limit_diffusion_coefficient(setup.kinetic, 2);
  const double k = 1.0 / (dx * dx);

  Vec n1 = sample(setup.initial.n1, n, dx, 0.5);
  Vec n2 = sample(setup.initial.n2, n, dx, 0.5);
  const ColMatrix chem1 = periodic_tridiagonal(n, 2.0 * k + p.alpha1, -k);
  const ColMatrix chem2 = periodic_tridiagonal(n, 2.0 * k + p.alpha2, -k);
  double t = 0.0;
  while (t < t_end - 1e-12 * setup.dt) {
    const double dt = std::min(setup.dt, t_end - t);
    const Vec w1 = lu_solve(chem1, p.beta1 * n2);
    const Vec w2 = lu_solve(chem2, p.beta2 * n1);
    Vec r1(n), r2(n);
    for (int i = 0; i < n; ++i) {
      const int e = (i + 1) % n, w = (i + n - 1) % n;
      const auto flux = [&](const Vec& nn, const Vec& ww, const ChemoLaw& law, int a, int b) {
        return chemo_sensitivity(face_value(nn[a], nn[b]), law) * (ww[b] - ww[a]) / dx;
      };
      const double div1 = (flux(n1, w1, p.chemo1, i, e) - flux(n1, w1, p.chemo1, w, i)) / dx;
      const double div2 = (flux(n2, w2, p.chemo2, i, e) - flux(n2, w2, p.chemo2, w, i)) / dx;
      const Reaction<double> f = reaction(n1[i], n2[i], p);
      r1[i] = n1[i] - dt * div1 + dt * f.f1;
      r2[i] = n2[i] - dt * div2 + dt * f.f2;
    }
    n1 = lu_solve(periodic_tridiagonal(n, 1.0 + 2.0 * dt * d1 * k, -dt * d1 * k), r1);
    n2 = lu_solve(periodic_tridiagonal(n, 1.0 + 2.0 * dt * d2 * k, -dt * d2 * k), r2);
    t += dt;
  }
  return {n1, n2};
}

std::vector<ConvergenceRow> convergence_study(const std::vector<double>& eps_list, const KineticSetup& base) {
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1])) throw std::invalid_argument("convergence_study: eps list must decrease");
  const MacroProfile1D ref = macro_reference_1d(base, base.t_end);
  const double dx = base.length / base.cells;
  std::vector<ConvergenceRow> rows;
  for (double eps : eps_list) {
    KineticSetup s = base;
    s.kinetic.eps = eps;
    const KineticState k = KineticSolver(s).run(s.t_end);
    const double err = dx * ((k.n1 - ref.n1).cwiseAbs().sum() + (k.n2 - ref.n2).cwiseAbs().sum());
    const double ratio = rows.empty() ? std::numeric_limits<double>::quiet_NaN() : rows.back().error / err;
    rows.push_back({eps, err, ratio});
  }
  return rows;
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  out << "eps,error,ratio\n";
  for (const auto& r : rows) {
    out << r.eps << ',' << r.error << ',';
    if (std::isnan(r.ratio)) out << "nan";
    else out << r.ratio;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

KineticSetup diffusion_limit_setup() {
  KineticSetup s;
  s.cells = 200;
  s.length = 1.0;
  s.dt = 5e-4;
  s.t_end = 0.25;
  s.model.d1 = s.model.d2 = 1.0;
  s.model.alpha1 = s.model.alpha2 = 1.0;
  s.kinetic.r = 1.0;
  s.kinetic.sigma1 = s.kinetic.sigma2 = 10.0;
  const double tau = 2.0 * std::numbers::pi;
  s.initial.n1 = [tau](double x) { return 1.0 + 0.5 * std::cos(tau * x); };
  s.initial.n2 = s.initial.n1;
  s.initial.dev1 = [tau](double x) { return 0.25 * std::sin(tau * x); };
  s.initial.dev2 = s.initial.dev1;
  return s;
}

}  // namespace chemoflow
