#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemoflow/parallel.hpp"

namespace chemoflow::linalg {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Compressed sparse row storage. Eigen's row-major compressed layout is CSR:
/// outerIndexPtr() holds row offsets, innerIndexPtr() column indices.
template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;

/// Throws std::logic_error when the CSR invariants do not hold: compressed
/// storage, offsets of length rows+1 that never decrease and end at nnz, and
/// strictly increasing column indices inside each row.
template <typename Scalar>
void validate_csr(const SparseMatrix<Scalar>& a) {
  if (!a.isCompressed()) throw std::logic_error("csr: matrix is not compressed");
  const int* offsets = a.outerIndexPtr();
  const int* cols = a.innerIndexPtr();
  if (offsets[0] != 0) throw std::logic_error("csr: first row offset must be 0");
  for (int r = 0; r < a.rows(); ++r) {
    if (offsets[r + 1] < offsets[r]) throw std::logic_error("csr: row offsets decrease");
    for (int k = offsets[r]; k < offsets[r + 1]; ++k) {
      if (cols[k] < 0 || cols[k] >= a.cols()) throw std::logic_error("csr: column index out of range");
      if (k > offsets[r] && cols[k] <= cols[k - 1]) throw std::logic_error("csr: columns not strictly increasing");
    }
  }
  if (offsets[a.rows()] != a.nonZeros()) throw std::logic_error("csr: last offset differs from nnz");
}

/// y = A x with a fixed left-to-right summation order per row.
template <typename Scalar>
void spmv(const SparseMatrix<Scalar>& a, const Vector<Scalar>& x, Vector<Scalar>& y) {
  if (a.cols() != x.size()) throw std::invalid_argument("spmv: dimension mismatch");
  y.resize(a.rows());
  const int* offsets = a.outerIndexPtr();
  const int* cols = a.innerIndexPtr();
  const Scalar* vals = a.valuePtr();
  const int* nnz = a.innerNonZeroPtr();
  parallel_for(0, static_cast<int>(a.rows()), [&](int r0, int r1) {
    for (int r = r0; r < r1; ++r) {
      const int end = nnz ? offsets[r] + nnz[r] : offsets[r + 1];
      Scalar acc(0);
      for (int k = offsets[r]; k < end; ++k) acc += vals[k] * x[cols[k]];
      y[r] = acc;
    }
  });
}

template <typename Scalar>
Vector<Scalar> spmv(const SparseMatrix<Scalar>& a, const Vector<Scalar>& x) {
  Vector<Scalar> y;
  spmv(a, x, y);
  return y;
}

enum class PreconditionerKind { None, Jacobi, Ilut, Lu };

struct KrylovConfig {
  double rtol = 1e-10;
  int max_iters = 2000;
  int restart = 30;
  PreconditionerKind preconditioner = PreconditionerKind::None;

  void validate() const {
    if (!(rtol > 0.0)) throw std::invalid_argument("krylov: rtol must be > 0");
    if (restart < 1) throw std::invalid_argument("krylov: restart must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("krylov: max_iters must be >= 1");
  }
};

struct KrylovStats {
  bool converged = false;
  bool breakdown = false;
  int iterations = 0;
  double residual_norm = 0.0;  // true residual ‖b - A x‖₂ of the returned x
  double rhs_norm = 0.0;
  /// Least-squares residual estimates inside each restart cycle, starting with
  /// the cycle's initial residual.
  std::vector<std::vector<double>> cycle_residuals;
  std::string message;
};

/// Right preconditioner M⁻¹ as a type-erased apply.
template <typename Scalar>
class Preconditioner {
 public:
  using Apply = std::function<void(const Vector<Scalar>&, Vector<Scalar>&)>;

  Preconditioner() = default;
  explicit Preconditioner(Apply apply) : apply_(std::move(apply)) {}

  static Preconditioner make(PreconditionerKind kind, const SparseMatrix<Scalar>& a) {
    switch (kind) {
      case PreconditionerKind::None:
        return {};
      case PreconditionerKind::Jacobi: {
        Vector<Scalar> inv = a.diagonal();
        for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] != Scalar(0) ? Scalar(1) / inv[i] : Scalar(1);
        return Preconditioner([inv](const Vector<Scalar>& r, Vector<Scalar>& z) { z = inv.cwiseProduct(r); });
      }
      case PreconditionerKind::Ilut: {
        auto ilu = std::make_shared<Eigen::IncompleteLUT<Scalar>>();
        ilu->setDroptol(1e-4);
        ilu->setFillfactor(10);
        ilu->compute(a);
        if (ilu->info() != Eigen::Success) throw std::runtime_error("ilut: factorization failed");
        return Preconditioner([ilu](const Vector<Scalar>& r, Vector<Scalar>& z) { z = ilu->solve(r); });
      }
      case PreconditionerKind::Lu: {
        auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<Scalar, Eigen::ColMajor>>>();
        Eigen::SparseMatrix<Scalar, Eigen::ColMajor> col = a;
        col.makeCompressed();
        lu->compute(col);
        if (lu->info() != Eigen::Success) throw std::runtime_error("sparse lu: factorization failed");
        return Preconditioner([lu](const Vector<Scalar>& r, Vector<Scalar>& z) { z = lu->solve(r); });
      }
    }
    return {};
  }

  bool is_identity() const { return !apply_; }

  void apply(const Vector<Scalar>& r, Vector<Scalar>& z) const {
    if (apply_) {
      apply_(r, z);
    } else {
      z = r;
    }
  }

 private:
  Apply apply_;
};

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations, right
/// preconditioned so that convergence is judged on the true residual.
/// `apply_a(x, y)` computes y = A x. On return x holds the last iterate;
/// `converged` is set only when ‖b - A x‖₂ <= rtol ‖b‖₂ was verified directly.
template <typename Scalar, typename ApplyA>
KrylovStats gmres(const ApplyA& apply_a, const Vector<Scalar>& b, Vector<Scalar>& x, const KrylovConfig& cfg,
                  const Preconditioner<Scalar>& precond = {}) {
  using std::abs;
  using std::sqrt;
  cfg.validate();
  KrylovStats stats;
  const Eigen::Index n = b.size();
  if (x.size() != n) x = Vector<Scalar>::Zero(n);
  if (!b.allFinite()) throw std::invalid_argument("gmres: right-hand side is not finite");

  const Scalar bnorm = b.norm();
  stats.rhs_norm = static_cast<double>(bnorm);
  if (bnorm == Scalar(0)) {
    x.setZero();
    stats.converged = true;
    return stats;
  }
  const Scalar target = Scalar(cfg.rtol) * bnorm;

  Vector<Scalar> r(n), w(n), z(n);
  apply_a(x, w);
  r = b - w;
  Scalar beta = r.norm();
  stats.residual_norm = static_cast<double>(beta);
  if (beta <= target) {
    stats.converged = true;
    return stats;
  }

  const int m = cfg.restart;
  using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  DenseMat basis(n, m + 1);
  DenseMat h = DenseMat::Zero(m + 1, m);
  Vector<Scalar> cs(m), sn(m), g(m + 1);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();

  while (stats.iterations < cfg.max_iters) {
    h.setZero();
    g.setZero();
    g[0] = beta;
    basis.col(0) = r / beta;
    std::vector<double> cycle{static_cast<double>(beta)};
    int used = 0;
    bool happy = false;
    bool singular = false;

    for (int k = 0; k < m && stats.iterations < cfg.max_iters; ++k) {
      precond.apply(basis.col(k), z);
      apply_a(z, w);
      const Scalar wnorm0 = w.norm();
      for (int i = 0; i <= k; ++i) {
        h(i, k) = basis.col(i).dot(w);
        w -= h(i, k) * basis.col(i);
      }
      h(k + 1, k) = w.norm();
      ++stats.iterations;
      happy = h(k + 1, k) <= Scalar(4) * eps * wnorm0;
      if (!happy) basis.col(k + 1) = w / h(k + 1, k);

      for (int i = 0; i < k; ++i) {
        const Scalar t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      const Scalar denom = std::hypot(h(k, k), happy ? Scalar(0) : h(k + 1, k));
      if (denom == Scalar(0)) {
        singular = true;
        break;
      }
      cs[k] = h(k, k) / denom;
      sn[k] = (happy ? Scalar(0) : h(k + 1, k)) / denom;
      h(k, k) = denom;
      h(k + 1, k) = Scalar(0);
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      used = k + 1;
      cycle.push_back(static_cast<double>(abs(g[k + 1])));
      if (happy || abs(g[k + 1]) <= target) break;
    }
    stats.cycle_residuals.push_back(std::move(cycle));

    if (used > 0) {
      Vector<Scalar> y = h.topLeftCorner(used, used).template triangularView<Eigen::Upper>().solve(g.head(used));
      Vector<Scalar> update = basis.leftCols(used) * y;
      precond.apply(update, z);
      x += z;
    }
    apply_a(x, w);
    r = b - w;
    const Scalar previous = beta;
    beta = r.norm();
    stats.residual_norm = static_cast<double>(beta);
    if (!std::isfinite(stats.residual_norm)) {
      stats.message = "gmres: residual became non-finite";
      return stats;
    }
    if (beta <= target) {
      stats.converged = true;
      return stats;
    }
    if (singular || happy) {
      stats.breakdown = true;
      stats.message = singular ? "gmres: numerical breakdown (singular Hessenberg system)"
                                : "gmres: Krylov space exhausted without reaching tolerance";
      return stats;
    }
    if (used == m && !(beta < previous)) {
      stats.message = "gmres: stagnation across a restart cycle";
      return stats;
    }
  }
  std::ostringstream os;
  os << "gmres: no convergence after " << stats.iterations << " iterations, relative residual "
     << stats.residual_norm / stats.rhs_norm;
  stats.message = os.str();
  return stats;
}

template <typename Scalar>
KrylovStats gmres(const SparseMatrix<Scalar>& a, const Vector<Scalar>& b, Vector<Scalar>& x, const KrylovConfig& cfg,
                  const Preconditioner<Scalar>* precond = nullptr) {
  if (a.rows() != a.cols()) throw std::invalid_argument("gmres: matrix must be square");
  if (a.rows() != b.size()) throw std::invalid_argument("gmres: dimension mismatch");
  const Preconditioner<Scalar> built = precond ? *precond : Preconditioner<Scalar>::make(cfg.preconditioner, a);
  auto apply = [&a](const Vector<Scalar>& in, Vector<Scalar>& out) { spmv(a, in, out); };
  return gmres<Scalar>(apply, b, x, cfg, built);
}

/// Dense LU solve; the direct fallback used as an oracle in tests.
template <typename Scalar>
Vector<Scalar> dense_solve(const SparseMatrix<Scalar>& a, const Vector<Scalar>& b) {
  using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const DenseMat dense = DenseMat(a);
  return dense.partialPivLu().solve(b);
}

enum class Damping { None, Backtracking };

struct NewtonConfig {
  double abs_tol = 1e-10;  // on ‖F‖∞
  double rel_tol = 1e-15;  // on ‖F‖∞ / ‖F(x0)‖∞
  int max_iters = 20;
  Damping damping = Damping::Backtracking;
  int max_halvings = 8;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw std::invalid_argument("newton: tolerances must be > 0");
    if (max_iters < 1) throw std::invalid_argument("newton: max_iters must be >= 1");
  }
};

enum class NewtonStatus { Converged, MaxIterations, LinearSolveFailed, NonFiniteResidual, LineSearchFailed };

inline std::string to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::Converged: return "converged";
    case NewtonStatus::MaxIterations: return "max-iterations";
    case NewtonStatus::LinearSolveFailed: return "linear-solve-failed";
    case NewtonStatus::NonFiniteResidual: return "non-finite-residual";
    case NewtonStatus::LineSearchFailed: return "line-search-failed";
  }
  return "unknown";
}

struct NewtonStats {
  NewtonStatus status = NewtonStatus::MaxIterations;
  int iterations = 0;
  int linear_iterations = 0;
  int failed_iteration = -1;
  std::vector<double> residual_history;  // ‖F‖∞ per iterate, starting at x0
  std::string message;

  bool converged() const { return status == NewtonStatus::Converged; }
  double final_residual() const { return residual_history.empty() ? 0.0 : residual_history.back(); }
};

template <typename Scalar>
Scalar inf_norm(const Vector<Scalar>& v) {
  return v.size() == 0 ? Scalar(0) : v.cwiseAbs().maxCoeff();
}

/// Damped Newton iteration with GMRES inner solves. `residual(x)` returns F(x),
/// `jacobian(x)` the sparse F'(x). On return x holds the last accepted iterate.
template <typename Scalar, typename ResidualFn, typename JacobianFn>
NewtonStats newton(const ResidualFn& residual, const JacobianFn& jacobian, Vector<Scalar>& x,
                   const NewtonConfig& cfg, const KrylovConfig& krylov) {
  cfg.validate();
  NewtonStats stats;
  Vector<Scalar> f = residual(x);
  if (f.size() != x.size()) throw std::invalid_argument("newton: residual size differs from unknown count");
  Scalar fnorm = inf_norm(f);
  stats.residual_history.push_back(static_cast<double>(fnorm));
  if (!f.allFinite()) {
    stats.status = NewtonStatus::NonFiniteResidual;
    stats.failed_iteration = 0;
    stats.message = "newton: non-finite residual at the initial guess";
    return stats;
  }
  const Scalar f0 = fnorm;
  auto done = [&](Scalar r) { return r <= Scalar(cfg.abs_tol) || r <= Scalar(cfg.rel_tol) * f0; };

  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (done(fnorm)) {
      stats.status = NewtonStatus::Converged;
      return stats;
    }
    const SparseMatrix<Scalar> jac = jacobian(x);
    if (jac.rows() != x.size() || jac.cols() != x.size())
      throw std::invalid_argument("newton: jacobian dimensions differ from unknown count");
    Vector<Scalar> delta = Vector<Scalar>::Zero(x.size());
    const Vector<Scalar> rhs = -f;
    const KrylovStats ks = gmres<Scalar>(jac, rhs, delta, krylov);
    stats.linear_iterations += ks.iterations;
    if (!ks.converged) {
      stats.status = NewtonStatus::LinearSolveFailed;
      stats.failed_iteration = it;
      stats.message = "newton: linear solve failed at iteration " + std::to_string(it) + ": " + ks.message;
      return stats;
    }

    Scalar lambda(1);
    bool accepted = false;
    Vector<Scalar> trial, ftrial;
    Scalar tnorm(0);
    const int halvings = cfg.damping == Damping::Backtracking ? cfg.max_halvings : 0;
    for (int hstep = 0; hstep <= halvings; ++hstep) {
      trial = x + lambda * delta;
      ftrial = residual(trial);
      tnorm = inf_norm(ftrial);
      const bool finite = ftrial.allFinite();
      if (cfg.damping == Damping::None || (finite && (tnorm < fnorm || done(tnorm)))) {
        accepted = finite;
        break;
      }
      lambda /= Scalar(2);
    }
    if (!accepted) {
      const bool nonfinite = !ftrial.allFinite();
      stats.status = nonfinite ? NewtonStatus::NonFiniteResidual : NewtonStatus::LineSearchFailed;
      stats.failed_iteration = it;
      stats.message = nonfinite ? "newton: non-finite residual at iteration " + std::to_string(it)
                                : "newton: no residual decrease after " + std::to_string(halvings) + " halvings";
      return stats;
    }
    x = std::move(trial);
    f = std::move(ftrial);
    fnorm = tnorm;
    stats.iterations = it;
    stats.residual_history.push_back(static_cast<double>(fnorm));
  }
  if (done(fnorm)) {
    stats.status = NewtonStatus::Converged;
  } else {
    stats.status = NewtonStatus::MaxIterations;
    stats.message = "newton: maximum iterations reached";
  }
  return stats;
}

/// Largest |J_ij - (F_i(x + h e_j) - F_i(x - h e_j)) / 2h| / (1 + |J_ij|) over
/// the stored entries of J.
template <typename Scalar, typename ResidualFn>
double check_jacobian(const ResidualFn& residual, const SparseMatrix<Scalar>& jac, const Vector<Scalar>& x,
                      Scalar h) {
  if (!(h > Scalar(0))) throw std::invalid_argument("check_jacobian: h must be > 0");
  // Column access is easier on the transpose.
  const Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int> by_col = jac;
  double worst = 0.0;
  Vector<Scalar> xp = x, xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    const Vector<Scalar> fd = (residual(xp) - residual(xm)) / (xp[j] - xm[j]);
    xp[j] = x[j];
    xm[j] = x[j];
    for (typename Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>::InnerIterator it(by_col, j); it; ++it) {
      using std::abs;
      const double d = static_cast<double>(abs(it.value() - fd[it.row()]) / (Scalar(1) + abs(it.value())));
      worst = std::max(worst, d);
    }
  }
  return worst;
}

}  // namespace chemoflow::linalg
