#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace chemoflow {

/// Chemotactic sensitivity χ(n). Linear mode is the classical Keller-Segel law
/// κ·n; constant mode returns κ regardless of density.
struct ChemoLaw {
  enum class Kind { Linear, Constant };
  Kind kind = Kind::Linear;
  double coefficient = 0.0;
};

/// Coefficients of the cross-diffusion system. Index 1 is the predator, 2 the prey.
struct ModelParams {
  double a1 = 0.0, a2 = 0.0;
  double b1 = 0.0, b2 = 0.0;
  double c1 = 0.0, c2 = 0.0;
  double d1 = 1.0, d2 = 1.0;
  ChemoLaw chemo1;
  ChemoLaw chemo2;
  double alpha1 = 1.0, alpha2 = 1.0;
  double beta1 = 0.0, beta2 = 0.0;
  double nu = 0.0;
  double k_conv = 1.0;
  Eigen::Vector2d grad_phi = Eigen::Vector2d::Zero();
  /// +1: F2 gains b2·n1 (predation benefit). -1: competitive form.
  int f2_coupling_sign = 1;

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("model: ") + name + " must be >= 0");
    };
    nonneg(a1, "a1"); nonneg(a2, "a2");
    nonneg(b1, "b1"); nonneg(b2, "b2");
    nonneg(c1, "c1"); nonneg(c2, "c2");
    nonneg(alpha1, "alpha1"); nonneg(alpha2, "alpha2");
    nonneg(beta1, "beta1"); nonneg(beta2, "beta2");
    nonneg(nu, "nu");
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw std::invalid_argument("model: d1, d2 must be > 0");
    if (f2_coupling_sign != 1 && f2_coupling_sign != -1)
      throw std::invalid_argument("model: f2_coupling_sign must be +1 or -1");
  }
};

template <typename Scalar>
struct Reaction {
  Scalar f1;
  Scalar f2;
};

/// Lotka-Volterra kinetics F1 = n1(a1 - b1 n1 - c1 n2), F2 = n2(a2 - c2 n2 + s b2 n1).
template <typename Scalar>
Reaction<Scalar> reaction(Scalar n1, Scalar n2, const ModelParams& p) {
  const Scalar s = static_cast<Scalar>(p.f2_coupling_sign);
  return {n1 * (Scalar(p.a1) - Scalar(p.b1) * n1 - Scalar(p.c1) * n2),
          n2 * (Scalar(p.a2) - Scalar(p.c2) * n2 + s * Scalar(p.b2) * n1)};
}

/// Partial derivatives of (F1, F2) with respect to (n1, n2), row-major.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 2> reaction_jacobian(Scalar n1, Scalar n2, const ModelParams& p) {
  const Scalar s = static_cast<Scalar>(p.f2_coupling_sign);
  Eigen::Matrix<Scalar, 2, 2> j;
  j(0, 0) = Scalar(p.a1) - 2 * Scalar(p.b1) * n1 - Scalar(p.c1) * n2;
  j(0, 1) = -Scalar(p.c1) * n1;
  j(1, 0) = s * Scalar(p.b2) * n2;
  j(1, 1) = Scalar(p.a2) - 2 * Scalar(p.c2) * n2 + s * Scalar(p.b2) * n1;
  return j;
}

template <typename Scalar>
Scalar chemo_sensitivity(Scalar n, const ChemoLaw& law) {
  return law.kind == ChemoLaw::Kind::Linear ? Scalar(law.coefficient) * n : Scalar(law.coefficient);
}

template <typename Scalar>
Scalar chemo_sensitivity_derivative(Scalar /*n*/, const ChemoLaw& law) {
  return law.kind == ChemoLaw::Kind::Linear ? Scalar(law.coefficient) : Scalar(0);
}

/// Buoyancy weight of the populations; satisfies |Q| <= 1 + |n1| + |n2|.
template <typename Scalar>
Scalar buoyancy_Q(Scalar n1, Scalar n2) {
  return n1 + n2;
}

template <typename Scalar>
struct StationaryState {
  Scalar n1;
  Scalar n2;
};

/// Homogeneous coexistence state of the competitive kinetics
/// (root of F with f2_coupling_sign = -1).
template <typename Scalar = double>
StationaryState<Scalar> stationary_state(const ModelParams& p) {
  const Scalar a1 = p.a1, a2 = p.a2, b1 = p.b1, b2 = p.b2, c1 = p.c1, c2 = p.c2;
  const Scalar den = b2 * c1 - b1 * c2;
  const Scalar scale = std::abs(b2 * c1) + std::abs(b1 * c2);
  if (!(std::abs(den) > Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale))
    throw std::domain_error("stationary_state: degenerate kinetics, b2*c1 - b1*c2 = 0");
  return {(a2 * c1 - a1 * c2) / den, (a2 * b1 - a1 * b2) / (-den)};
}

}  // namespace chemoflow
