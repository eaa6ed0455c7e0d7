#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "uista/linalg.hpp"

namespace uista {

/// S_λ(x) = sign(x)·max(0, |x| − λ)
inline double soft_threshold(double x, double lambda) noexcept {
  const double mag = std::abs(x) - lambda;
  if (mag <= 0.0) return 0.0;
  return x > 0.0 ? mag : -mag;
}

void soft_threshold_inplace(std::span<double> v, double lambda) noexcept;

/// ½‖Ax − y‖² + λ‖x‖₁
double objective(const Matrix& a, std::span<const double> y, double lambda,
                 std::span<const double> x);

/// ℓ1-regularized least squares instance. Construction enforces the step-size
/// condition τ‖A‖² ≤ 1.
class IstaProblem {
 public:
  /// Throws std::invalid_argument when λ or τ is not positive or τ‖A‖² > 1.
  IstaProblem(Matrix a, Vector y, double lambda, double tau);
  /// Same, with a precomputed ‖A‖_{2→2}.
  IstaProblem(Matrix a, Vector y, double lambda, double tau, double spectral_norm_a);

  const Matrix& a() const noexcept { return a_; }
  const Vector& y() const noexcept { return y_; }
  double lambda() const noexcept { return lambda_; }
  double tau() const noexcept { return tau_; }

 private:
  Matrix a_;
  Vector y_;
  double lambda_;
  double tau_;
};

struct IstaResult {
  Vector x;
  /// F(x^k) for k = 0..iters.
  std::vector<double> objective_trace;
};

/// x^{k+1} = S_{τλ}[x^k + τAᵀ(y − Ax^k)] from x⁰ = 0.
IstaResult ista_run(const IstaProblem& p, std::size_t iters);

/// Iterate after each step, for comparing with an unrolled network layer by layer.
std::vector<Vector> ista_iterates(const IstaProblem& p, std::size_t iters);

}  // namespace uista
