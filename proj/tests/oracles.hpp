#pragma once

// Reference implementations used only by tests. None of them call into the
// library beyond Matrix storage and soft_threshold.

#include <cstddef>
#include <vector>

#include "uista/bounds.hpp"
#include "uista/linalg.hpp"
#include "uista/network.hpp"
#include "uista/train.hpp"

namespace oracle {

using uista::Matrix;
using uista::Vector;

/// Singular values by one-sided Jacobi rotations, descending.
std::vector<double> singular_values(const Matrix& m);

/// Accelerated proximal gradient (FISTA) for ½‖Ax−y‖² + λ‖x‖₁, step τ.
Vector fista(const Matrix& a, const Vector& y, double lambda, double tau, std::size_t iters);

/// ½‖Ax−y‖² + λ‖x‖₁ in long double.
long double lasso_objective(const Matrix& a, const Vector& y, double lambda, const Vector& x);

/// Unrolled network in long double, written out column by column.
struct NetEval {
  long double objective = 0.0L;
  std::vector<bool> pattern;  // threshold activity per preactivation, then clip flags
  std::vector<std::vector<long double>> codes;  // f_Φᴸ(y) per column
  std::vector<std::vector<long double>> output;  // σ(D f) per column
};

NetEval network(const Matrix& a, const uista::NetParams& p, const uista::NetConfig& cfg,
                const Matrix& y, const Matrix& x, double beta, uista::LossKind loss);

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Central differences (step h) of the long-double objective against the
/// supplied analytic gradients, skipping coordinates whose ±h evaluation
/// changes the kink pattern.
FdResult finite_difference_check(const Matrix& a, uista::NetParams p, const uista::NetConfig& cfg,
                                 const Matrix& y, const Matrix& x, double beta,
                                 uista::LossKind loss, const Matrix& grad_phi,
                                 const Matrix* grad_psi, double h = 1e-6);

/// ∫₀^α √(log(1 + β/t)) dt by tanh-sinh quadrature.
double dudley_integral(double alpha, double beta);

/// Bound totals recomputed term by term straight from the printed formulas.
struct BoundTotals {
  double k_l = 0.0;
  double m_l = 0.0;
  double total = 0.0;
  double corollary_total = 0.0;
  double simplified_total = 0.0;
};
BoundTotals bound_by_hand(const uista::BoundInputs& in);

}  // namespace oracle
