#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>

#include <json.hpp>

#include "uista/data.hpp"
#include "uista/network.hpp"

namespace uista {

struct BoundInputs {
  std::size_t N = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t L = 0;
  double tau = 1.0;
  double spec_norm_a = 0.0;
  double frob_y = 0.0;
  double contraction = 0.0;
  double b_in = 1.0;
  double b_out = 1.0;
  double delta = 0.05;

  /// Throws std::invalid_argument; delta must lie strictly inside (0,1).
  void validate() const;
  /// τ‖A‖² ≤ 1, the regime in which the simplified constants apply.
  bool step_condition() const noexcept { return tau * spec_norm_a * spec_norm_a <= 1.0 + 1e-12; }
};

/// Exact recursion K₁ = B₁, K_{l+1} = c·K_l + B_{l+1}, with
/// B_l = τ‖Y‖_F(2 + 2τ‖A‖²Z_{l−1}) and Z_l = Σ_{k<l} cᵏ.
double k_constant(const BoundInputs& in, std::size_t L);

/// τ‖A‖‖Y‖_F Σ_{k<L} cᵏ.
double m_constant(const BoundInputs& in, std::size_t L);

/// n·log(1 + 2/ε): log-covering number of the unit ball in Rⁿ.
double covering_log_ball(std::size_t n, double eps);

/// N²·log(1 + 4M_L/ε) + nN·log(1 + 4‖A‖K_L/ε).
double covering_log_m2(const BoundInputs& in, double k_l, double m_l, double eps);

/// α√(log(e(1 + β/α))), an upper bound for ∫₀^α √(log(1 + β/t)) dt.
double dudley_closed_form(double alpha, double beta);

struct BoundReport {
  BoundInputs inputs;
  double k_l = 0.0;
  double m_l = 0.0;
  double radius = 0.0;
  double rademacher_bound = 0.0;
  double term_w_cover = 0.0;
  double term_dict_cover = 0.0;
  double term_confidence = 0.0;
  double total = 0.0;
  // Alternative constant placement, reported alongside.
  double corollary_term1 = 0.0;
  double corollary_term2 = 0.0;
  double corollary_total = 0.0;
  double simplified_total = 0.0;
  bool step_condition = false;
};

BoundReport generalization_bound(const BoundInputs& in);

void to_json(nlohmann::json& j, const BoundInputs& in);
void from_json(const nlohmann::json& j, BoundInputs& in);
void to_json(nlohmann::json& j, const BoundReport& r);

/// Inputs for a concrete run: A and Y measured, contraction computed.
BoundInputs inputs_for_run(const MeasurementMatrix& a, const NetConfig& cfg, const Dataset& train,
                           double delta);

class UnsupportedError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo estimate of E sup (1/m)Σ ε_ik M_ik over the H2 outputs
/// σ(Ψ f_Φᴸ(Y)) for N = 2. Φ ranges over `grid` rotation angles times the
/// reflection bit; the sup over Ψ ∈ O(2) is taken exactly (nuclear norm).
/// `threads` = 0 picks the hardware concurrency; the result does not depend on it.
MonteCarloEstimate mc_rademacher_toy(const MeasurementMatrix& a, const NetConfig& cfg,
                                     const Matrix& y, std::size_t trials, std::size_t grid,
                                     std::uint64_t seed, unsigned threads = 0);

/// Element of O(2): rotation by θ, or the reflection [[c, s], [s, −c]].
Matrix orthogonal2(double theta, bool reflect);

}  // namespace uista
