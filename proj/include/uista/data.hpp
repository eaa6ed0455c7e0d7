#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>

#include "uista/linalg.hpp"

namespace uista {

/// Fixed n×N sensing operator with its spectral norm computed once.
class MeasurementMatrix {
 public:
  explicit MeasurementMatrix(Matrix a);

  /// i.i.d. Gaussian n×N, scaled by 1/√n and then rescaled to unit spectral norm.
  static MeasurementMatrix gaussian(std::size_t n, std::size_t N, std::uint64_t seed);

  const Matrix& matrix() const noexcept { return a_; }
  double spectral_norm() const noexcept { return norm_; }
  std::size_t measurements() const noexcept { return a_.rows(); }
  std::size_t signal_dim() const noexcept { return a_.cols(); }

 private:
  MeasurementMatrix(Matrix a, double norm) : a_(std::move(a)), norm_(norm) {}
  Matrix a_;
  double norm_;
};

/// ‖I − τAᵀA‖_{2→2}, measured by power iteration. If the iteration stalls
/// (clustered top spectrum) and τ‖A‖² ≤ 1, the proven upper bound 1 is
/// returned instead.
double contraction_factor(const MeasurementMatrix& a, double tau);

/// Signals (N×m) with measurements Y = A·X. Only take_measurements builds one,
/// so Y never drifts from A·X.
class Dataset {
 public:
  const Matrix& signals() const noexcept { return signals_; }
  const Matrix& measurements() const noexcept { return measurements_; }
  /// Largest column ℓ2-norm of the signals.
  double b_in() const noexcept { return b_in_; }
  std::size_t size() const noexcept { return signals_.cols(); }

  Dataset subset(std::span<const std::size_t> columns) const;

 private:
  friend Dataset take_measurements(const MeasurementMatrix& a, Matrix signals);
  Dataset(Matrix x, Matrix y);
  Matrix signals_;
  Matrix measurements_;
  double b_in_ = 0.0;
};

Dataset take_measurements(const MeasurementMatrix& a, Matrix signals);

struct SynthConfig {
  std::size_t N = 120;
  std::size_t n = 80;
  std::size_t sparsity = 10;
  std::size_t m_train = 1000;
  std::size_t m_test = 2000;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on s > N or zero sizes. n > N (overdetermined)
  /// is allowed; the N sweep at fixed n needs it.
  void validate() const;
};

struct SyntheticProblem {
  MeasurementMatrix a;
  Matrix phi_true;
  Dataset train;
  Dataset test;
};

/// Signals x = Φ_true·z with z s-sparse (uniform support, standard normal
/// nonzeros); train and test are independent draws.
SyntheticProblem generate_synthetic(const SynthConfig& cfg);

/// Draws m columns z that are exactly s-sparse.
Matrix sparse_codes(std::size_t N, std::size_t s, std::size_t m, std::uint64_t seed,
                    std::uint64_t stream);

class IdxFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IdxLengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an IDX3 unsigned-byte image file into an (rows·cols)×count matrix,
/// pixels scaled to [0,1], column j = image j flattened row-major.
Matrix load_idx_images(const std::filesystem::path& path,
                       std::optional<std::size_t> limit = std::nullopt);

}  // namespace uista
