#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

#include "uista/random.hpp"

namespace uista {

/// Aborts with a message when a dimension contract is broken. Mismatched
/// shapes are programming errors, not recoverable conditions.
[[noreturn]] void contract_violation(const char* expr, const char* file, int line);

#define UISTA_EXPECT(cond) \
  ((cond) ? static_cast<void>(0) : ::uista::contract_violation(#cond, __FILE__, __LINE__))

using Vector = std::vector<double>;

/// Dense row-major matrix of finite doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of row-major entries. Throws std::invalid_argument if the
  /// size does not match or any entry is NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix from_column(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  Vector column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> v);

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

  Matrix& operator+=(const Matrix& rhs);
  Matrix& operator-=(const Matrix& rhs);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix lhs, const Matrix& rhs);
Matrix operator-(Matrix lhs, const Matrix& rhs);
Matrix operator*(double s, Matrix m);

Matrix transpose(const Matrix& m);
/// a * b
Matrix multiply(const Matrix& a, const Matrix& b);
/// aᵀ * b
Matrix multiply_tn(const Matrix& a, const Matrix& b);
/// a * bᵀ
Matrix multiply_nt(const Matrix& a, const Matrix& b);
Vector multiply(const Matrix& a, std::span<const double> x);
Vector multiply_tn(const Matrix& a, std::span<const double> x);

/// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y);

double frobenius_norm(const Matrix& m);
double frobenius_dot(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m);
double norm2(std::span<const double> v);
double column_norm(const Matrix& m, std::size_t j);
Matrix select_columns(const Matrix& m, std::span<const std::size_t> idx);

/// ‖MᵀM − I‖_F
double orthogonality_deviation(const Matrix& m);

struct PowerIterationOptions {
  double tol = 1e-10;
  std::size_t max_iters = 10'000;
  std::uint64_t seed = 0x5eed;
};

/// Thrown when power iteration has not met its residual tolerance.
class SpectralNormError : public std::runtime_error {
 public:
  SpectralNormError(double last_estimate, std::size_t iterations);
  double last_estimate() const noexcept { return last_estimate_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double last_estimate_;
  std::size_t iterations_;
};

/// ‖M‖_{2→2} by power iteration on MᵀM, started from the normalized all-ones
/// vector. Converged once the eigen-residual ‖MᵀMv − ρv‖ ≤ tol·ρ.
double spectral_norm(const Matrix& m, const PowerIterationOptions& opts = {});

/// Haar-distributed orthogonal matrix: QR of a seeded Gaussian matrix with the
/// signs of diag(R) folded into Q.
Matrix random_orthogonal(std::size_t n, std::uint64_t seed, std::uint64_t stream = streams::kDictionary);

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverse by LU with partial pivoting. Throws SingularMatrixError on a zero pivot.
Matrix inverse(const Matrix& m);

/// Orthogonal polar factor of a square nonsingular matrix (nearest orthogonal
/// matrix in Frobenius norm), by scaled Newton iteration.
Matrix polar_retraction(const Matrix& m);

}  // namespace uista
