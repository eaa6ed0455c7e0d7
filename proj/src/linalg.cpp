#include "uista/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <string>

#include "uista/random.hpp"

namespace uista {

void contract_violation(const char* expr, const char* file, int line) {
  std::fprintf(stderr, "uista: contract violated: %s (%s:%d)\n", expr, file, line);
  std::abort();
}

namespace {

void require_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("matrix entry is not finite");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("matrix entries length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  require_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_column(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Vector Matrix::column(std::size_t j) const {
  UISTA_EXPECT(j < cols_);
  Vector v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

void Matrix::set_column(std::size_t j, std::span<const double> v) {
  UISTA_EXPECT(j < cols_ && v.size() == rows_);
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
  UISTA_EXPECT(rows_ == rhs.rows_ && cols_ == rhs.cols_);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += rhs.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
  UISTA_EXPECT(rows_ == rhs.rows_ && cols_ == rhs.cols_);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= rhs.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
Matrix operator*(double s, Matrix m) { return m *= s; }

Matrix transpose(const Matrix& m) {
  constexpr std::size_t kTile = 32;
  Matrix t(m.cols(), m.rows());
  for (std::size_t i0 = 0; i0 < m.rows(); i0 += kTile)
    for (std::size_t j0 = 0; j0 < m.cols(); j0 += kTile) {
      const std::size_t i1 = std::min(m.rows(), i0 + kTile), j1 = std::min(m.cols(), j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) t(j, i) = m(i, j);
    }
  return t;
}

// All products accumulate over the inner index in ascending order starting
// from 0.0; the vector kernels below follow the same order so single-column
// matrix products and matrix-vector products agree bit for bit.
// Blocked over (j, k) so a panel of b stays in cache, four rows of a at a
// time. Each entry still sums k = 0, 1, ... in order.
Matrix multiply(const Matrix& a, const Matrix& b) {
  UISTA_EXPECT(a.cols() == b.rows());
  constexpr std::size_t kBlockJ = 256;
  constexpr std::size_t kBlockK = 128;
  Matrix c(a.rows(), b.cols());
  const std::size_t nr = a.rows(), nk = a.cols(), nc = b.cols();
  for (std::size_t j0 = 0; j0 < nc; j0 += kBlockJ) {
    const std::size_t j1 = std::min(nc, j0 + kBlockJ);
    for (std::size_t k0 = 0; k0 < nk; k0 += kBlockK) {
      const std::size_t k1 = std::min(nk, k0 + kBlockK);
      std::size_t i = 0;
      for (; i + 4 <= nr; i += 4) {
        double* c0 = c.row(i).data();
        double* c1 = c.row(i + 1).data();
        double* c2 = c.row(i + 2).data();
        double* c3 = c.row(i + 3).data();
        for (std::size_t k = k0; k < k1; ++k) {
          const double a0 = a(i, k), a1 = a(i + 1, k), a2 = a(i + 2, k), a3 = a(i + 3, k);
          const double* bk = b.row(k).data();
          for (std::size_t j = j0; j < j1; ++j) {
            const double v = bk[j];
            c0[j] += a0 * v;
            c1[j] += a1 * v;
            c2[j] += a2 * v;
            c3[j] += a3 * v;
          }
        }
      }
      for (; i < nr; ++i) {
        double* ci = c.row(i).data();
        for (std::size_t k = k0; k < k1; ++k) {
          const double aik = a(i, k);
          const double* bk = b.row(k).data();
          for (std::size_t j = j0; j < j1; ++j) ci[j] += aik * bk[j];
        }
      }
    }
  }
  return c;
}

Matrix multiply_tn(const Matrix& a, const Matrix& b) {
  UISTA_EXPECT(a.rows() == b.rows());
  return multiply(transpose(a), b);
}

Matrix multiply_nt(const Matrix& a, const Matrix& b) {
  UISTA_EXPECT(a.cols() == b.cols());
  // Same per-entry summation order as the dot-product form, but vectorizable.
  return multiply(a, transpose(b));
}

Vector multiply(const Matrix& a, std::span<const double> x) {
  UISTA_EXPECT(a.cols() == x.size());
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) y[i] += ai[k] * x[k];
  }
  return y;
}

Vector multiply_tn(const Matrix& a, std::span<const double> x) {
  UISTA_EXPECT(a.rows() == x.size());
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) y[k] += ai[k] * x[i];
  }
  return y;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  UISTA_EXPECT(x.rows() == y.rows() && x.cols() == y.cols());
  auto xs = x.values();
  auto ys = y.values();
  for (std::size_t k = 0; k < xs.size(); ++k) ys[k] += alpha * xs[k];
}

double frobenius_norm(const Matrix& m) { return norm2(m.values()); }

double frobenius_dot(const Matrix& a, const Matrix& b) {
  UISTA_EXPECT(a.rows() == b.rows() && a.cols() == b.cols());
  auto as = a.values();
  auto bs = b.values();
  double s = 0.0;
  for (std::size_t k = 0; k < as.size(); ++k) s += as[k] * bs[k];
  return s;
}

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double x : m.values()) r = std::max(r, std::abs(x));
  return r;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double column_norm(const Matrix& m, std::size_t j) {
  UISTA_EXPECT(j < m.cols());
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

Matrix select_columns(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(m.rows(), idx.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < idx.size(); ++c) {
      UISTA_EXPECT(idx[c] < m.cols());
      out(i, c) = m(i, idx[c]);
    }
  return out;
}

double orthogonality_deviation(const Matrix& m) {
  Matrix g = multiply_tn(m, m);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return frobenius_norm(g);
}

SpectralNormError::SpectralNormError(double last_estimate, std::size_t iterations)
    : std::runtime_error("power iteration did not converge after " +
                         std::to_string(iterations) + " iterations (last estimate " +
                         std::to_string(last_estimate) + ")"),
      last_estimate_(last_estimate),
      iterations_(iterations) {}

double spectral_norm(const Matrix& m, const PowerIterationOptions& opts) {
  UISTA_EXPECT(!m.empty());
  if (!(opts.tol > 0.0)) throw std::invalid_argument("spectral_norm: tol must be positive");
  if (max_abs(m) == 0.0) return 0.0;

  const std::size_t n = m.cols();
  Vector v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  auto rng = make_rng(opts.seed, 0);
  std::normal_distribution<double> gauss;
  double rho = 0.0;

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    const Vector w = multiply(m, v);
    Vector u = multiply_tn(m, w);
    rho = 0.0;
    for (double x : w) rho += x * x;
    const double unorm = norm2(u);
    if (unorm == 0.0) {
      // v fell into the null space; nudge it out.
      for (double& x : v) x += 1e-3 * gauss(rng);
      const double vn = norm2(v);
      for (double& x : v) x /= vn;
      continue;
    }
    double res = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double r = u[k] - rho * v[k];
      res += r * r;
    }
    if (std::sqrt(res) <= opts.tol * rho) return std::sqrt(rho);
    for (std::size_t k = 0; k < n; ++k) v[k] = u[k] / unorm;
  }
  throw SpectralNormError(std::sqrt(rho), opts.max_iters);
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  UISTA_EXPECT(n >= 1);
  auto rng = make_rng(seed, stream);
  std::normal_distribution<double> gauss;
  Matrix g(n, n);
  for (double& x : g.values()) x = gauss(rng);

  // Householder QR; reflector k acts on rows k..n-1.
  std::vector<Vector> reflectors;
  Vector rdiag(n);
  for (std::size_t k = 0; k < n; ++k) {
    double nx = 0.0;
    for (std::size_t i = k; i < n; ++i) nx += g(i, k) * g(i, k);
    nx = std::sqrt(nx);
    if (k + 1 == n || nx == 0.0) {
      rdiag[k] = g(k, k);
      reflectors.emplace_back();
      continue;
    }
    const double alpha = g(k, k) > 0.0 ? -nx : nx;
    Vector v(n - k);
    for (std::size_t i = k; i < n; ++i) v[i - k] = g(i, k);
    v[0] -= alpha;
    const double vn = norm2(v);
    for (double& x : v) x /= vn;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < n; ++i) s += v[i - k] * g(i, j);
      for (std::size_t i = k; i < n; ++i) g(i, j) -= 2.0 * s * v[i - k];
    }
    rdiag[k] = g(k, k);
    reflectors.push_back(std::move(v));
  }

  Matrix q = Matrix::identity(n);
  for (std::size_t kk = n; kk-- > 0;) {
    const Vector& v = reflectors[kk];
    if (v.empty()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = kk; i < n; ++i) s += v[i - kk] * q(i, j);
      for (std::size_t i = kk; i < n; ++i) q(i, j) -= 2.0 * s * v[i - kk];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (rdiag[j] < 0.0)
      for (std::size_t i = 0; i < n; ++i) q(i, j) = -q(i, j);
  }
  return q;
}

Matrix inverse(const Matrix& m) {
  UISTA_EXPECT(m.rows() == m.cols());
  const std::size_t n = m.rows();
  Matrix lu = m;
  Matrix inv = Matrix::identity(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(p, k))) p = i;
    if (lu(p, k) == 0.0) throw SingularMatrixError("matrix is singular");
    if (p != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(p).begin());
      std::swap_ranges(inv.row(k).begin(), inv.row(k).end(), inv.row(p).begin());
    }
    const double piv = lu(k, k);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = lu(i, k) / piv;
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
      for (std::size_t j = 0; j < n; ++j) inv(i, j) -= f * inv(k, j);
    }
    for (std::size_t j = k; j < n; ++j) lu(k, j) /= piv;
    for (std::size_t j = 0; j < n; ++j) inv(k, j) /= piv;
  }
  return inv;
}

Matrix polar_retraction(const Matrix& m) {
  UISTA_EXPECT(m.rows() == m.cols() && !m.empty());
  constexpr double kMinSingular = 1e-12;
  Matrix inv = inverse(m);
  double inv_norm;
  try {
    inv_norm = spectral_norm(inv, {.tol = 1e-8, .max_iters = 10'000});
  } catch (const SpectralNormError& e) {
    inv_norm = e.last_estimate();
  }
  if (!(1.0 / inv_norm > kMinSingular))
    throw SingularMatrixError("polar_retraction: matrix is numerically singular");

  const double tiny = 1e-13 * std::sqrt(static_cast<double>(m.rows()));
  Matrix x = m;
  bool scaled = true;
  for (int it = 0; it < 100; ++it) {
    if (it > 0) inv = inverse(x);
    const double zeta = scaled ? std::sqrt(frobenius_norm(inv) / frobenius_norm(x)) : 1.0;
    Matrix next = (0.5 * zeta) * x;
    axpy(0.5 / zeta, transpose(inv), next);
    const double step = frobenius_norm(next - x);
    x = std::move(next);
    if (step <= tiny) break;
    // Scaling only helps far from convergence; near it, plain Newton is quadratic.
    if (step <= 1e-2) scaled = false;
  }
  return x;
}

}  // namespace uista
