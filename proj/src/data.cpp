#include "uista/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "uista/random.hpp"

namespace uista {

MeasurementMatrix::MeasurementMatrix(Matrix a) : a_(std::move(a)), norm_(uista::spectral_norm(a_)) {}

MeasurementMatrix MeasurementMatrix::gaussian(std::size_t n, std::size_t N, std::uint64_t seed) {
  UISTA_EXPECT(n >= 1 && N >= 1);
  auto rng = make_rng(seed, streams::kMeasurement);
  std::normal_distribution<double> gauss;
  Matrix a(n, N);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& x : a.values()) x = scale * gauss(rng);
  a *= 1.0 / uista::spectral_norm(a);
  // Re-measure rather than assume exactly 1.
  const double norm = uista::spectral_norm(a);
  return MeasurementMatrix(std::move(a), norm);
}

double contraction_factor(const MeasurementMatrix& a, double tau) {
  const Matrix& m = a.matrix();
  Matrix c = multiply_tn(m, m);
  c *= -tau;
  for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += 1.0;
  try {
    return spectral_norm(c);
  } catch (const SpectralNormError& e) {
    if (tau * a.spectral_norm() * a.spectral_norm() <= 1.0 + 1e-12) return 1.0;
    throw;
  }
}

Dataset::Dataset(Matrix x, Matrix y) : signals_(std::move(x)), measurements_(std::move(y)) {
  for (std::size_t j = 0; j < signals_.cols(); ++j)
    b_in_ = std::max(b_in_, column_norm(signals_, j));
}

Dataset Dataset::subset(std::span<const std::size_t> columns) const {
  return Dataset(select_columns(signals_, columns), select_columns(measurements_, columns));
}

Dataset take_measurements(const MeasurementMatrix& a, Matrix signals) {
  UISTA_EXPECT(a.signal_dim() == signals.rows());
  Matrix y = multiply(a.matrix(), signals);
  return Dataset(std::move(signals), std::move(y));
}

void SynthConfig::validate() const {
  if (N == 0 || n == 0) throw std::invalid_argument("synthetic config: N and n must be positive");
  if (sparsity > N) throw std::invalid_argument("synthetic config: sparsity exceeds N");
  if (m_train == 0 || m_test == 0)
    throw std::invalid_argument("synthetic config: m_train and m_test must be positive");
}

Matrix sparse_codes(std::size_t N, std::size_t s, std::size_t m, std::uint64_t seed,
                    std::uint64_t stream) {
  UISTA_EXPECT(s <= N);
  auto rng = make_rng(seed, stream);
  std::normal_distribution<double> gauss;
  Matrix z(N, m);
  std::vector<std::size_t> perm(N);
  for (std::size_t j = 0; j < m; ++j) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Partial Fisher-Yates: the first s entries are a uniform s-subset.
    for (std::size_t k = 0; k < s; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, N - 1);
      std::swap(perm[k], perm[pick(rng)]);
    }
    for (std::size_t k = 0; k < s; ++k) {
      double v = gauss(rng);
      while (v == 0.0) v = gauss(rng);
      z(perm[k], j) = v;
    }
  }
  return z;
}

SyntheticProblem generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  auto a = MeasurementMatrix::gaussian(cfg.n, cfg.N, cfg.seed);
  Matrix phi = random_orthogonal(cfg.N, cfg.seed);
  Matrix x_train =
      multiply(phi, sparse_codes(cfg.N, cfg.sparsity, cfg.m_train, cfg.seed, streams::kTrainSignals));
  Matrix x_test =
      multiply(phi, sparse_codes(cfg.N, cfg.sparsity, cfg.m_test, cfg.seed, streams::kTestSignals));
  Dataset train = take_measurements(a, std::move(x_train));
  Dataset test = take_measurements(a, std::move(x_test));
  return SyntheticProblem{std::move(a), std::move(phi), std::move(train), std::move(test)};
}

namespace {

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

}  // namespace

Matrix load_idx_images(const std::filesystem::path& path, std::optional<std::size_t> limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open IDX file: " + path.string());

  std::array<unsigned char, 16> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() < 4) throw IdxLengthError("IDX file truncated in header: " + path.string());
  const std::uint32_t magic = read_be32(header.data());
  if (magic != 0x00000803u) {
    throw IdxFormatError("not an IDX3 unsigned-byte image file (magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + "): " + path.string());
  }
  if (in.gcount() < 16) throw IdxLengthError("IDX file truncated in header: " + path.string());

  const std::size_t count = read_be32(header.data() + 4);
  const std::size_t rows = read_be32(header.data() + 8);
  const std::size_t cols = read_be32(header.data() + 12);
  const std::size_t pixels = rows * cols;
  const std::size_t m = limit ? std::min(count, *limit) : count;

  std::vector<unsigned char> bytes(pixels * m);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw IdxLengthError("IDX file truncated: expected " + std::to_string(bytes.size()) +
                         " pixel bytes, got " + std::to_string(in.gcount()) + ": " +
                         path.string());
  }

  Matrix x(pixels, m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < pixels; ++p) x(p, j) = bytes[j * pixels + p] / 255.0;
  return x;
}

}  // namespace uista
