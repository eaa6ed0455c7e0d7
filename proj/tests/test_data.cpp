#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "uista/data.hpp"
#include "uista/random.hpp"

using namespace uista;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("uista_test_" + name);
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
          static_cast<char>(v)};
}

std::string idx_header(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  return be32(0x803) + be32(count) + be32(rows) + be32(cols);
}

std::size_t nonzeros(const Matrix& m, std::size_t j, double tol) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) c += std::abs(m(i, j)) > tol;
  return c;
}

}  // namespace

TEST_CASE("gaussian measurement matrix has unit norm") {
  const auto a = MeasurementMatrix::gaussian(80, 120, 0);
  CHECK(a.measurements() == 80);
  CHECK(a.signal_dim() == 120);
  CHECK(std::abs(a.spectral_norm() - 1.0) <= 1e-8);
  CHECK(std::abs(oracle::singular_values(a.matrix()).front() - 1.0) <= 1e-8);
}

TEST_CASE("contraction factor") {
  SUBCASE("n < N with tau ||A||^2 = 1 gives 1") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto a = MeasurementMatrix::gaussian(20, 40, seed);
      const double tau = 1.0 / (a.spectral_norm() * a.spectral_norm());
      CHECK(std::abs(contraction_factor(a, tau) - 1.0) <= 1e-8);
    }
  }
  SUBCASE("tall A contracts strictly, matching the SVD oracle") {
    const auto a = MeasurementMatrix::gaussian(60, 20, 3);
    const auto s = oracle::singular_values(a.matrix());
    const double tau = 1.0;
    const double expect = std::max(std::abs(1 - tau * s.front() * s.front()),
                                   std::abs(1 - tau * s.back() * s.back()));
    CHECK(contraction_factor(a, tau) == doctest::Approx(expect).epsilon(1e-8));
    CHECK(contraction_factor(a, tau) < 1.0);
  }
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  cfg.m_train = 50;
  cfg.m_test = 30;
  const auto p = generate_synthetic(cfg);
  CHECK(p.train.size() == 50);
  CHECK(p.test.size() == 30);
  CHECK(orthogonality_deviation(p.phi_true) <= 1e-10);

  SUBCASE("codes are exactly s-sparse") {
    const Matrix z = multiply_tn(p.phi_true, p.train.signals());
    for (std::size_t j = 0; j < z.cols(); ++j) CHECK(nonzeros(z, j, 1e-9) == 10);
  }
  SUBCASE("measurements are A X") {
    CHECK(p.train.measurements() == multiply(p.a.matrix(), p.train.signals()));
  }
  SUBCASE("b_in is an attained maximum") {
    double best = 0.0;
    for (std::size_t j = 0; j < p.train.size(); ++j) {
      const double c = column_norm(p.train.signals(), j);
      CHECK(c <= p.train.b_in());
      best = std::max(best, c);
    }
    CHECK(best == p.train.b_in());
  }
  SUBCASE("regeneration is bit-identical, seeds differ") {
    const auto q = generate_synthetic(cfg);
    CHECK(q.train.signals() == p.train.signals());
    CHECK(q.test.measurements() == p.test.measurements());
    CHECK(q.a.matrix() == p.a.matrix());
    SynthConfig other = cfg;
    other.seed = 1;
    CHECK_FALSE(generate_synthetic(other).train.signals() == p.train.signals());
  }
  SUBCASE("train and test are independent draws") {
    CHECK_FALSE(p.train.signals().column(0) == p.test.signals().column(0));
  }
}

TEST_CASE("sparsity zero gives zero signals") {
  SynthConfig cfg;
  cfg.sparsity = 0;
  cfg.m_train = 5;
  cfg.m_test = 5;
  const auto p = generate_synthetic(cfg);
  CHECK(frobenius_norm(p.train.signals()) == 0.0);
  CHECK(p.train.b_in() == 0.0);
}

TEST_CASE("synthetic config validation") {
  SynthConfig cfg;
  cfg.sparsity = 121;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.m_train = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SynthConfig{};
  cfg.n = 150;  // overdetermined is allowed
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("take_measurements") {
  const MeasurementMatrix id(Matrix::identity(3));
  const Matrix x{{1, 0}, {2, 0}, {3, 0}};
  const Dataset d = take_measurements(id, x);
  CHECK(d.measurements() == x);
  CHECK(d.b_in() == doctest::Approx(std::sqrt(14.0)));

  const auto a = MeasurementMatrix::gaussian(4, 3, 2);
  const Dataset e1 = take_measurements(a, Matrix{{1}, {0}, {0}});
  for (std::size_t i = 0; i < 4; ++i) CHECK(e1.measurements()(i, 0) == a.matrix()(i, 0));
  const Dataset zero = take_measurements(a, Matrix(3, 2));
  CHECK(frobenius_norm(zero.measurements()) == 0.0);
  CHECK(zero.b_in() == 0.0);
}

TEST_CASE("dataset subset keeps pairs together") {
  SynthConfig cfg;
  cfg.m_train = 10;
  cfg.m_test = 1;
  const auto p = generate_synthetic(cfg);
  const std::vector<std::size_t> idx{7, 2};
  const Dataset s = p.train.subset(idx);
  CHECK(s.size() == 2);
  CHECK(s.signals().column(0) == p.train.signals().column(7));
  CHECK(s.measurements().column(1) == p.train.measurements().column(2));
}

TEST_CASE("IDX loader") {
  SUBCASE("hand-built 2x2 image") {
    const auto path = temp_file("one.idx");
    write_bytes(path, idx_header(1, 2, 2) + std::string{'\0', '\xff', '\0', '\xff'});
    const Matrix m = load_idx_images(path);
    CHECK(m.rows() == 4);
    CHECK(m.cols() == 1);
    CHECK(m.column(0) == Vector{0, 1, 0, 1});
  }
  SUBCASE("columns are images, limit clamps") {
    const auto path = temp_file("three.idx");
    std::string body;
    for (int img = 0; img < 3; ++img)
      for (int px = 0; px < 4; ++px) body.push_back(static_cast<char>(img * 10 + px));
    write_bytes(path, idx_header(3, 2, 2) + body);
    const Matrix all = load_idx_images(path, 100);
    CHECK(all.cols() == 3);
    CHECK(all(1, 2) == doctest::Approx(21.0 / 255.0));
    CHECK(load_idx_images(path, 2).cols() == 2);
  }
  SUBCASE("wrong magic") {
    const auto path = temp_file("magic.idx");
    write_bytes(path, be32(0x801) + be32(1) + be32(1) + be32(1) + std::string(1, '\0'));
    CHECK_THROWS_AS(load_idx_images(path), IdxFormatError);
  }
  SUBCASE("truncated body and header") {
    const auto path = temp_file("short.idx");
    write_bytes(path, idx_header(2, 2, 2) + std::string(5, '\0'));
    CHECK_THROWS_AS(load_idx_images(path), IdxLengthError);
    write_bytes(path, be32(0x803) + be32(1));
    CHECK_THROWS_AS(load_idx_images(path), IdxLengthError);
  }
  SUBCASE("missing file names the path") {
    const auto path = temp_file("does_not_exist.idx");
    std::filesystem::remove(path);
    try {
      load_idx_images(path);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
  }
}

TEST_CASE("MNIST file if present") {
  const char* env = std::getenv("UISTA_MNIST_IMAGES");
  const std::filesystem::path path = env ? env : "/root/data/mnist-images-idx3-ubyte";
  if (!std::filesystem::exists(path)) return;
  const Matrix m = load_idx_images(path, 100);
  CHECK(m.rows() == 784);
  CHECK(m.cols() == 100);
  for (double v : m.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
