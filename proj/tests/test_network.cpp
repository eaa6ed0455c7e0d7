#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "uista/bounds.hpp"
#include "uista/data.hpp"
#include "uista/ista.hpp"
#include "uista/network.hpp"
#include "uista/random.hpp"

using namespace uista;

namespace {

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * g(rng);
  return m;
}

}  // namespace

TEST_CASE("clip_ball") {
  CHECK(clip_ball(Vector{3, 4}, 2.5) == Vector{1.5, 2.0});
  CHECK(clip_ball(Vector{0.3, 0.4}, 2.5) == Vector{0.3, 0.4});
  CHECK(clip_ball(Vector{3, 4}, 5.0) == Vector{3, 4});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    Vector x(5), y(5);
    for (auto& v : x) v = 3 * g(rng);
    for (auto& v : y) v = 3 * g(rng);
    const Vector cx = clip_ball(x, 1.7);
    const Vector cy = clip_ball(y, 1.7);
    CHECK(norm2(cx) <= 1.7 + 1e-12);
    Vector d(5), dc(5);
    for (int i = 0; i < 5; ++i) {
      d[i] = x[i] - y[i];
      dc[i] = cx[i] - cy[i];
    }
    CHECK(norm2(dc) <= norm2(d) + 1e-12);
  }
}

TEST_CASE("config validation") {
  const auto a = MeasurementMatrix::gaussian(4, 6, 0);
  NetConfig c;
  CHECK_NOTHROW(c.validate(a));
  c.tau = 1.5;
  CHECK_THROWS_AS(c.validate(a), std::invalid_argument);
  c = NetConfig{};
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(a), std::invalid_argument);
  c = NetConfig{};
  c.b_out = 0.0;
  CHECK_THROWS_AS(c.validate(a), std::invalid_argument);

  NetParams p{Matrix::identity(6), std::nullopt};
  c = NetConfig{};
  c.hypothesis = HypothesisClass::H2;
  CHECK_THROWS_AS(forward(a, p, c, Matrix(4, 1)), std::invalid_argument);
}

TEST_CASE("single column, one layer, against hand arithmetic") {
  // A is 2x3, y is a single column; Φ a rotation in the first two coordinates.
  const Matrix am{{0.6, 0.0, 0.8}, {0.0, 1.0, 0.0}};
  const MeasurementMatrix a(am);
  const double c = std::cos(0.3), s = std::sin(0.3);
  const Matrix phi{{c, -s, 0}, {s, c, 0}, {0, 0, 1}};
  const Matrix y{{1.0}, {-0.5}};
  NetConfig cfg;
  cfg.layers = 1;
  cfg.tau = 0.9;
  cfg.lambda = 0.1;
  cfg.b_out = 10.0;

  double w[2][3];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      w[i][j] = 0.0;
      for (int k = 0; k < 3; ++k) w[i][j] += am(i, k) * phi(k, j);
    }
  double z[3];
  for (int j = 0; j < 3; ++j) {
    const double u = cfg.tau * (w[0][j] * 1.0 + w[1][j] * -0.5);
    z[j] = soft_threshold(u, cfg.tau * cfg.lambda);
  }
  double x[3];
  for (int i = 0; i < 3; ++i) x[i] = phi(i, 0) * z[0] + phi(i, 1) * z[1] + phi(i, 2) * z[2];

  const ForwardResult r = forward(a, NetParams{phi, std::nullopt}, cfg, y);
  for (int i = 0; i < 3; ++i) CHECK(r.output(i, 0) == doctest::Approx(x[i]).epsilon(1e-14));

  cfg.b_out = 0.2;
  const ForwardResult rc = forward(a, NetParams{phi, std::nullopt}, cfg, y);
  const double nx = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
  REQUIRE(nx > 0.2);
  for (int i = 0; i < 3; ++i) CHECK(rc.output(i, 0) == doctest::Approx(x[i] * 0.2 / nx).epsilon(1e-14));
  CHECK(rc.tape.clipped[0]);
}

TEST_CASE("forward agrees with the long-double reference") {
  const auto a = MeasurementMatrix::gaussian(5, 8, 3);
  NetConfig cfg;
  cfg.layers = 4;
  cfg.lambda = 0.03;
  cfg.b_out = 0.8;
  NetParams p{random_orthogonal(8, 1), random_orthogonal(8, 2)};
  cfg.hypothesis = HypothesisClass::H2;
  const Matrix x = gaussian(8, 6, 4, 0.4);
  const Matrix y = multiply(a.matrix(), x);
  const ForwardResult r = forward(a, p, cfg, y);
  const auto ref = oracle::network(a.matrix(), p, cfg, y, x, 0.0, LossKind::kMse);
  for (std::size_t j = 0; j < 6; ++j)
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(std::abs(r.output(i, j) - static_cast<double>(ref.output[j][i])) <= 1e-13);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    for (double v : r.tape.preactivations[l].values()) CHECK(std::isfinite(v));
  // The tape is consistent: post = S(pre).
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto pre = r.tape.preactivations[l].values();
    const auto post = r.tape.postactivations[l].values();
    for (std::size_t k = 0; k < pre.size(); ++k)
      CHECK(post[k] == soft_threshold(pre[k], cfg.tau * cfg.lambda));
  }
  CHECK(reconstruct(a, p, cfg, y) == r.output);
}

TEST_CASE("huge lambda kills every activation") {
  const auto a = MeasurementMatrix::gaussian(4, 6, 5);
  NetConfig cfg;
  cfg.lambda = 1e6;
  const Matrix y = gaussian(4, 3, 1);
  const ForwardResult r = forward(a, NetParams{random_orthogonal(6, 0), std::nullopt}, cfg, y);
  CHECK(frobenius_norm(r.output) == 0.0);
}

TEST_CASE("identity dictionary reproduces ISTA iterates exactly") {
  const auto a = MeasurementMatrix::gaussian(10, 16, 7);
  const Matrix x = multiply(Matrix::identity(16), sparse_codes(16, 3, 4, 7, streams::kTestSignals));
  const Matrix y = multiply(a.matrix(), x);
  NetConfig cfg;
  cfg.lambda = 0.02;
  cfg.b_out = 1e9;
  for (std::size_t L : {1u, 2u, 7u, 50u}) {
    cfg.layers = L;
    const Matrix codes = unrolled_codes(a.matrix(), Matrix::identity(16), cfg, y);
    const NetParams id{Matrix::identity(16), Matrix::identity(16)};
    cfg.hypothesis = HypothesisClass::H2;
    const Matrix out = reconstruct(a, id, cfg, y);
    cfg.hypothesis = HypothesisClass::H1;
    for (std::size_t j = 0; j < 4; ++j) {
      const IstaProblem p(a.matrix(), y.column(j), cfg.lambda, cfg.tau);
      const auto its = ista_iterates(p, L);
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(codes(i, j) == its.back()[i]);
        CHECK(out(i, j) == its.back()[i]);
      }
    }
  }
}

TEST_CASE("H1 equals H2 with psi = phi") {
  const auto a = MeasurementMatrix::gaussian(6, 9, 8);
  NetConfig cfg;
  cfg.b_out = 0.5;
  const Matrix phi = random_orthogonal(9, 3);
  const Matrix y = gaussian(6, 5, 2);
  const Matrix h1 = reconstruct(a, NetParams{phi, std::nullopt}, cfg, y);
  cfg.hypothesis = HypothesisClass::H2;
  const Matrix h2 = reconstruct(a, NetParams{phi, phi}, cfg, y);
  CHECK(h1 == h2);
}

TEST_CASE("batch order invariance") {
  const auto a = MeasurementMatrix::gaussian(6, 9, 9);
  NetConfig cfg;
  cfg.b_out = 0.7;
  const NetParams p{random_orthogonal(9, 4), std::nullopt};
  const Matrix y = gaussian(6, 7, 3);
  const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
  const Matrix out = reconstruct(a, p, cfg, y);
  const Matrix out_perm = reconstruct(a, p, cfg, select_columns(y, perm));
  CHECK(out_perm == select_columns(out, perm));
  // Disjoint column blocks give the same bits as the full pass.
  const std::vector<std::size_t> left{0, 1, 2}, right{3, 4, 5, 6};
  CHECK(reconstruct(a, p, cfg, select_columns(y, left)) == select_columns(out, left));
  CHECK(reconstruct(a, p, cfg, select_columns(y, right)) == select_columns(out, right));
}

TEST_CASE("output norm bound") {
  const auto a = MeasurementMatrix::gaussian(8, 12, 10);
  NetConfig cfg;
  cfg.layers = 6;
  cfg.lambda = 0.01;
  CHECK(output_norm_bound(a, cfg, Matrix(8, 3)) == 0.0);
  const Matrix y = gaussian(8, 4, 5);
  // n < N, ‖A‖ = 1, τ = 1 gives L‖Y‖_F.
  CHECK(output_norm_bound(a, cfg, y) == doctest::Approx(6.0 * frobenius_norm(y)).epsilon(1e-7));
  std::mt19937_64 rng(6);
  for (int t = 0; t < 1000; ++t) {
    const Matrix phi = random_orthogonal(12, 50 + t);
    const Matrix yy = gaussian(8, 3, 5000 + t, 0.5);
    const Matrix f = unrolled_codes(a.matrix(), phi, cfg, yy);
    CHECK(frobenius_norm(f) <= output_norm_bound(a, cfg, yy) + 1e-9);
  }
}

TEST_CASE("perturbation bound over layers") {
  const auto a = MeasurementMatrix::gaussian(6, 10, 12);
  const double c = contraction_factor(a, 1.0);
  for (std::size_t L = 1; L <= 10; ++L) {
    NetConfig cfg;
    cfg.layers = L;
    cfg.lambda = 0.02;
    for (int t = 0; t < 30; ++t) {
      const Matrix p1 = random_orthogonal(10, 100 * L + t);
      const Matrix p2 = random_orthogonal(10, 100 * L + t + 7000);
      const Matrix y = gaussian(6, 4, 9 * L + t);
      BoundInputs in;
      in.N = 10;
      in.n = 6;
      in.m = 4;
      in.L = L;
      in.spec_norm_a = a.spectral_norm();
      in.frob_y = frobenius_norm(y);
      in.contraction = c;
      const double lhs = frobenius_norm(unrolled_codes(a.matrix(), p1, cfg, y) -
                                        unrolled_codes(a.matrix(), p2, cfg, y));
      const double dw = spectral_norm(multiply(a.matrix(), p1) - multiply(a.matrix(), p2));
      CHECK(lhs <= k_constant(in, L) * dw + 1e-9);
    }
  }
}

TEST_CASE("parameter blob round trip and errors") {
  const auto dir = std::filesystem::temp_directory_path() / "uista_params_test";
  std::filesystem::create_directories(dir);
  const NetParams p1{random_orthogonal(5, 1), std::nullopt};
  write_params(dir / "h1.bin", p1);
  const NetParams r1 = read_params(dir / "h1.bin");
  CHECK(r1.phi == p1.phi);
  CHECK_FALSE(r1.psi.has_value());
  CHECK(std::filesystem::file_size(dir / "h1.bin") == 16 + 25 * 8);

  const NetParams p2{random_orthogonal(5, 2), random_orthogonal(5, 3)};
  write_params(dir / "h2.bin", p2);
  const NetParams r2 = read_params(dir / "h2.bin");
  CHECK(r2.phi == p2.phi);
  CHECK(*r2.psi == *p2.psi);

  {
    std::ifstream in(dir / "h1.bin", std::ios::binary);
    char head[16];
    in.read(head, 16);
    CHECK(std::string(head, 8) == "UISTAPRM");
    CHECK(head[8] == 1);
    CHECK(head[12] == 5);
  }
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTPARAMS_______";
  }
  CHECK_THROWS_AS(read_params(dir / "bad.bin"), ParamsFormatError);
  std::filesystem::resize_file(dir / "h2.bin", 16 + 10);
  CHECK_THROWS_AS(read_params(dir / "h2.bin"), ParamsFormatError);
}

TEST_CASE("net config JSON") {
  NetConfig c;
  c.layers = 7;
  c.lambda = 0.25;
  c.hypothesis = HypothesisClass::H2;
  const nlohmann::json j = c;
  CHECK(j.at("class") == "H2");
  const NetConfig back = j.get<NetConfig>();
  CHECK(back.layers == 7);
  CHECK(back.lambda == 0.25);
  CHECK(back.hypothesis == HypothesisClass::H2);
}
