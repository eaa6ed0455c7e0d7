#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "uista/data.hpp"
#include "uista/ista.hpp"
#include "uista/random.hpp"

using namespace uista;

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(2.0, 1.0) == 1.0);
  CHECK(soft_threshold(-2.0, 1.0) == -1.0);
  CHECK(soft_threshold(0.5, 1.0) == 0.0);
  CHECK(soft_threshold(1.0, 1.0) == 0.0);
  for (double x : {-3.5, -1e-300, 0.0, 2.25, 1e10}) CHECK(soft_threshold(x, 0.0) == x);
  Vector v{3, -0.2, -4};
  soft_threshold_inplace(v, 0.5);
  CHECK(v == Vector{2.5, 0, -3.5});
}

TEST_CASE("objective") {
  const Matrix id = Matrix::identity(2);
  CHECK(objective(id, Vector{1, 1}, 1.0, Vector{1, 1}) == 2.0);
  CHECK(objective(id, Vector{3, 4}, 0.7, Vector{0, 0}) == 12.5);
  CHECK(objective(id, Vector{0, 0}, 0.7, Vector{0, 0}) == 0.0);
}

TEST_CASE("problem construction enforces the step condition") {
  const Matrix a{{2.0}};
  CHECK_THROWS_AS(IstaProblem(a, Vector{1}, 0.1, 1.0), std::invalid_argument);
  CHECK_NOTHROW(IstaProblem(a, Vector{1}, 0.1, 0.25));
  CHECK_THROWS_AS(IstaProblem(a, Vector{1}, 0.0, 0.25), std::invalid_argument);
  CHECK_THROWS_AS(IstaProblem(a, Vector{1}, 0.1, -1.0), std::invalid_argument);
}

TEST_CASE("one-dimensional closed form") {
  const IstaProblem p(Matrix{{1.0}}, Vector{1.0}, 0.1, 1.0);
  const IstaResult r = ista_run(p, 1);
  CHECK(std::abs(r.x[0] - 0.9) <= 1e-12);
  CHECK(r.objective_trace.size() == 2);
  const IstaResult r5 = ista_run(p, 5);
  CHECK(std::abs(r5.x[0] - 0.9) <= 1e-12);
}

TEST_CASE("zero measurements stay at zero") {
  const auto a = MeasurementMatrix::gaussian(5, 8, 1);
  const IstaProblem p(a.matrix(), Vector(5, 0.0), 0.1, 1.0);
  const IstaResult r = ista_run(p, 20);
  for (double v : r.x) CHECK(v == 0.0);
  for (double f : r.objective_trace) CHECK(f == 0.0);
}

TEST_CASE("descent, fixed point residual and iterates") {
  const auto a = MeasurementMatrix::gaussian(20, 40, 4);
  const Matrix z = sparse_codes(40, 3, 1, 4, streams::kTrainSignals);
  const Vector y = multiply(a.matrix(), z.column(0));
  const IstaProblem p(a.matrix(), y, 0.05, 1.0);
  const IstaResult r = ista_run(p, 500);
  for (std::size_t k = 0; k + 1 < r.objective_trace.size(); ++k)
    CHECK(r.objective_trace[k + 1] <= r.objective_trace[k] + 1e-12);

  const auto its = ista_iterates(p, 500);
  CHECK(its.size() == 500);
  CHECK(its.back() == r.x);

  auto residual = [&](const Vector& x) {
    Vector g = multiply(a.matrix(), x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] - g[i];
    const Vector atr = multiply_tn(a.matrix(), g);
    double ss = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - soft_threshold(x[j] + atr[j], 0.05);
      ss += d * d;
    }
    return std::sqrt(ss);
  };
  CHECK(residual(its[499]) < residual(its[9]));
  CHECK(residual(its[499]) < 1e-6);
}

TEST_CASE("5000 iterations reach the FISTA optimum on a 50x100 problem") {
  const auto a = MeasurementMatrix::gaussian(50, 100, 11);
  const Matrix z = sparse_codes(100, 5, 1, 11, streams::kTrainSignals);
  const Vector y = multiply(a.matrix(), z.column(0));
  const double lambda = 1e-3;
  const IstaProblem p(a.matrix(), y, lambda, 1.0);
  const IstaResult r = ista_run(p, 5000);
  const Vector ref = oracle::fista(a.matrix(), y, lambda, 1.0, 1'000'000);
  const long double f_ref = oracle::lasso_objective(a.matrix(), y, lambda, ref);
  const long double f = oracle::lasso_objective(a.matrix(), y, lambda, r.x);
  CHECK(static_cast<double>(f - f_ref) <= 1e-6);
  CHECK(static_cast<double>(f - f_ref) >= -1e-9);
}
