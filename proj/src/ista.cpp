#include "uista/ista.hpp"

#include <stdexcept>

namespace uista {

void soft_threshold_inplace(std::span<double> v, double lambda) noexcept {
  for (double& x : v) x = soft_threshold(x, lambda);
}

double objective(const Matrix& a, std::span<const double> y, double lambda,
                 std::span<const double> x) {
  UISTA_EXPECT(a.rows() == y.size() && a.cols() == x.size());
  Vector r = multiply(a, x);
  double rr = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = r[i] - y[i];
    rr += d * d;
  }
  double l1 = 0.0;
  for (double v : x) l1 += std::abs(v);
  return 0.5 * rr + lambda * l1;
}

IstaProblem::IstaProblem(Matrix a, Vector y, double lambda, double tau)
    : IstaProblem(a, std::move(y), lambda, tau, spectral_norm(a)) {}

IstaProblem::IstaProblem(Matrix a, Vector y, double lambda, double tau, double spectral_norm_a)
    : a_(std::move(a)), y_(std::move(y)), lambda_(lambda), tau_(tau) {
  UISTA_EXPECT(a_.rows() == y_.size());
  if (!(lambda > 0.0)) throw std::invalid_argument("ISTA: lambda must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("ISTA: tau must be positive");
  if (tau * spectral_norm_a * spectral_norm_a > 1.0 + 1e-12)
    throw std::invalid_argument("ISTA: step size violates tau*||A||^2 <= 1");
}

namespace {

// One proximal-gradient step; must match the network layer arithmetic exactly.
void ista_step(const IstaProblem& p, Vector& x) {
  const Vector ax = multiply(p.a(), x);
  Vector r(ax.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = p.y()[i] - ax[i];
  const Vector g = multiply_tn(p.a(), r);
  const double thr = p.tau() * p.lambda();
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = soft_threshold(x[k] + p.tau() * g[k], thr);
}

}  // namespace

IstaResult ista_run(const IstaProblem& p, std::size_t iters) {
  IstaResult out;
  out.x.assign(p.a().cols(), 0.0);
  out.objective_trace.reserve(iters + 1);
  out.objective_trace.push_back(objective(p.a(), p.y(), p.lambda(), out.x));
  for (std::size_t k = 0; k < iters; ++k) {
    ista_step(p, out.x);
    out.objective_trace.push_back(objective(p.a(), p.y(), p.lambda(), out.x));
  }
  return out;
}

std::vector<Vector> ista_iterates(const IstaProblem& p, std::size_t iters) {
  std::vector<Vector> out;
  out.reserve(iters);
  Vector x(p.a().cols(), 0.0);
  for (std::size_t k = 0; k < iters; ++k) {
    ista_step(p, x);
    out.push_back(x);
  }
  return out;
}

}  // namespace uista
