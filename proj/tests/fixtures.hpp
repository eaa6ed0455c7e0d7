#pragma once

// Random small network instances shared by the unit and acceptance tests.

#include <algorithm>
#include <random>
#include <vector>

#include "uista/data.hpp"
#include "uista/network.hpp"
#include "uista/random.hpp"

namespace fixtures {

using namespace uista;

struct Instance {
  MeasurementMatrix a;
  NetConfig cfg;
  NetParams params;
  Dataset batch;
};

inline Matrix noisy_orthogonal(std::size_t N, std::uint64_t seed, std::uint64_t stream) {
  Matrix m = random_orthogonal(N, seed, stream);
  auto rng = make_rng(seed, stream + 100);
  std::normal_distribution<double> g(0.0, 0.1);
  for (double& v : m.values()) v += g(rng);
  return m;
}

// Small instance with b_out placed between two output norms so some columns clip.
inline Instance random_instance(std::size_t N, std::size_t n, std::size_t L, std::size_t batch,
                         HypothesisClass h, std::uint64_t seed) {
  auto a = MeasurementMatrix::gaussian(n, N, seed);
  NetConfig cfg;
  cfg.layers = L;
  cfg.tau = 1.0 / (a.spectral_norm() * a.spectral_norm());
  cfg.lambda = 0.05;
  cfg.b_out = 1e9;
  cfg.hypothesis = h;
  NetParams p{noisy_orthogonal(N, seed, streams::kInit), std::nullopt};
  if (h == HypothesisClass::H2) p.psi = noisy_orthogonal(N, seed, streams::kDictionary);
  const Matrix x = multiply(random_orthogonal(N, seed + 1),
                            sparse_codes(N, std::max<std::size_t>(1, N / 3), batch, seed,
                                         streams::kTrainSignals));
  Dataset d = take_measurements(a, x);
  const Matrix out = reconstruct(a, p, cfg, d.measurements());
  std::vector<double> norms;
  for (std::size_t j = 0; j < out.cols(); ++j) norms.push_back(column_norm(out, j));
  std::sort(norms.begin(), norms.end());
  const std::size_t mid = norms.size() / 2;
  cfg.b_out = mid > 0 ? 0.5 * (norms[mid - 1] + norms[mid]) : 0.5 * norms[0];
  if (!(cfg.b_out > 0.0)) cfg.b_out = 1.0;
  return {std::move(a), cfg, std::move(p), std::move(d)};
}

}  // namespace fixtures
