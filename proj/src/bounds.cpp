#include "uista/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "uista/random.hpp"

namespace uista {

void BoundInputs::validate() const {
  if (N == 0 || n == 0 || m == 0 || L == 0)
    throw std::invalid_argument("bound inputs: N, n, m and L must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("bound inputs: tau must be positive");
  if (!(spec_norm_a >= 0.0) || !(frob_y >= 0.0) || !(contraction >= 0.0))
    throw std::invalid_argument("bound inputs: norms must be nonnegative");
  if (!(b_in > 0.0) || !(b_out > 0.0))
    throw std::invalid_argument("bound inputs: b_in and b_out must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("bound inputs: delta must lie in (0,1), got " + std::to_string(delta));
}

double k_constant(const BoundInputs& in, std::size_t L) {
  UISTA_EXPECT(L >= 1);
  const double c = in.contraction;
  const double a2 = in.spec_norm_a * in.spec_norm_a;
  double z = 0.0;  // Z_{l-1}
  double pow_c = 1.0;
  double k = 0.0;
  for (std::size_t l = 1; l <= L; ++l) {
    const double b = in.tau * in.frob_y * (2.0 + 2.0 * in.tau * a2 * z);
    k = l == 1 ? b : c * k + b;
    z += pow_c;
    pow_c *= c;
  }
  return k;
}

double m_constant(const BoundInputs& in, std::size_t L) {
  UISTA_EXPECT(L >= 1);
  const double c = in.contraction;
  const double lead = in.tau * in.spec_norm_a * in.frob_y;
  double geom;
  if (c == 1.0) {
    geom = static_cast<double>(L);
  } else {
    geom = (1.0 - std::pow(c, static_cast<double>(L))) / (1.0 - c);
  }
  return lead * geom;
}

double covering_log_ball(std::size_t n, double eps) {
  UISTA_EXPECT(eps > 0.0);
  return static_cast<double>(n) * std::log1p(2.0 / eps);
}

double covering_log_m2(const BoundInputs& in, double k_l, double m_l, double eps) {
  UISTA_EXPECT(eps > 0.0);
  const double N = static_cast<double>(in.N);
  const double n = static_cast<double>(in.n);
  return N * N * std::log1p(4.0 * m_l / eps) + n * N * std::log1p(4.0 * in.spec_norm_a * k_l / eps);
}

double dudley_closed_form(double alpha, double beta) {
  UISTA_EXPECT(alpha > 0.0 && beta >= 0.0);
  return alpha * std::sqrt(1.0 + std::log1p(beta / alpha));
}

BoundReport generalization_bound(const BoundInputs& in) {
  in.validate();
  BoundReport r;
  r.inputs = in;
  r.step_condition = in.step_condition();
  r.k_l = k_constant(in, in.L);
  r.m_l = m_constant(in, in.L);

  const double m = static_cast<double>(in.m);
  const double N = static_cast<double>(in.N);
  const double n = static_cast<double>(in.n);
  const double L = static_cast<double>(in.L);
  const double sqm = std::sqrt(m);
  const double B = in.b_out;
  r.radius = sqm * B;

  // Dudley over [0, √m·B/2] with β = 4M_L and β = 4‖A‖K_L respectively.
  const double alpha = r.radius / 2.0;
  const double dict = N * dudley_closed_form(alpha, 4.0 * r.m_l);
  const double wcov = std::sqrt(n * N) * dudley_closed_form(alpha, 4.0 * in.spec_norm_a * r.k_l);
  r.rademacher_bound = 4.0 * std::numbers::sqrt2 / m * (dict + wcov);

  // Gap ≤ 2·√2·R: factor 2 from symmetrization, √2 from the vector contraction.
  r.term_w_cover = 4.0 * std::numbers::sqrt2 / m * 2.0 * std::numbers::sqrt2 * wcov;
  r.term_dict_cover = 4.0 * std::numbers::sqrt2 / m * 2.0 * std::numbers::sqrt2 * dict;
  r.term_confidence = 4.0 * (in.b_in + B) * std::sqrt(2.0 * std::log(4.0 / in.delta) / m);
  r.total = r.term_w_cover + r.term_dict_cover + r.term_confidence;

  const double tay = in.tau * in.spec_norm_a * in.frob_y;
  r.corollary_term1 = 8.0 * B * std::sqrt(n * N / m) *
                      std::sqrt(1.0 + std::log(2.0 + 8.0 * L * (L + 3.0) * tay / (sqm * B)));
  r.corollary_term2 = 8.0 * B * N / sqm * std::sqrt(1.0 + std::log1p(8.0 * L * tay / (sqm * B)));
  r.corollary_total = r.corollary_term1 + r.corollary_term2 + r.term_confidence;

  r.simplified_total = 8.0 * B * std::sqrt(N * n * std::log(2.0 + 8.0 * L * (L + 3.0)) / m) +
                       8.0 * B * N * std::sqrt(std::log(std::numbers::e + 8.0 * std::numbers::e * L)) / sqm +
                       B * std::sqrt(128.0 * std::log(4.0 / in.delta) / m);
  return r;
}

void to_json(nlohmann::json& j, const BoundInputs& in) {
  j = nlohmann::json{{"N", in.N},
                     {"n", in.n},
                     {"m", in.m},
                     {"L", in.L},
                     {"tau", in.tau},
                     {"spec_norm_A", in.spec_norm_a},
                     {"frob_Y", in.frob_y},
                     {"contraction", in.contraction},
                     {"b_in", in.b_in},
                     {"b_out", in.b_out},
                     {"delta", in.delta}};
}

void from_json(const nlohmann::json& j, BoundInputs& in) {
  j.at("N").get_to(in.N);
  j.at("n").get_to(in.n);
  j.at("m").get_to(in.m);
  j.at("L").get_to(in.L);
  j.at("tau").get_to(in.tau);
  j.at("spec_norm_A").get_to(in.spec_norm_a);
  j.at("frob_Y").get_to(in.frob_y);
  j.at("contraction").get_to(in.contraction);
  j.at("b_in").get_to(in.b_in);
  j.at("b_out").get_to(in.b_out);
  j.at("delta").get_to(in.delta);
}

void to_json(nlohmann::json& j, const BoundReport& r) {
  j = nlohmann::json{{"k_L", r.k_l},
                     {"m_L", r.m_l},
                     {"radius", r.radius},
                     {"rademacher_bound", r.rademacher_bound},
                     {"term1", r.term_w_cover},
                     {"term2", r.term_dict_cover},
                     {"term3", r.term_confidence},
                     {"total", r.total},
                     {"corollary_term1", r.corollary_term1},
                     {"corollary_term2", r.corollary_term2},
                     {"corollary_total", r.corollary_total},
                     {"simplified_total", r.simplified_total},
                     {"step_condition", r.step_condition},
                     {"loss", "l2"},
                     {"inputs", r.inputs}};
}

BoundInputs inputs_for_run(const MeasurementMatrix& a, const NetConfig& cfg, const Dataset& train,
                           double delta) {
  BoundInputs in;
  in.N = a.signal_dim();
  in.n = a.measurements();
  in.m = train.size();
  in.L = cfg.layers;
  in.tau = cfg.tau;
  in.spec_norm_a = a.spectral_norm();
  in.frob_y = frobenius_norm(train.measurements());
  in.contraction = contraction_factor(a, cfg.tau);
  in.b_in = train.b_in();
  in.b_out = cfg.b_out;
  in.delta = delta;
  return in;
}

Matrix orthogonal2(double theta, bool reflect) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  if (reflect) return Matrix{{c, s}, {s, -c}};
  return Matrix{{c, -s}, {s, c}};
}

MonteCarloEstimate mc_rademacher_toy(const MeasurementMatrix& a, const NetConfig& cfg,
                                     const Matrix& y, std::size_t trials, std::size_t grid,
                                     std::uint64_t seed, unsigned threads) {
  if (a.signal_dim() != 2)
    throw UnsupportedError("mc_rademacher_toy supports N = 2 only, got N = " +
                           std::to_string(a.signal_dim()));
  UISTA_EXPECT(trials >= 1 && grid >= 1);
  UISTA_EXPECT(y.rows() == a.measurements() && y.cols() >= 1);
  cfg.validate(a);
  const std::size_t m = y.cols();

  // σ(Ψ f) = Ψ σ(f) for orthogonal Ψ, so only the clipped codes depend on Φ.
  std::vector<Matrix> codes;
  codes.reserve(2 * grid);
  for (int reflect = 0; reflect < 2; ++reflect) {
    for (std::size_t g = 0; g < grid; ++g) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(g) / static_cast<double>(grid);
      Matrix f = unrolled_codes(a.matrix(), orthogonal2(theta, reflect != 0), cfg, y);
      for (std::size_t j = 0; j < m; ++j) {
        const double nrm = column_norm(f, j);
        if (nrm > cfg.b_out) {
          f(0, j) *= cfg.b_out / nrm;
          f(1, j) *= cfg.b_out / nrm;
        }
      }
      codes.push_back(std::move(f));
    }
  }

  std::vector<double> values(trials);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      auto rng = make_rng(seed, (static_cast<std::uint64_t>(t) << 8) | streams::kRademacher);
      std::bernoulli_distribution coin;
      std::vector<double> e0(m), e1(m);
      for (std::size_t i = 0; i < m; ++i) {
        e0[i] = coin(rng) ? 1.0 : -1.0;
        e1[i] = coin(rng) ? 1.0 : -1.0;
      }
      double best = 0.0;
      for (const Matrix& f : codes) {
        // P = E σ(F)ᵀ; sup over O(2) of ⟨Ψ, P⟩ is its nuclear norm.
        double p00 = 0, p01 = 0, p10 = 0, p11 = 0;
        for (std::size_t i = 0; i < m; ++i) {
          p00 += e0[i] * f(0, i);
          p01 += e0[i] * f(1, i);
          p10 += e1[i] * f(0, i);
          p11 += e1[i] * f(1, i);
        }
        const double fro2 = p00 * p00 + p01 * p01 + p10 * p10 + p11 * p11;
        const double nuc = std::sqrt(fro2 + 2.0 * std::abs(p00 * p11 - p01 * p10));
        best = std::max(best, nuc);
      }
      values[t] = best / static_cast<double>(m);
    }
  };

  unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, trials));
  if (workers <= 1) {
    run(0, trials);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (trials + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = std::min(trials, w * chunk);
      const std::size_t e = std::min(trials, b + chunk);
      pool.emplace_back(run, b, e);
    }
    for (auto& th : pool) th.join();
  }

  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(trials);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  MonteCarloEstimate est;
  est.mean = mean;
  est.std_error = trials > 1 ? std::sqrt(ss / static_cast<double>(trials - 1) / static_cast<double>(trials)) : 0.0;
  return est;
}

}  // namespace uista
