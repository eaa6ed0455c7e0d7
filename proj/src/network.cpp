#include "uista/network.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "uista/io.hpp"
#include "uista/ista.hpp"

namespace uista {

void NetConfig::validate(const MeasurementMatrix& a) const {
  if (layers < 1) throw std::invalid_argument("net config: layers must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("net config: tau must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("net config: lambda must be nonnegative");
  if (!(b_out > 0.0)) throw std::invalid_argument("net config: b_out must be positive");
  const double s = a.spectral_norm();
  if (tau * s * s > 1.0 + 1e-12)
    throw std::invalid_argument("net config: tau*||A||^2 = " + std::to_string(tau * s * s) +
                                " exceeds 1");
}

namespace {

void check_params(const NetParams& p, const NetConfig& cfg, std::size_t N) {
  UISTA_EXPECT(p.phi.rows() == N && p.phi.cols() == N);
  const bool want_psi = cfg.hypothesis == HypothesisClass::H2;
  if (want_psi != p.psi.has_value())
    throw std::invalid_argument("net params: psi must be present exactly for class H2");
  if (p.psi) UISTA_EXPECT(p.psi->rows() == N && p.psi->cols() == N);
}

// Argument of S_{τλ} in the next layer: z + τWᵀ(y − Wz), or τWᵀy for the first.
// Kept in the same operation order as the ISTA step.
Matrix preactivation(const Matrix& w, const Matrix& y, const Matrix* z_prev, double tau) {
  if (z_prev == nullptr) {
    Matrix u = multiply_tn(w, y);
    u *= tau;
    return u;
  }
  Matrix r = multiply(w, *z_prev);
  auto rs = r.values();
  auto ys = y.values();
  for (std::size_t k = 0; k < rs.size(); ++k) rs[k] = ys[k] - rs[k];
  const Matrix g = multiply_tn(w, r);
  Matrix u = *z_prev;
  auto us = u.values();
  auto gs = g.values();
  for (std::size_t k = 0; k < us.size(); ++k) us[k] += tau * gs[k];
  return u;
}

Matrix threshold(Matrix u, double thr) {
  soft_threshold_inplace(u.values(), thr);
  return u;
}

}  // namespace

Matrix unrolled_codes(const Matrix& a, const Matrix& phi, const NetConfig& cfg, const Matrix& y) {
  UISTA_EXPECT(a.cols() == phi.rows() && a.rows() == y.rows());
  const Matrix w = multiply(a, phi);
  const double thr = cfg.tau * cfg.lambda;
  Matrix z = threshold(preactivation(w, y, nullptr, cfg.tau), thr);
  for (std::size_t l = 1; l < cfg.layers; ++l) z = threshold(preactivation(w, y, &z, cfg.tau), thr);
  return z;
}

ForwardResult forward(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                      const Matrix& y) {
  cfg.validate(a);
  check_params(params, cfg, a.signal_dim());
  UISTA_EXPECT(y.rows() == a.measurements());

  ForwardResult res;
  ForwardTape& tape = res.tape;
  const Matrix w = multiply(a.matrix(), params.phi);
  const double thr = cfg.tau * cfg.lambda;
  tape.preactivations.reserve(cfg.layers);
  tape.postactivations.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Matrix* prev = l == 0 ? nullptr : &tape.postactivations.back();
    tape.preactivations.push_back(preactivation(w, y, prev, cfg.tau));
    tape.postactivations.push_back(threshold(tape.preactivations.back(), thr));
  }

  tape.decoded = multiply(params.decoder(), tape.postactivations.back());
  res.output = tape.decoded;
  const std::size_t m = y.cols();
  tape.clip_scale.assign(m, 1.0);
  tape.clipped.assign(m, false);
  for (std::size_t j = 0; j < m; ++j) {
    const double nrm = column_norm(tape.decoded, j);
    if (nrm > cfg.b_out) {
      const double s = cfg.b_out / nrm;
      tape.clip_scale[j] = s;
      tape.clipped[j] = true;
      for (std::size_t i = 0; i < res.output.rows(); ++i) res.output(i, j) *= s;
    }
  }
  return res;
}

Matrix reconstruct(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                   const Matrix& y) {
  cfg.validate(a);
  check_params(params, cfg, a.signal_dim());
  Matrix out = multiply(params.decoder(), unrolled_codes(a.matrix(), params.phi, cfg, y));
  for (std::size_t j = 0; j < out.cols(); ++j) {
    const double nrm = column_norm(out, j);
    if (nrm > cfg.b_out) {
      const double s = cfg.b_out / nrm;
      for (std::size_t i = 0; i < out.rows(); ++i) out(i, j) *= s;
    }
  }
  return out;
}

Vector clip_ball(std::span<const double> x, double b_out) {
  UISTA_EXPECT(b_out > 0.0);
  Vector out(x.begin(), x.end());
  const double nrm = norm2(x);
  if (nrm > b_out) {
    const double s = b_out / nrm;
    for (double& v : out) v *= s;
  }
  return out;
}

double output_norm_bound(const MeasurementMatrix& a, const NetConfig& cfg, const Matrix& y,
                         double contraction) {
  double geom = 0.0;
  double p = 1.0;
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    geom += p;
    p *= contraction;
  }
  return cfg.tau * a.spectral_norm() * frobenius_norm(y) * geom;
}

double output_norm_bound(const MeasurementMatrix& a, const NetConfig& cfg, const Matrix& y) {
  return output_norm_bound(a, cfg, y, contraction_factor(a, cfg.tau));
}

namespace {

constexpr std::array<char, 8> kMagic = {'U', 'I', 'S', 'T', 'A', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= std::uint64_t{p[b]} << (8 * b);
  return v;
}

}  // namespace

void write_params(const std::filesystem::path& path, const NetParams& params) {
  const std::size_t N = params.phi.rows();
  UISTA_EXPECT(params.phi.cols() == N);
  std::string blob(kMagic.begin(), kMagic.end());
  put_u32(blob, kVersion);
  put_u32(blob, static_cast<std::uint32_t>(N));
  for (double v : params.phi.values()) put_f64(blob, v);
  if (params.psi) {
    UISTA_EXPECT(params.psi->rows() == N && params.psi->cols() == N);
    for (double v : params.psi->values()) put_f64(blob, v);
  }
  write_file_atomic(path, blob);
}

NetParams read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open parameter file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic.data(), kMagic.size()) != 0)
    throw ParamsFormatError("not a parameter blob: " + path.string());
  const auto version = static_cast<std::uint32_t>(get_le(bytes + 8, 4));
  if (version != kVersion)
    throw ParamsFormatError("unsupported parameter blob version " + std::to_string(version));
  const std::size_t N = get_le(bytes + 12, 4);
  const std::size_t payload = blob.size() - 16;
  const std::size_t one = N * N * 8;
  if (N == 0 || (payload != one && payload != 2 * one))
    throw ParamsFormatError("parameter blob has wrong length: " + path.string());

  auto read_matrix = [&](std::size_t offset) {
    std::vector<double> v(N * N);
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = std::bit_cast<double>(get_le(bytes + offset + 8 * k, 8));
    return Matrix(N, N, std::move(v));
  };
  NetParams p{read_matrix(16), std::nullopt};
  if (payload == 2 * one) p.psi = read_matrix(16 + one);
  return p;
}

std::string to_string(HypothesisClass h) { return h == HypothesisClass::H1 ? "H1" : "H2"; }

HypothesisClass parse_hypothesis(const std::string& s) {
  if (s == "H1" || s == "h1") return HypothesisClass::H1;
  if (s == "H2" || s == "h2") return HypothesisClass::H2;
  throw std::invalid_argument("unknown hypothesis class '" + s + "' (expected H1 or H2)");
}

void to_json(nlohmann::json& j, const NetConfig& cfg) {
  j = nlohmann::json{{"layers", cfg.layers},
                     {"tau", cfg.tau},
                     {"lambda", cfg.lambda},
                     {"b_out", cfg.b_out},
                     {"class", to_string(cfg.hypothesis)}};
}

void from_json(const nlohmann::json& j, NetConfig& cfg) {
  j.at("layers").get_to(cfg.layers);
  j.at("tau").get_to(cfg.tau);
  j.at("lambda").get_to(cfg.lambda);
  j.at("b_out").get_to(cfg.b_out);
  cfg.hypothesis = parse_hypothesis(j.at("class").get<std::string>());
}

}  // namespace uista
