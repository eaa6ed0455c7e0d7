#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "uista/data.hpp"
#include "uista/linalg.hpp"

namespace uista {

/// H1: decoder is the shared dictionary Φ. H2: decoder is an independent Ψ.
enum class HypothesisClass { H1, H2 };

struct NetConfig {
  std::size_t layers = 10;
  double tau = 1.0;
  double lambda = 0.05;
  double b_out = 1.0;
  HypothesisClass hypothesis = HypothesisClass::H1;

  /// Throws std::invalid_argument on bad values or when τ‖A‖² > 1.
  void validate(const MeasurementMatrix& a) const;
};

struct NetParams {
  Matrix phi;
  std::optional<Matrix> psi;

  const Matrix& decoder() const noexcept { return psi ? *psi : phi; }
};

/// Everything reverse mode needs. preactivations[l] is the argument of S_{τλ}
/// in layer l+1 and postactivations[l] its output.
struct ForwardTape {
  std::vector<Matrix> preactivations;
  std::vector<Matrix> postactivations;
  Matrix decoded;                  // D·f_Φᴸ(Y), before the clip
  std::vector<double> clip_scale;  // per column; 1 where not clipped
  std::vector<bool> clipped;
};

struct ForwardResult {
  Matrix output;
  ForwardTape tape;
};

/// X̂ = σ(D·f_Φᴸ(Y)) columnwise, D = Φ (H1) or Ψ (H2).
ForwardResult forward(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                      const Matrix& y);

/// Same output as forward() without keeping the tape.
Matrix reconstruct(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                   const Matrix& y);

/// f_Φᴸ(Y): the L thresholding layers alone, no decoder and no clip.
Matrix unrolled_codes(const Matrix& a, const Matrix& phi, const NetConfig& cfg, const Matrix& y);

/// σ(x): radial projection onto the ℓ2 ball of radius b_out.
Vector clip_ball(std::span<const double> x, double b_out);

/// τ‖A‖‖Y‖_F · Σ_{k<L} ‖I − τAᵀA‖ᵏ, an upper bound on ‖f_Φᴸ(Y)‖_F.
double output_norm_bound(const MeasurementMatrix& a, const NetConfig& cfg, const Matrix& y);
double output_norm_bound(const MeasurementMatrix& a, const NetConfig& cfg, const Matrix& y,
                         double contraction);

class ParamsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary parameter blob: "UISTAPRM", u32 version, u32 N (little endian), then
/// Φ and optionally Ψ as row-major little-endian doubles.
void write_params(const std::filesystem::path& path, const NetParams& params);
NetParams read_params(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const NetConfig& cfg);
void from_json(const nlohmann::json& j, NetConfig& cfg);

std::string to_string(HypothesisClass h);
HypothesisClass parse_hypothesis(const std::string& s);

}  // namespace uista
