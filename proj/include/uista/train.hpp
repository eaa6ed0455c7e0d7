#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uista/data.hpp"
#include "uista/network.hpp"

namespace uista {

/// kMse: ‖h(y) − x‖². kL2: ‖h(y) − x‖ (the loss the generalization bound is stated for).
enum class LossKind { kMse, kL2 };

enum class Retraction { kPenaltyOnly, kEachStep, kAtEnd };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 5e-2;
  double momentum = 0.9;
  double ortho_weight = 0.1;
  Retraction retraction = Retraction::kPenaltyOnly;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kMse;
  /// Wall-clock per epoch is nondeterministic; off by default so records and
  /// CSV output are reproducible byte for byte.
  bool record_timing = false;

  void validate(std::size_t m_train) const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gen_gap = 0.0;
  double ortho_dev = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainRecord {
  double initial_train_loss = 0.0;
  double initial_test_loss = 0.0;
  std::vector<EpochStats> epochs;

  bool operator==(const TrainRecord&) const = default;
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad_phi;
  std::optional<Matrix> grad_psi;
};

/// Mean per-sample loss plus β‖I − ΦᵀΦ‖_F (and β‖I − ΨᵀΨ‖_F for H2), with its
/// exact reverse-mode gradient. Threshold derivative is 1 only where |u| > τλ.
LossGrad loss_and_grad(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                       const Dataset& batch, double ortho_weight, LossKind loss);

/// Objective value alone, evaluated the same way as loss_and_grad.
double penalized_loss(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                      const Dataset& batch, double ortho_weight, LossKind loss);

/// Mean per-sample loss, no penalty.
double evaluate(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                const Dataset& data, LossKind loss);

/// ‖I − MᵀM‖_F and its gradient 2M(MᵀM − I)/‖·‖_F. The gradient is zero once the
/// deviation is down at roundoff level (≤ 1e-12·N).
double ortho_penalty(const Matrix& m, Matrix* grad);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  NetParams params;
  TrainRecord record;
};

/// Mini-batch SGD with momentum over seeded shuffles.
TrainResult train(const MeasurementMatrix& a, NetParams init, const NetConfig& cfg,
                  const Dataset& train_set, const Dataset& test_set, const TrainConfig& tcfg);

/// Header: epoch,train_loss,test_loss,gen_gap,ortho_dev,grad_norm,seconds
std::string record_csv(const TrainRecord& record);

std::string to_string(LossKind k);
LossKind parse_loss(const std::string& s);
std::string to_string(Retraction r);
Retraction parse_retraction(const std::string& s);

}  // namespace uista
