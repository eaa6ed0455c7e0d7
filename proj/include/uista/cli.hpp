#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uista/bounds.hpp"
#include "uista/data.hpp"
#include "uista/network.hpp"
#include "uista/train.hpp"

namespace uista {

/// Bad config, bad flags or a missing input file; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { kSynthetic, kMnist };

struct ExperimentConfig {
  DataSource source = DataSource::kSynthetic;
  // For MNIST only n, m_train, m_test and seed are used; N is the image size.
  SynthConfig data;
  std::filesystem::path mnist_path = "data/mnist/train-images-idx3-ubyte";

  NetConfig net;
  /// Unset means b_out = b_in of the training set.
  std::optional<double> b_out;
  TrainConfig train;
  double delta = 0.05;

  std::size_t ista_iters = 5000;
  std::size_t ista_samples = 20;
  std::filesystem::path out_dir = "out";

  /// Sets data and training seeds together.
  void set_seed(std::uint64_t seed);
};

/// INI file with sections [data] [net] [train] [bound] [ista] [output].
/// Unknown keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);
/// "section.key=value".
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

struct Problem {
  MeasurementMatrix a;
  std::optional<Matrix> phi_true;
  Dataset train;
  Dataset test;
};

Problem build_problem(const ExperimentConfig& cfg);

/// NetConfig with b_out resolved against the training set.
NetConfig resolved_net(const ExperimentConfig& cfg, const Problem& p);

/// Random orthogonal Φ (and Ψ for H2) from the training seed.
NetParams initial_params(std::size_t N, const NetConfig& net, std::uint64_t seed);

struct IstaBaseline {
  std::size_t samples = 0;
  double ista_error = 0.0;     // mean loss of the classical reconstruction
  double learned_error = 0.0;  // trained network on the same columns
};

/// Classical ISTA on the first samples test columns with the true dictionary
/// (synthetic) or the identity (MNIST).
IstaBaseline ista_baseline(const ExperimentConfig& cfg, const Problem& p, const NetConfig& net,
                           const NetParams& learned);

struct RunResult {
  TrainResult trained;
  NetConfig net;
  BoundReport bound;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gen_gap = 0.0;
  double gen_gap_l2 = 0.0;  // same gap under the unsquared loss the bound is stated for
  std::optional<IstaBaseline> ista;
};

RunResult run_experiment(const ExperimentConfig& cfg, bool with_ista);

enum class SweepAxis { kLayers, kSignalDim, kMeasurements };
SweepAxis parse_axis(const std::string& s);

struct SweepRow {
  std::size_t axis_value = 0;
  std::uint64_t seed = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gen_gap = 0.0;
  double bound_total = 0.0;
  double gen_gap_l2 = 0.0;
  std::string status = "ok";
};

/// One run per (value, repeat) with seed = base seed + repeat. Runs are
/// independent and may use worker threads; rows come back ordered by
/// (value, seed).
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                const std::vector<std::size_t>& values, std::size_t repeats,
                                unsigned threads = 0);

/// Header: axis_value,seed,train_loss,test_loss,gen_gap,bound_total,gen_gap_l2,status
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct GradCheckOptions {
  std::size_t N = 6;
  std::size_t n = 4;
  std::size_t layers = 3;
  std::size_t batch = 5;
  double ortho_weight = 0.0;
  HypothesisClass hypothesis = HypothesisClass::H1;
  LossKind loss = LossKind::kMse;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a threshold or clip kink
};

/// Central differences with step 1e-6 against loss_and_grad on a random
/// instance. Relative error is |g − d| / max(|g|, |d|, 1e-6).
GradCheckResult gradient_check(const GradCheckOptions& opts);

/// Entry point of the uista executable. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace uista
