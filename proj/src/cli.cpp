#include "uista/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "uista/io.hpp"
#include "uista/ista.hpp"
#include "uista/random.hpp"

namespace uista {

void ExperimentConfig::set_seed(std::uint64_t seed) {
  data.seed = seed;
  train.seed = seed;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last)
    throw ConfigError("config: cannot parse '" + text + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config: expected a boolean for " + key + ", got '" + text + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

template <class T, class F>
Setter number(F field) {
  return [field](ExperimentConfig& c, const std::string& key, const std::string& v) {
    field(c) = parse_number<T>(key, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.source",
       [](ExperimentConfig& c, const std::string& key, const std::string& v) {
         if (v == "synthetic") c.source = DataSource::kSynthetic;
         else if (v == "mnist") c.source = DataSource::kMnist;
         else throw ConfigError("config: " + key + " must be synthetic or mnist, got '" + v + "'");
       }},
      {"data.N", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.N; })},
      {"data.n", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.n; })},
      {"data.sparsity", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.sparsity; })},
      {"data.m_train", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.m_train; })},
      {"data.m_test", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.m_test; })},
      {"data.seed", number<std::uint64_t>([](ExperimentConfig& c) -> auto& { return c.data.seed; })},
      {"data.mnist_path",
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.mnist_path = v; }},
      {"net.layers", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.net.layers; })},
      {"net.tau", number<double>([](ExperimentConfig& c) -> auto& { return c.net.tau; })},
      {"net.lambda", number<double>([](ExperimentConfig& c) -> auto& { return c.net.lambda; })},
      {"net.b_out",
       [](ExperimentConfig& c, const std::string& key, const std::string& v) {
         if (v == "auto") c.b_out.reset();
         else c.b_out = parse_number<double>(key, v);
       }},
      {"net.class",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         try {
           c.net.hypothesis = parse_hypothesis(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("config: ") + e.what());
         }
       }},
      {"train.epochs", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.epochs; })},
      {"train.batch_size",
       number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.batch_size; })},
      {"train.learning_rate",
       number<double>([](ExperimentConfig& c) -> auto& { return c.train.learning_rate; })},
      {"train.momentum", number<double>([](ExperimentConfig& c) -> auto& { return c.train.momentum; })},
      {"train.ortho_weight",
       number<double>([](ExperimentConfig& c) -> auto& { return c.train.ortho_weight; })},
      {"train.seed", number<std::uint64_t>([](ExperimentConfig& c) -> auto& { return c.train.seed; })},
      {"train.retraction",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         try {
           c.train.retraction = parse_retraction(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("config: ") + e.what());
         }
       }},
      {"train.loss",
       [](ExperimentConfig& c, const std::string&, const std::string& v) {
         try {
           c.train.loss = parse_loss(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("config: ") + e.what());
         }
       }},
      {"train.timing",
       [](ExperimentConfig& c, const std::string& key, const std::string& v) {
         c.train.record_timing = parse_bool(key, v);
       }},
      {"bound.delta", number<double>([](ExperimentConfig& c) -> auto& { return c.delta; })},
      {"ista.iters", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.ista_iters; })},
      {"ista.samples", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.ista_samples; })},
      {"output.dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second(cfg, key, value);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  bool m_train_set = false;
  bool m_test_set = false;
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError("config: key '" + section + "' must live inside a [section]");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      set_key(cfg, full, value.data());
      m_train_set |= full == "data.m_train";
      m_test_set |= full == "data.m_test";
    }
  }
  if (cfg.source == DataSource::kMnist && (!m_train_set || !m_test_set))
    throw ConfigError("config: MNIST runs need data.m_train and data.m_test set explicitly");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  set_key(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

Problem build_problem(const ExperimentConfig& cfg) {
  try {
    if (cfg.source == DataSource::kSynthetic) {
      SyntheticProblem s = generate_synthetic(cfg.data);
      return Problem{std::move(s.a), std::move(s.phi_true), std::move(s.train), std::move(s.test)};
    }
    if (!std::filesystem::exists(cfg.mnist_path))
      throw ConfigError("MNIST image file not found: " + cfg.mnist_path.string());
    if (cfg.data.m_train == 0 || cfg.data.m_test == 0)
      throw ConfigError("config: m_train and m_test must be positive");
    const std::size_t want = cfg.data.m_train + cfg.data.m_test;
    Matrix images = load_idx_images(cfg.mnist_path, want);
    if (images.cols() < want)
      throw ConfigError("MNIST file " + cfg.mnist_path.string() + " holds " +
                        std::to_string(images.cols()) + " images, need " + std::to_string(want));
    std::vector<std::size_t> idx(cfg.data.m_train);
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    Matrix x_train = select_columns(images, idx);
    idx.resize(cfg.data.m_test);
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = cfg.data.m_train + j;
    Matrix x_test = select_columns(images, idx);
    auto a = MeasurementMatrix::gaussian(cfg.data.n, images.rows(), cfg.data.seed);
    Dataset train = take_measurements(a, std::move(x_train));
    Dataset test = take_measurements(a, std::move(x_test));
    return Problem{std::move(a), std::nullopt, std::move(train), std::move(test)};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

NetConfig resolved_net(const ExperimentConfig& cfg, const Problem& p) {
  NetConfig net = cfg.net;
  net.b_out = cfg.b_out ? *cfg.b_out : p.train.b_in();
  return net;
}

NetParams initial_params(std::size_t N, const NetConfig& net, std::uint64_t seed) {
  NetParams params{random_orthogonal(N, seed, streams::kInit), std::nullopt};
  if (net.hypothesis == HypothesisClass::H2) params.psi = params.phi;
  return params;
}

IstaBaseline ista_baseline(const ExperimentConfig& cfg, const Problem& p, const NetConfig& net,
                           const NetParams& learned) {
  IstaBaseline out;
  out.samples = std::min(cfg.ista_samples, p.test.size());
  if (out.samples == 0) return out;
  const Matrix dict = p.phi_true ? *p.phi_true : Matrix::identity(p.a.signal_dim());
  const Matrix a_eff = multiply(p.a.matrix(), dict);
  std::vector<std::size_t> cols(out.samples);
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  const Dataset sub = p.test.subset(cols);

  double total = 0.0;
  for (std::size_t j = 0; j < out.samples; ++j) {
    IstaProblem prob(a_eff, sub.measurements().column(j), net.lambda, net.tau, p.a.spectral_norm());
    const IstaResult r = ista_run(prob, cfg.ista_iters);
    const Vector x_hat = multiply(dict, r.x);
    double ss = 0.0;
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
      const double d = x_hat[i] - sub.signals()(i, j);
      ss += d * d;
    }
    total += cfg.train.loss == LossKind::kMse ? ss : std::sqrt(ss);
  }
  out.ista_error = total / static_cast<double>(out.samples);
  out.learned_error = evaluate(p.a, learned, net, sub, cfg.train.loss);
  return out;
}

RunResult run_experiment(const ExperimentConfig& cfg, bool with_ista) {
  Problem p = build_problem(cfg);
  RunResult r;
  r.net = resolved_net(cfg, p);
  try {
    r.net.validate(p.a);
    cfg.train.validate(p.train.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  r.trained = train(p.a, initial_params(p.a.signal_dim(), r.net, cfg.train.seed), r.net, p.train,
                    p.test, cfg.train);
  const NetParams& fin = r.trained.params;
  r.train_loss = evaluate(p.a, fin, r.net, p.train, cfg.train.loss);
  r.test_loss = evaluate(p.a, fin, r.net, p.test, cfg.train.loss);
  r.gen_gap = std::abs(r.test_loss - r.train_loss);
  r.gen_gap_l2 = std::abs(evaluate(p.a, fin, r.net, p.test, LossKind::kL2) -
                          evaluate(p.a, fin, r.net, p.train, LossKind::kL2));
  try {
    r.bound = generalization_bound(inputs_for_run(p.a, r.net, p.train, cfg.delta));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (with_ista && r.net.lambda > 0.0 && cfg.ista_samples > 0) r.ista = ista_baseline(cfg, p, r.net, fin);
  return r;
}

SweepAxis parse_axis(const std::string& s) {
  if (s == "L") return SweepAxis::kLayers;
  if (s == "N") return SweepAxis::kSignalDim;
  if (s == "n") return SweepAxis::kMeasurements;
  throw ConfigError("axis must be one of L, N, n; got '" + s + "'");
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                const std::vector<std::size_t>& values, std::size_t repeats,
                                unsigned threads) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (repeats == 0) throw ConfigError("sweep needs repeats >= 1");
  if (axis == SweepAxis::kSignalDim && base.source == DataSource::kMnist)
    throw ConfigError("the N axis is fixed by the image size for MNIST");

  struct Job {
    ExperimentConfig cfg;
    SweepRow row;
  };
  std::vector<Job> jobs;
  for (std::size_t v : values) {
    if (v == 0) throw ConfigError("sweep values must be positive");
    for (std::size_t r = 0; r < repeats; ++r) {
      Job job{base, {}};
      switch (axis) {
        case SweepAxis::kLayers: job.cfg.net.layers = v; break;
        case SweepAxis::kSignalDim: job.cfg.data.N = v; break;
        case SweepAxis::kMeasurements: job.cfg.data.n = v; break;
      }
      job.cfg.set_seed(base.data.seed + r);
      job.row.axis_value = v;
      job.row.seed = base.data.seed + r;
      jobs.push_back(std::move(job));
    }
  }
  // A missing data file is a usage error for the whole sweep, not a run failure.
  if (base.source == DataSource::kMnist && !std::filesystem::exists(base.mnist_path))
    throw ConfigError("MNIST image file not found: " + base.mnist_path.string());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      SweepRow& row = jobs[k].row;
      try {
        const RunResult r = run_experiment(jobs[k].cfg, false);
        row.train_loss = r.train_loss;
        row.test_loss = r.test_loss;
        row.gen_gap = r.gen_gap;
        row.bound_total = r.bound.total;
        row.gen_gap_l2 = r.gen_gap_l2;
      } catch (const std::exception& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.train_loss = row.test_loss = row.gen_gap = row.bound_total = row.gen_gap_l2 = nan;
        row.status = std::string("failed: ") + e.what();
        for (char& ch : row.status)
          if (ch == ',' || ch == '\n') ch = ';';
      }
    }
  };
  unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, jobs.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<SweepRow> rows;
  rows.reserve(jobs.size());
  for (auto& j : jobs) rows.push_back(std::move(j.row));
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return a.axis_value != b.axis_value ? a.axis_value < b.axis_value : a.seed < b.seed;
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "axis_value,seed,train_loss,test_loss,gen_gap,bound_total,gen_gap_l2,status\n";
  for (const auto& r : rows) {
    os << r.axis_value << ',' << r.seed << ',' << format_double(r.train_loss) << ','
       << format_double(r.test_loss) << ',' << format_double(r.gen_gap) << ','
       << format_double(r.bound_total) << ',' << format_double(r.gen_gap_l2) << ',' << r.status
       << '\n';
  }
  return os.str();
}

namespace {

using LMat = std::vector<std::vector<long double>>;

LMat widen(const Matrix& m) {
  LMat out(m.rows(), std::vector<long double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

LMat mul(const LMat& a, const LMat& b) {
  LMat c(a.size(), std::vector<long double>(b[0].size(), 0.0L));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

LMat transposed(const LMat& a) {
  LMat t(a[0].size(), std::vector<long double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

long double ortho_ld(const LMat& m) {
  const LMat g = mul(transposed(m), m);
  long double ss = 0.0L;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      const long double e = g[i][j] - (i == j ? 1.0L : 0.0L);
      ss += e * e;
    }
  return std::sqrt(ss);
}

struct ReferenceEval {
  long double objective = 0.0L;
  // Which side of every kink the instance sits on: threshold activity per
  // preactivation entry, then the clip flag per column.
  std::vector<bool> pattern;
};

// Extended-precision objective, written independently of the production
// forward pass; the finite differences divide its rounding error by 2h.
ReferenceEval reference_objective(const MeasurementMatrix& a, const NetParams& params,
                                  const NetConfig& cfg, const Dataset& batch, double beta,
                                  LossKind loss) {
  const LMat phi = widen(params.phi);
  const LMat w = mul(widen(a.matrix()), phi);
  const LMat wt = transposed(w);
  const LMat y = widen(batch.measurements());
  const LMat x = widen(batch.signals());
  const long double tau = cfg.tau;
  const long double thr = tau * static_cast<long double>(cfg.lambda);
  const std::size_t N = phi.size();
  const std::size_t m = y[0].size();

  ReferenceEval out;
  LMat z(N, std::vector<long double>(m, 0.0L));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LMat r = y;
    if (l > 0) {
      const LMat wz = mul(w, z);
      for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < m; ++j) r[i][j] -= wz[i][j];
    }
    const LMat g = mul(wt, r);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const long double u = (l > 0 ? z[i][j] : 0.0L) + tau * g[i][j];
        const bool active = std::abs(u) > thr;
        out.pattern.push_back(active);
        z[i][j] = active ? (u > 0 ? u - thr : u + thr) : 0.0L;
      }
  }
  LMat v = mul(params.psi ? widen(*params.psi) : phi, z);
  long double total = 0.0L;
  for (std::size_t j = 0; j < m; ++j) {
    long double nn = 0.0L;
    for (std::size_t i = 0; i < N; ++i) nn += v[i][j] * v[i][j];
    nn = std::sqrt(nn);
    const bool clipped = nn > static_cast<long double>(cfg.b_out);
    out.pattern.push_back(clipped);
    long double ss = 0.0L;
    for (std::size_t i = 0; i < N; ++i) {
      const long double xi = clipped ? v[i][j] * cfg.b_out / nn : v[i][j];
      ss += (xi - x[i][j]) * (xi - x[i][j]);
    }
    total += loss == LossKind::kMse ? ss : std::sqrt(ss);
  }
  out.objective = total / static_cast<long double>(m);
  if (beta != 0.0) {
    long double pen = ortho_ld(phi);
    if (params.psi) pen += ortho_ld(widen(*params.psi));
    out.objective += beta * pen;
  }
  return out;
}

}  // namespace

GradCheckResult gradient_check(const GradCheckOptions& opts) {
  if (opts.N == 0 || opts.n == 0 || opts.layers == 0 || opts.batch == 0)
    throw ConfigError("gradcheck dimensions must be positive");
  if (opts.N > 10) throw ConfigError("gradcheck is meant for small instances (N <= 10)");

  auto a = MeasurementMatrix::gaussian(opts.n, opts.N, opts.seed);
  auto rng = make_rng(opts.seed, streams::kInit);
  std::normal_distribution<double> gauss;
  auto perturbed_orthogonal = [&](std::uint64_t stream) {
    Matrix m = random_orthogonal(opts.N, opts.seed, stream);
    for (double& v : m.values()) v += 0.1 * gauss(rng);
    return m;
  };
  NetConfig cfg;
  cfg.layers = opts.layers;
  cfg.tau = 1.0 / (a.spectral_norm() * a.spectral_norm());
  cfg.lambda = 0.05;
  cfg.hypothesis = opts.hypothesis;

  NetParams params{perturbed_orthogonal(streams::kInit), std::nullopt};
  if (opts.hypothesis == HypothesisClass::H2) params.psi = perturbed_orthogonal(streams::kDictionary);

  const std::size_t s = std::max<std::size_t>(1, opts.N / 3);
  Matrix x = multiply(random_orthogonal(opts.N, opts.seed, streams::kDictionary),
                      sparse_codes(opts.N, s, opts.batch, opts.seed, streams::kTrainSignals));
  const Dataset batch = take_measurements(a, std::move(x));

  // Put b_out between two output norms near the median so both clip branches
  // occur without any column sitting on the boundary.
  cfg.b_out = 1e300;
  const ForwardResult probe = forward(a, params, cfg, batch.measurements());
  std::vector<double> norms;
  for (std::size_t j = 0; j < opts.batch; ++j) norms.push_back(column_norm(probe.tape.decoded, j));
  std::sort(norms.begin(), norms.end());
  const std::size_t k = norms.size() / 2;
  cfg.b_out = k == 0 ? 2.0 * norms[0] : 0.5 * (norms[k - 1] + norms[k]);
  if (!(cfg.b_out > 0.0)) cfg.b_out = 1.0;

  const LossGrad lg = loss_and_grad(a, params, cfg, batch, opts.ortho_weight, opts.loss);
  const std::vector<bool> base =
      reference_objective(a, params, cfg, batch, opts.ortho_weight, opts.loss).pattern;
  const double h = 1e-6;
  GradCheckResult res;

  auto check = [&](Matrix& target, const Matrix& grad) {
    auto vals = target.values();
    auto g = grad.values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double orig = vals[k];
      vals[k] = orig + h;
      const ReferenceEval plus = reference_objective(a, params, cfg, batch, opts.ortho_weight, opts.loss);
      vals[k] = orig - h;
      const ReferenceEval minus = reference_objective(a, params, cfg, batch, opts.ortho_weight, opts.loss);
      vals[k] = orig;
      if (plus.pattern != base || minus.pattern != base) {
        ++res.skipped;
        continue;
      }
      // The perturbed entries are exactly orig ± h only up to double rounding.
      const long double step = static_cast<long double>(orig + h) - static_cast<long double>(orig - h);
      const double fd = static_cast<double>((plus.objective - minus.objective) / step);
      const double denom = std::max({std::abs(g[k]), std::abs(fd), 1e-6});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(g[k] - fd) / denom);
      ++res.checked;
    }
  };
  check(params.phi, lg.grad_phi);
  if (params.psi) check(*params.psi, *lg.grad_psi);
  return res;
}

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitUsage = 2;

ExperimentConfig assemble_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides,
                                 const std::optional<std::uint64_t>& seed,
                                 const std::optional<std::string>& out, bool timing) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  for (const auto& o : overrides) apply_override(cfg, o);
  if (seed) cfg.set_seed(*seed);
  if (out) cfg.out_dir = *out;
  if (timing) cfg.train.record_timing = true;
  return cfg;
}

nlohmann::json params_sidecar(const NetConfig& net, std::size_t N) {
  return nlohmann::json{{"format", "UISTAPRM"}, {"version", 1}, {"N", N}, {"net", net}};
}

int cmd_train(const ExperimentConfig& cfg) {
  const RunResult r = run_experiment(cfg, true);
  const auto& dir = cfg.out_dir;
  write_file_atomic(dir / "record.csv", record_csv(r.trained.record));
  write_params(dir / "params.bin", r.trained.params);
  write_file_atomic(dir / "params.json",
                    params_sidecar(r.net, r.trained.params.phi.rows()).dump(2) + "\n");
  write_file_atomic(dir / "bound.json", nlohmann::json(r.bound).dump(2) + "\n");

  nlohmann::json summary{{"train_loss", r.train_loss},
                         {"test_loss", r.test_loss},
                         {"gen_gap", r.gen_gap},
                         {"gen_gap_l2", r.gen_gap_l2},
                         {"bound_total", r.bound.total},
                         {"loss", to_string(cfg.train.loss)},
                         {"initial_train_loss", r.trained.record.initial_train_loss},
                         {"initial_test_loss", r.trained.record.initial_test_loss}};
  if (r.ista) {
    summary["ista"] = {{"iters", cfg.ista_iters},
                       {"samples", r.ista->samples},
                       {"ista_error", r.ista->ista_error},
                       {"learned_error", r.ista->learned_error}};
  }
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");

  std::cout << "gen_gap " << format_double(r.gen_gap) << '\n'
            << "bound_total " << format_double(r.bound.total) << '\n';
  if (r.ista)
    std::cout << "ista_error " << format_double(r.ista->ista_error) << " learned_error "
              << format_double(r.ista->learned_error) << '\n';
  return kExitOk;
}

int cmd_ista(const ExperimentConfig& cfg) {
  const Problem p = build_problem(cfg);
  const NetConfig net = resolved_net(cfg, p);
  if (!(net.lambda > 0.0)) throw ConfigError("ista needs net.lambda > 0");
  const std::size_t samples = std::min(cfg.ista_samples, p.test.size());
  const Matrix dict = p.phi_true ? *p.phi_true : Matrix::identity(p.a.signal_dim());
  const Matrix a_eff = multiply(p.a.matrix(), dict);

  std::ostringstream os;
  os << "sample,initial_objective,final_objective,reconstruction_error\n";
  double total = 0.0;
  for (std::size_t j = 0; j < samples; ++j) {
    IstaProblem prob(a_eff, p.test.measurements().column(j), net.lambda, net.tau,
                     p.a.spectral_norm());
    const IstaResult r = ista_run(prob, cfg.ista_iters);
    const Vector x_hat = multiply(dict, r.x);
    double ss = 0.0;
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
      const double d = x_hat[i] - p.test.signals()(i, j);
      ss += d * d;
    }
    const double err = cfg.train.loss == LossKind::kMse ? ss : std::sqrt(ss);
    total += err;
    os << j << ',' << format_double(r.objective_trace.front()) << ','
       << format_double(r.objective_trace.back()) << ',' << format_double(err) << '\n';
  }
  write_file_atomic(cfg.out_dir / "ista.csv", os.str());
  std::cout << "ista_error " << format_double(samples ? total / static_cast<double>(samples) : 0.0)
            << '\n';
  return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& axis_name,
              const std::vector<std::size_t>& values, std::size_t repeats, unsigned threads) {
  const SweepAxis axis = parse_axis(axis_name);
  const auto rows = run_sweep(cfg, axis, values, repeats, threads);
  const auto path = cfg.out_dir / ("sweep_" + axis_name + ".csv");
  write_file_atomic(path, sweep_csv(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++failed;
      std::cerr << "run " << axis_name << "=" << r.axis_value << " seed " << r.seed << ' '
                << r.status << '\n';
    }
  }
  std::cout << "wrote " << path.string() << " (" << rows.size() << " runs, " << failed
            << " failed)\n";
  return failed == 0 ? kExitOk : kExitRunFailure;
}

int cmd_gradcheck(const GradCheckOptions& opts) {
  const GradCheckResult r = gradient_check(opts);
  std::cout << "max_rel_error " << format_double(r.max_rel_error) << '\n'
            << "checked " << r.checked << '\n'
            << "skipped " << r.skipped << " (kink crossings)\n";
  return r.max_rel_error <= 1e-5 ? kExitOk : kExitRunFailure;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Unfolded ISTA with a learned orthogonal dictionary"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool timing = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override a config key: section.key=value");
    sub->add_option("--seed", seed, "Seed for data and training");
    sub->add_option("--out", out, "Output directory");
    sub->add_flag("--timing", timing, "Record wall-clock seconds per epoch");
  };

  auto* train_cmd = app.add_subcommand("train", "Train one network and write its record, params and bound");
  add_common(train_cmd);

  auto* ista_cmd = app.add_subcommand("ista", "Classical ISTA baseline on the test signals");
  add_common(ista_cmd);

  std::string axis;
  std::vector<std::size_t> values;
  std::size_t repeats = 5;
  unsigned threads = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train over a list of L, N or n values");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--axis", axis, "L, N or n")->required()->check(CLI::IsMember({"L", "N", "n"}));
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  sweep_cmd->add_option("--repeats", repeats, "Seeds per value")->capture_default_str();
  sweep_cmd->add_option("--threads", threads, "Worker threads (0 = hardware)");

  BoundInputs bin;
  auto* bound_cmd = app.add_subcommand("bound", "Print the generalization bound report as JSON");
  bound_cmd->add_option("--N", bin.N)->required();
  bound_cmd->add_option("--n", bin.n)->required();
  bound_cmd->add_option("--m", bin.m)->required();
  bound_cmd->add_option("--L", bin.L)->required();
  bound_cmd->add_option("--tau", bin.tau)->capture_default_str();
  bound_cmd->add_option("--norm-a", bin.spec_norm_a)->required();
  bound_cmd->add_option("--frob-y", bin.frob_y)->required();
  bound_cmd->add_option("--contraction", bin.contraction)->required();
  bound_cmd->add_option("--b-in", bin.b_in)->capture_default_str();
  bound_cmd->add_option("--b-out", bin.b_out)->capture_default_str();
  bound_cmd->add_option("--delta", bin.delta)->capture_default_str();

  GradCheckOptions gc;
  std::string gc_class = "H1";
  std::string gc_loss = "mse";
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--seed", gc.seed)->capture_default_str();
  grad_cmd->add_option("--N", gc.N)->capture_default_str();
  grad_cmd->add_option("--n", gc.n)->capture_default_str();
  grad_cmd->add_option("--L", gc.layers)->capture_default_str();
  grad_cmd->add_option("--batch", gc.batch)->capture_default_str();
  grad_cmd->add_option("--beta", gc.ortho_weight, "Orthogonality penalty weight")->capture_default_str();
  grad_cmd->add_option("--class", gc_class)->check(CLI::IsMember({"H1", "H2"}))->capture_default_str();
  grad_cmd->add_option("--loss", gc_loss)->check(CLI::IsMember({"mse", "l2"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*bound_cmd) {
      const BoundReport r = generalization_bound(bin);
      std::cout << nlohmann::json(r).dump(2) << '\n';
      return kExitOk;
    }
    if (*grad_cmd) {
      gc.hypothesis = parse_hypothesis(gc_class);
      gc.loss = parse_loss(gc_loss);
      return cmd_gradcheck(gc);
    }
    const ExperimentConfig cfg = assemble_config(config_path, overrides, seed, out, timing);
    if (*train_cmd) return cmd_train(cfg);
    if (*ista_cmd) return cmd_ista(cfg);
    if (*sweep_cmd) return cmd_sweep(cfg, axis, values, repeats, threads);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitUsage;
}

}  // namespace uista
