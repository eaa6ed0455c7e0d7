#include "uista/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "uista/io.hpp"
#include "uista/random.hpp"

namespace uista {

void TrainConfig::validate(std::size_t m_train) const {
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (batch_size > m_train)
    throw std::invalid_argument("train config: batch_size exceeds the training set size");
  if (!(learning_rate >= 0.0))
    throw std::invalid_argument("train config: learning_rate must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("train config: momentum must lie in [0,1)");
  if (!(ortho_weight >= 0.0))
    throw std::invalid_argument("train config: ortho_weight must be nonnegative");
}

double ortho_penalty(const Matrix& m, Matrix* grad) {
  Matrix e = multiply_tn(m, m);
  for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) -= 1.0;
  const double p = frobenius_norm(e);
  if (grad != nullptr) {
    // At roundoff level E/‖E‖ is noise; take the zero subgradient instead.
    if (p <= 1e-12 * static_cast<double>(m.cols())) {
      *grad = Matrix(m.rows(), m.cols());
    } else {
      *grad = multiply(m, e);
      *grad *= 2.0 / p;
    }
  }
  return p;
}

namespace {

// Per-column loss and dℓ/dx̂ (scaled by 1/batch).
double output_loss(const Matrix& out, const Matrix& x, LossKind kind, Matrix* grad) {
  const std::size_t m = x.cols();
  const double inv_m = 1.0 / static_cast<double>(m);
  if (grad) *grad = Matrix(out.rows(), m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double d = out(i, j) - x(i, j);
      ss += d * d;
    }
    if (kind == LossKind::kMse) {
      total += ss;
      if (grad)
        for (std::size_t i = 0; i < x.rows(); ++i) (*grad)(i, j) = 2.0 * inv_m * (out(i, j) - x(i, j));
    } else {
      const double nrm = std::sqrt(ss);
      total += nrm;
      if (grad && nrm > 0.0)
        for (std::size_t i = 0; i < x.rows(); ++i)
          (*grad)(i, j) = inv_m * (out(i, j) - x(i, j)) / nrm;
    }
  }
  return total * inv_m;
}

double penalty_terms(const NetParams& params, const NetConfig& cfg, double weight,
                     Matrix* grad_phi, Matrix* grad_psi) {
  if (weight == 0.0) return 0.0;
  Matrix g;
  double p = ortho_penalty(params.phi, grad_phi ? &g : nullptr);
  if (grad_phi) axpy(weight, g, *grad_phi);
  if (cfg.hypothesis == HypothesisClass::H2) {
    p += ortho_penalty(*params.psi, grad_psi ? &g : nullptr);
    if (grad_psi) axpy(weight, g, *grad_psi);
  }
  return weight * p;
}

}  // namespace

LossGrad loss_and_grad(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                       const Dataset& batch, double ortho_weight, LossKind kind) {
  UISTA_EXPECT(batch.size() > 0);
  const Matrix& y = batch.measurements();
  ForwardResult fr = forward(a, params, cfg, y);
  const ForwardTape& tape = fr.tape;

  LossGrad out;
  Matrix g_out;
  out.loss = output_loss(fr.output, batch.signals(), kind, &g_out);

  // Through the clip σ: for clipped columns x̂ = c·v/‖v‖.
  Matrix g_dec = std::move(g_out);
  for (std::size_t j = 0; j < g_dec.cols(); ++j) {
    if (!tape.clipped[j]) continue;
    const double vn = column_norm(tape.decoded, j);
    double vg = 0.0;
    for (std::size_t i = 0; i < g_dec.rows(); ++i) vg += tape.decoded(i, j) * g_dec(i, j);
    const double s = tape.clip_scale[j];
    for (std::size_t i = 0; i < g_dec.rows(); ++i)
      g_dec(i, j) = s * (g_dec(i, j) - tape.decoded(i, j) * vg / (vn * vn));
  }

  const Matrix& z_last = tape.postactivations.back();
  Matrix g_decoder = multiply_nt(g_dec, z_last);
  Matrix g_z = multiply_tn(params.decoder(), g_dec);

  // Back through the shared-weight layers; W = AΦ is rebuilt, not stored.
  const Matrix w = multiply(a.matrix(), params.phi);
  const double thr = cfg.tau * cfg.lambda;
  Matrix g_w(w.rows(), w.cols());
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const Matrix& u = tape.preactivations[l];
    Matrix g_u = std::move(g_z);
    auto gu = g_u.values();
    auto us = u.values();
    for (std::size_t k = 0; k < gu.size(); ++k)
      if (!(std::abs(us[k]) > thr)) gu[k] = 0.0;

    if (l == 0) {
      axpy(cfg.tau, multiply_nt(y, g_u), g_w);
      break;
    }
    const Matrix& z_prev = tape.postactivations[l - 1];
    Matrix r = multiply(w, z_prev);
    auto rs = r.values();
    auto ys = y.values();
    for (std::size_t k = 0; k < rs.size(); ++k) rs[k] = ys[k] - rs[k];
    const Matrix wu = multiply(w, g_u);
    axpy(cfg.tau, multiply_nt(r, g_u), g_w);
    axpy(-cfg.tau, multiply_nt(wu, z_prev), g_w);
    g_z = std::move(g_u);
    axpy(-cfg.tau, multiply_tn(w, wu), g_z);
  }

  out.grad_phi = multiply_tn(a.matrix(), g_w);
  if (cfg.hypothesis == HypothesisClass::H1) {
    out.grad_phi += g_decoder;
  } else {
    out.grad_psi = std::move(g_decoder);
  }
  out.loss += penalty_terms(params, cfg, ortho_weight, &out.grad_phi,
                            out.grad_psi ? &*out.grad_psi : nullptr);
  return out;
}

double penalized_loss(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                      const Dataset& batch, double ortho_weight, LossKind kind) {
  return evaluate(a, params, cfg, batch, kind) +
         penalty_terms(params, cfg, ortho_weight, nullptr, nullptr);
}

double evaluate(const MeasurementMatrix& a, const NetParams& params, const NetConfig& cfg,
                const Dataset& data, LossKind kind) {
  UISTA_EXPECT(data.size() > 0);
  const Matrix out = reconstruct(a, params, cfg, data.measurements());
  return output_loss(out, data.signals(), kind, nullptr);
}

TrainResult train(const MeasurementMatrix& a, NetParams init, const NetConfig& cfg,
                  const Dataset& train_set, const Dataset& test_set, const TrainConfig& tcfg) {
  tcfg.validate(train_set.size());
  cfg.validate(a);

  TrainResult res{std::move(init), {}};
  NetParams& p = res.params;
  TrainRecord& rec = res.record;
  rec.initial_train_loss = evaluate(a, p, cfg, train_set, tcfg.loss);
  rec.initial_test_loss = evaluate(a, p, cfg, test_set, tcfg.loss);
  const double initial_objective =
      rec.initial_train_loss + penalty_terms(p, cfg, tcfg.ortho_weight, nullptr, nullptr);
  const double divergence_limit = 1e6 * std::max(initial_objective, 1e-300);

  Matrix vel_phi(p.phi.rows(), p.phi.cols());
  std::optional<Matrix> vel_psi;
  if (p.psi) vel_psi = Matrix(p.psi->rows(), p.psi->cols());

  auto rng = make_rng(tcfg.seed, streams::kShuffle);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double grad_norm_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      const Dataset batch = train_set.subset(std::span(order).subspan(start, end - start));
      LossGrad lg = loss_and_grad(a, p, cfg, batch, tcfg.ortho_weight, tcfg.loss);
      if (!std::isfinite(lg.loss) || lg.loss > divergence_limit) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                              ": batch loss " + format_double(lg.loss) +
                              " against initial objective " + format_double(initial_objective));
      }
      double gn = frobenius_dot(lg.grad_phi, lg.grad_phi);
      if (lg.grad_psi) gn += frobenius_dot(*lg.grad_psi, *lg.grad_psi);
      grad_norm_sum += std::sqrt(gn);
      ++batches;

      vel_phi *= tcfg.momentum;
      axpy(-tcfg.learning_rate, lg.grad_phi, vel_phi);
      p.phi += vel_phi;
      if (p.psi) {
        *vel_psi *= tcfg.momentum;
        axpy(-tcfg.learning_rate, *lg.grad_psi, *vel_psi);
        *p.psi += *vel_psi;
      }
      if (tcfg.retraction == Retraction::kEachStep) {
        p.phi = polar_retraction(p.phi);
        if (p.psi) p.psi = polar_retraction(*p.psi);
      }
    }
    if (tcfg.retraction == Retraction::kAtEnd && epoch == tcfg.epochs) {
      p.phi = polar_retraction(p.phi);
      if (p.psi) p.psi = polar_retraction(*p.psi);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = evaluate(a, p, cfg, train_set, tcfg.loss);
    st.test_loss = evaluate(a, p, cfg, test_set, tcfg.loss);
    st.gen_gap = std::abs(st.test_loss - st.train_loss);
    st.ortho_dev = orthogonality_deviation(p.phi);
    if (p.psi) st.ortho_dev = std::max(st.ortho_dev, orthogonality_deviation(*p.psi));
    st.grad_norm = batches ? grad_norm_sum / static_cast<double>(batches) : 0.0;
    if (tcfg.record_timing)
      st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(st);
  }
  return res;
}

std::string record_csv(const TrainRecord& record) {
  std::ostringstream os;
  os << "epoch,train_loss,test_loss,gen_gap,ortho_dev,grad_norm,seconds\n";
  for (const auto& e : record.epochs) {
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.test_loss) << ','
       << format_double(e.gen_gap) << ',' << format_double(e.ortho_dev) << ','
       << format_double(e.grad_norm) << ',' << format_double(e.seconds) << '\n';
  }
  return os.str();
}

std::string to_string(LossKind k) { return k == LossKind::kMse ? "mse" : "l2"; }

LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "l2") return LossKind::kL2;
  throw std::invalid_argument("unknown loss '" + s + "' (expected mse or l2)");
}

std::string to_string(Retraction r) {
  switch (r) {
    case Retraction::kPenaltyOnly: return "penalty_only";
    case Retraction::kEachStep: return "retract_each_step";
    case Retraction::kAtEnd: return "retract_at_end";
  }
  return "?";
}

Retraction parse_retraction(const std::string& s) {
  if (s == "penalty_only") return Retraction::kPenaltyOnly;
  if (s == "retract_each_step") return Retraction::kEachStep;
  if (s == "retract_at_end") return Retraction::kAtEnd;
  throw std::invalid_argument("unknown retraction '" + s + "'");
}

}  // namespace uista
