#include "emplace/optim.hpp"

#include <cmath>
#include <string>

#include "emplace/error.hpp"

namespace emplace::optim {

void MarginParams::validate() const {
  if (!(scale > 0.0)) throw ConfigError("margin scale must be positive");
  if (!(period > 0.0)) throw ConfigError("margin period must be positive");
  if (!(fixed_alpha >= 0.0)) throw ConfigError("fixed margin must be non-negative");
}

double margin(double d_pn_days, const MarginParams& p) {
  if (!(d_pn_days >= 0.0)) throw DataError("margin needs a non-negative positive-negative gap");
  if (p.mode == MarginMode::fixed) return p.fixed_alpha;
  const double r = d_pn_days / p.period;
  return d_pn_days < p.period ? p.scale * r * r : r - p.scale;
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void check_dims(std::span<const double> anc, std::span<const double> pos, std::span<const double> neg) {
  if (anc.size() != pos.size() || anc.size() != neg.size()) {
    throw DataError("triplet embeddings differ in dimension");
  }
}

}  // namespace

double triplet_loss(std::span<const double> anc, std::span<const double> pos,
                    std::span<const double> neg, double alpha) {
  check_dims(anc, pos, neg);
  const double arg = distance(pos, anc) - distance(neg, anc) + alpha;
  return arg > 0.0 ? arg : 0.0;
}

TripletGrad triplet_loss_grad(std::span<const double> anc, std::span<const double> pos,
                              std::span<const double> neg, double alpha) {
  check_dims(anc, pos, neg);
  const std::size_t n = anc.size();
  TripletGrad g;
  g.d_anc.assign(n, 0.0);
  g.d_pos.assign(n, 0.0);
  g.d_neg.assign(n, 0.0);
  const double dp = distance(pos, anc);
  const double dn = distance(neg, anc);
  const double arg = dp - dn + alpha;
  if (!(arg > 0.0)) return g;
  g.loss = arg;
  g.active = true;
  if (dp > 0.0) {
    for (std::size_t i = 0; i < n; ++i) g.d_pos[i] = (pos[i] - anc[i]) / dp;
  } else {
    g.zero_pos_distance = true;
  }
  if (dn > 0.0) {
    for (std::size_t i = 0; i < n; ++i) g.d_neg[i] = -(neg[i] - anc[i]) / dn;
  } else {
    g.zero_neg_distance = true;
  }
  for (std::size_t i = 0; i < n; ++i) g.d_anc[i] = -g.d_pos[i] - g.d_neg[i];
  return g;
}

double global_norm(std::span<const double> g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

Adam::Adam(std::size_t num_params, AdamConfig cfg)
    : cfg_(cfg), m_(num_params, 0.0), v_(num_params, 0.0), scratch_(num_params, 0.0) {
  if (!(cfg_.lr >= 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
      !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) || !(cfg_.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

StepInfo Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DataError("Adam step: parameter/gradient size mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("non-finite gradient at index " + std::to_string(i) + "; step refused");
    }
  }
  StepInfo info;
  info.grad_norm = global_norm(grads);
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && info.grad_norm > cfg_.clip_norm) {
    scale = cfg_.clip_norm / info.grad_norm;
    info.clipped = true;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] * scale;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    scratch_[i] = cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
  // A zero update is skipped so lr = 0 leaves params bitwise intact (x - -0.0 flips -0.0).
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (scratch_[i] != 0.0) params[i] -= scratch_[i];
  }
  return info;
}

}  // namespace emplace::optim
