#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emplace::optim {

enum class MarginMode { adaptive, fixed };

struct MarginParams {
  double scale = 0.5;
  double period = 365.0;  ///< days
  MarginMode mode = MarginMode::adaptive;
  double fixed_alpha = 1.0;

  void validate() const;
};

/// Adaptive: scale * (d_pn / period)^2 below one period, d_pn / period - scale
/// above it (the two branches meet at d_pn = period). Fixed: fixed_alpha.
double margin(double d_pn_days, const MarginParams& p = {});

/// max(|pos - anc| - |neg - anc| + alpha, 0) with Euclidean norms.
double triplet_loss(std::span<const double> anc, std::span<const double> pos,
                    std::span<const double> neg, double alpha);

struct TripletGrad {
  double loss = 0.0;
  bool active = false;
  /// The hinge was active but a distance was zero; that branch contributes
  /// a zero subgradient.
  bool zero_pos_distance = false;
  bool zero_neg_distance = false;
  std::vector<double> d_anc;
  std::vector<double> d_pos;
  std::vector<double> d_neg;
};

/// Loss and its gradient with respect to all three embeddings. At the hinge
/// boundary (argument exactly 0) the loss and gradient are both zero.
TripletGrad triplet_loss_grad(std::span<const double> anc, std::span<const double> pos,
                              std::span<const double> neg, double alpha);

double global_norm(std::span<const double> g);

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.5;  ///< <= 0 disables clipping
};

struct StepInfo {
  double grad_norm = 0.0;
  bool clipped = false;
};

/// Bias-corrected Adam with global L2-norm gradient clipping applied first.
class Adam {
 public:
  Adam(std::size_t num_params, AdamConfig cfg = {});

  /// Throws NumericalError (and leaves everything untouched) when `grads`
  /// contains a non-finite entry.
  StepInfo step(std::span<double> params, std::span<const double> grads);

  const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  std::uint64_t t() const noexcept { return t_; }
  std::span<const double> m() const noexcept { return m_; }
  std::span<const double> v() const noexcept { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::vector<double> scratch_;
  std::uint64_t t_ = 0;
};

}  // namespace emplace::optim
