#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace coladiff {

/// Variance schedule of the forward process.
///
/// Tables are indexed by step t in [0, T]. Entry 0 holds the boundary
/// convention alpha_bar[0] = 1 (and beta[0] = 0); entries 1..T are the
/// per-step values. All tables are accumulated in double precision.
class NoiseSchedule {
 public:
  /// beta_t = beta_1 + (t - 1) / (T - 1) * (beta_T - beta_1).
  static NoiseSchedule linear(std::int64_t steps, double beta_1, double beta_T);

  std::int64_t steps() const { return steps_; }
  double beta(std::int64_t t) const { return beta_.at(static_cast<std::size_t>(t)); }
  double alpha(std::int64_t t) const { return alpha_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(std::int64_t t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  /// Variance of q(k_{t-1} | k_t, k_0); zero at t = 1.
  double posterior_variance(std::int64_t t) const {
    return posterior_var_.at(static_cast<std::size_t>(t));
  }

  /// Coefficients of the posterior mean: mu = c0 * k_0 + ct * k_t.
  double posterior_coef_k0(std::int64_t t) const;
  double posterior_coef_kt(std::int64_t t) const;

  /// alpha_bar gathered at per-sample steps, as a float tensor.
  torch::Tensor alpha_bar_at(const torch::Tensor& t) const;

  void check_step(std::int64_t t, std::int64_t lo = 1) const;

 private:
  std::int64_t steps_ = 0;
  std::vector<double> beta_, alpha_, alpha_bar_, posterior_var_;
};

/// sqrt(alpha_bar_t) * k0 + sqrt(1 - alpha_bar_t) * eps.
torch::Tensor forward_diffuse(const torch::Tensor& kappa0, std::int64_t t,
                              const torch::Tensor& epsilon, const NoiseSchedule& sched);

/// Batched form: `t` holds one step per leading-dimension entry.
torch::Tensor forward_diffuse(const torch::Tensor& kappa0, const torch::Tensor& t,
                              const torch::Tensor& epsilon, const NoiseSchedule& sched);

/// Deterministic update from step t to step t-1 using the predicted noise;
/// no fresh noise is injected.
torch::Tensor reverse_step(const torch::Tensor& kappa_t, const torch::Tensor& eps_hat,
                           std::int64_t t, const NoiseSchedule& sched);

/// Same update between arbitrary steps t_from > t_to >= 0. With clip > 0 the
/// implied kappa_0 is clamped to [-clip, clip] and the noise re-derived from it.
torch::Tensor reverse_jump(const torch::Tensor& kappa_t, const torch::Tensor& eps_hat,
                           std::int64_t t_from, std::int64_t t_to, const NoiseSchedule& sched,
                           double clip = 0.0);

/// Strictly decreasing subsequence of T..1 with `steps` entries, starting at T
/// and (for steps >= 2) ending at 1, spaced as evenly as integer rounding allows.
std::vector<std::int64_t> strided_plan(std::int64_t total_steps, std::int64_t steps);

/// Element-mean squared error; the mean is accumulated in double precision.
torch::Tensor epsilon_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred);

/// KL(q(k_{j-1} | k_j, k_0) || p_theta(k_{j-1} | k_j)) with both variances
/// fixed to the posterior variance at j; the model mean is implied by
/// eps_pred. Reduced by the element mean. Requires 2 <= j <= T.
torch::Tensor kl_term(const torch::Tensor& kappa0, const torch::Tensor& kappa_j, std::int64_t j,
                      const torch::Tensor& eps_pred, const NoiseSchedule& sched);

/// Batched KL term: per-sample steps in `t`; samples with t = 1 (degenerate
/// posterior) contribute zero. Mean over all elements of the batch.
torch::Tensor kl_term(const torch::Tensor& kappa0, const torch::Tensor& kappa_t,
                      const torch::Tensor& t, const torch::Tensor& eps_pred,
                      const NoiseSchedule& sched);

/// Unweighted sum of the two terms; throws on non-finite input.
double combined_loss(double eps_loss, double kl_loss);
torch::Tensor combined_loss(const torch::Tensor& eps_loss, const torch::Tensor& kl_loss);

}  // namespace coladiff
