#include "coladiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coladiff {
namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

// Per-sample scalar table lookup broadcast against x's trailing dims.
torch::Tensor per_sample(const std::vector<double>& values, const torch::Tensor& x) {
  std::vector<std::int64_t> shape(static_cast<std::size_t>(x.dim()), 1);
  shape[0] = static_cast<std::int64_t>(values.size());
  return torch::tensor(values, torch::kFloat64).to(x.scalar_type()).view(shape);
}

std::vector<std::int64_t> steps_of(const torch::Tensor& t) {
  auto flat = t.to(torch::kInt64).contiguous();
  return {flat.data_ptr<std::int64_t>(), flat.data_ptr<std::int64_t>() + flat.numel()};
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(std::int64_t steps, double beta_1, double beta_T) {
  if (steps < 2) throw std::invalid_argument("schedule needs T >= 2");
  if (!(beta_1 > 0.0) || !(beta_1 <= beta_T) || !(beta_T < 1.0)) {
    throw std::invalid_argument("schedule needs 0 < beta_1 <= beta_T < 1");
  }
  NoiseSchedule s;
  s.steps_ = steps;
  const auto n = static_cast<std::size_t>(steps) + 1;
  s.beta_.assign(n, 0.0);
  s.alpha_.assign(n, 1.0);
  s.alpha_bar_.assign(n, 1.0);
  s.posterior_var_.assign(n, 0.0);
  for (std::int64_t t = 1; t <= steps; ++t) {
    const auto i = static_cast<std::size_t>(t);
    s.beta_[i] = beta_1 + static_cast<double>(t - 1) / static_cast<double>(steps - 1) * (beta_T - beta_1);
    s.alpha_[i] = 1.0 - s.beta_[i];
    s.alpha_bar_[i] = s.alpha_bar_[i - 1] * s.alpha_[i];
    s.posterior_var_[i] = s.beta_[i] * (1.0 - s.alpha_bar_[i - 1]) / (1.0 - s.alpha_bar_[i]);
  }
  return s;
}

double NoiseSchedule::posterior_coef_k0(std::int64_t t) const {
  check_step(t);
  return std::sqrt(alpha_bar(t - 1)) * beta(t) / (1.0 - alpha_bar(t));
}

double NoiseSchedule::posterior_coef_kt(std::int64_t t) const {
  check_step(t);
  return std::sqrt(alpha(t)) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

torch::Tensor NoiseSchedule::alpha_bar_at(const torch::Tensor& t) const {
  std::vector<double> out;
  for (const auto step : steps_of(t)) {
    check_step(step, 0);
    out.push_back(alpha_bar(step));
  }
  return torch::tensor(out, torch::kFloat64).to(torch::kFloat32);
}

void NoiseSchedule::check_step(std::int64_t t, std::int64_t lo) const {
  if (t < lo || t > steps_) {
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(steps_) + "]");
  }
}

torch::Tensor forward_diffuse(const torch::Tensor& kappa0, std::int64_t t,
                              const torch::Tensor& epsilon, const NoiseSchedule& sched) {
  check_same_shape(kappa0, epsilon, "forward_diffuse");
  sched.check_step(t);
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * kappa0 + std::sqrt(1.0 - ab) * epsilon;
}

torch::Tensor forward_diffuse(const torch::Tensor& kappa0, const torch::Tensor& t,
                              const torch::Tensor& epsilon, const NoiseSchedule& sched) {
  check_same_shape(kappa0, epsilon, "forward_diffuse");
  const auto steps = steps_of(t);
  if (static_cast<std::int64_t>(steps.size()) != kappa0.size(0)) {
    throw std::invalid_argument("forward_diffuse: one step per batch entry required");
  }
  std::vector<double> signal, noise;
  for (const auto s : steps) {
    sched.check_step(s);
    signal.push_back(std::sqrt(sched.alpha_bar(s)));
    noise.push_back(std::sqrt(1.0 - sched.alpha_bar(s)));
  }
  return per_sample(signal, kappa0) * kappa0 + per_sample(noise, kappa0) * epsilon;
}

torch::Tensor reverse_step(const torch::Tensor& kappa_t, const torch::Tensor& eps_hat,
                           std::int64_t t, const NoiseSchedule& sched) {
  sched.check_step(t);
  return reverse_jump(kappa_t, eps_hat, t, t - 1, sched);
}

torch::Tensor reverse_jump(const torch::Tensor& kappa_t, const torch::Tensor& eps_hat,
                           std::int64_t t_from, std::int64_t t_to, const NoiseSchedule& sched,
                           double clip) {
  check_same_shape(kappa_t, eps_hat, "reverse_step");
  sched.check_step(t_from);
  sched.check_step(t_to, 0);
  if (t_to >= t_from) throw std::invalid_argument("reverse_jump must move to an earlier step");
  if (!(clip >= 0.0)) throw std::invalid_argument("reverse_jump: clip must be >= 0");
  const double ab_t = sched.alpha_bar(t_from);
  const double ab_prev = sched.alpha_bar(t_to);
  auto kappa0_hat = (kappa_t - std::sqrt(1.0 - ab_t) * eps_hat) / std::sqrt(ab_t);
  auto eps = eps_hat;
  if (clip > 0.0) {
    kappa0_hat = kappa0_hat.clamp(-clip, clip);
    eps = (kappa_t - std::sqrt(ab_t) * kappa0_hat) / std::sqrt(1.0 - ab_t);
  }
  return std::sqrt(ab_prev) * kappa0_hat + std::sqrt(1.0 - ab_prev) * eps;
}

std::vector<std::int64_t> strided_plan(std::int64_t total_steps, std::int64_t steps) {
  if (steps < 1 || steps > total_steps) {
    throw std::invalid_argument("strided_plan: steps must lie in [1, " +
                                std::to_string(total_steps) + "]");
  }
  if (steps == 1) return {total_steps};
  std::vector<std::int64_t> plan;
  plan.reserve(static_cast<std::size_t>(steps));
  const double stride = static_cast<double>(total_steps - 1) / static_cast<double>(steps - 1);
  for (std::int64_t i = 0; i < steps; ++i) {
    plan.push_back(static_cast<std::int64_t>(
        std::llround(static_cast<double>(total_steps) - stride * static_cast<double>(i))));
  }
  plan.back() = 1;
  return plan;
}

torch::Tensor epsilon_loss(const torch::Tensor& eps_true, const torch::Tensor& eps_pred) {
  check_same_shape(eps_true, eps_pred, "epsilon_loss");
  return (eps_pred - eps_true).pow(2).mean(torch::kFloat64);
}

torch::Tensor kl_term(const torch::Tensor& kappa0, const torch::Tensor& kappa_j, std::int64_t j,
                      const torch::Tensor& eps_pred, const NoiseSchedule& sched) {
  check_same_shape(kappa0, kappa_j, "kl_term");
  check_same_shape(kappa0, eps_pred, "kl_term");
  sched.check_step(j, 2);
  const double c0 = sched.posterior_coef_k0(j);
  const double ct = sched.posterior_coef_kt(j);
  const double ab = sched.alpha_bar(j);
  auto mean_q = c0 * kappa0 + ct * kappa_j;
  auto kappa0_hat = (kappa_j - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
  auto mean_p = c0 * kappa0_hat + ct * kappa_j;
  return (mean_q - mean_p).pow(2).mean(torch::kFloat64) / (2.0 * sched.posterior_variance(j));
}

torch::Tensor kl_term(const torch::Tensor& kappa0, const torch::Tensor& kappa_t,
                      const torch::Tensor& t, const torch::Tensor& eps_pred,
                      const NoiseSchedule& sched) {
  check_same_shape(kappa0, kappa_t, "kl_term");
  check_same_shape(kappa0, eps_pred, "kl_term");
  const auto steps = steps_of(t);
  if (static_cast<std::int64_t>(steps.size()) != kappa0.size(0)) {
    throw std::invalid_argument("kl_term: one step per batch entry required");
  }
  std::vector<double> c0, inv_sqrt_ab, sqrt_1m_ab, weight;
  for (const auto s : steps) {
    sched.check_step(s);
    const bool valid = s >= 2;
    c0.push_back(sched.posterior_coef_k0(s));
    inv_sqrt_ab.push_back(1.0 / std::sqrt(sched.alpha_bar(s)));
    sqrt_1m_ab.push_back(std::sqrt(1.0 - sched.alpha_bar(s)));
    weight.push_back(valid ? 1.0 / (2.0 * sched.posterior_variance(s)) : 0.0);
  }
  // mean_q - mean_p = c0 * (k0 - k0_hat); the k_t terms cancel.
  auto kappa0_hat = (kappa_t - per_sample(sqrt_1m_ab, kappa_t) * eps_pred) * per_sample(inv_sqrt_ab, kappa_t);
  auto gap = per_sample(c0, kappa0) * (kappa0 - kappa0_hat);
  return (gap.pow(2) * per_sample(weight, kappa0)).mean(torch::kFloat64);
}

double combined_loss(double eps_loss, double kl_loss) {
  if (!std::isfinite(eps_loss) || !std::isfinite(kl_loss)) {
    throw std::domain_error("combined_loss: non-finite loss term");
  }
  return eps_loss + kl_loss;
}

torch::Tensor combined_loss(const torch::Tensor& eps_loss, const torch::Tensor& kl_loss) {
  if (!torch::isfinite(eps_loss).all().item<bool>() || !torch::isfinite(kl_loss).all().item<bool>()) {
    throw std::domain_error("combined_loss: non-finite loss term");
  }
  return eps_loss + kl_loss;
}

}  // namespace coladiff
