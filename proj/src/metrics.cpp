#include "coladiff/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace coladiff {
namespace F = torch::nn::functional;

namespace {

constexpr std::int64_t kWindow = 7;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
  }
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_val) {
  check_pair(a, b, "psnr");
  if (!(max_val > 0.0)) throw std::invalid_argument("psnr: max_val must be > 0");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

torch::Tensor ssim_window() {
  auto x = torch::arange(kWindow, torch::kFloat64) - (kWindow - 1) / 2.0;
  auto g = torch::exp(-x.pow(2) / (2.0 * kSigma * kSigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  check_pair(a, b, "ssim");
  if (a.dim() != 2) throw std::invalid_argument("ssim: expected a single [H, W] image");
  if (a.size(0) < kWindow || a.size(1) < kWindow) {
    throw std::invalid_argument("ssim: image smaller than the 7x7 window");
  }
  const auto w = ssim_window().view({1, 1, kWindow, kWindow});
  auto x = a.to(torch::kFloat64).view({1, 1, a.size(0), a.size(1)});
  auto y = b.to(torch::kFloat64).view({1, 1, b.size(0), b.size(1)});
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, w); };

  auto mx = filt(x), my = filt(y);
  auto vx = filt(x * x) - mx * mx;
  auto vy = filt(y * y) - my * my;
  auto cxy = filt(x * y) - mx * my;
  auto map = ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
             ((mx * mx + my * my + kC1) * (vx + vy + kC2));
  return map.mean().item<double>();
}

}  // namespace coladiff
