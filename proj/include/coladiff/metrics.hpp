#pragma once

#include <torch/torch.h>

namespace coladiff {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(max_val^2 / MSE) in dB, capped at 100 dB when the images match.
double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_val = 1.0);

/// Mean local SSIM over all valid 7x7 windows (Gaussian weights, sigma 1.5,
/// C1 = 0.01^2, C2 = 0.03^2). Inputs are [H, W] in [0, 1].
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Normalised 7x7 Gaussian window, float64.
torch::Tensor ssim_window();

}  // namespace coladiff
