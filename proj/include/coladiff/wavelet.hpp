#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

namespace coladiff {

/// Detail subbands of one decomposition level.
struct DetailBands {
  torch::Tensor horizontal;
  torch::Tensor vertical;
  torch::Tensor diagonal;
};

/// Multi-level orthonormal Haar decomposition of a grid. Leading tensor
/// dimensions are carried through untouched, so a [B, C, H, W] feature map is
/// decomposed per channel.
struct WaveletPyramid {
  /// Approximation band at the coarsest level.
  torch::Tensor approx;
  /// details[0] is level 1 (finest, size input/2); details.back() is the coarsest.
  std::vector<DetailBands> details;

  int levels() const { return static_cast<int>(details.size()); }
};

WaveletPyramid dwt2(const torch::Tensor& grid, int levels);
torch::Tensor idwt2(const WaveletPyramid& pyramid);

/// sign(x) * max(|x| - lambda, 0).
torch::Tensor soft_threshold(const torch::Tensor& coeffs, double lambda);
/// Tensor threshold, broadcast against coeffs (e.g. one value per channel).
torch::Tensor soft_threshold(const torch::Tensor& coeffs, const torch::Tensor& lambda);

/// Robust noise level median(|d|) / 0.6745 of a finest diagonal band, one value
/// per leading index, shaped [..., 1, 1]. Gradients flow through the median.
torch::Tensor noise_sigma_estimate(const torch::Tensor& finest_diagonal);

/// sigma * sqrt(2 ln n) for a subband with n elements.
torch::Tensor universal_threshold(const torch::Tensor& sigma, std::int64_t n);

struct FilterPolicy {
  int block_size = 2;
  int match_count = 4;
  /// Soft-threshold value; empty selects the universal threshold.
  std::optional<double> threshold;

  void validate() const;
};

/// Similar-block averaging: every block_size x block_size patch (unit stride)
/// is replaced by the mean of its match_count nearest patches in squared
/// distance (itself included), and overlapping patches are averaged back with
/// uniform weights. Leading dimensions are independent grids. When
/// max_distance (one value per grid) is given, matches farther than it are
/// left out of the group; the patch itself always stays in.
torch::Tensor block_match_filter(const torch::Tensor& coeffs, const FilterPolicy& policy,
                                 const torch::Tensor& max_distance = {});

struct CoopFilterConfig {
  bool enabled = true;
  /// Decomposition depth; 0 picks 1 below 16 pixels per side and 2 otherwise.
  int levels = 0;
  FilterPolicy approx_policy{2, 4, std::nullopt};
  FilterPolicy diagonal_policy{2, 4, std::nullopt};
  /// Threshold for the horizontal and vertical bands; empty means universal.
  std::optional<double> threshold;
  /// Block matching only groups patches whose squared distance to the
  /// reference is within match_tolerance * 2 * b^2 * sigma^2, a multiple of
  /// the expected distance between two noisy copies of one b x b patch.
  double match_tolerance = 3.0;
};

int coop_filter_levels(const CoopFilterConfig& cfg, std::int64_t height, std::int64_t width);

/// Wavelet-domain cooperative filtering of a feature map [..., h, w]:
/// block matching on the approximation band and on every diagonal band, soft
/// thresholding of every horizontal and vertical band, then reconstruction.
/// Bands smaller than the matching block pass through unchanged, and match
/// counts are capped at the number of available patches. sigma is the robust
/// noise level of the finest diagonal band.
torch::Tensor cooperative_filter(const torch::Tensor& feature, const CoopFilterConfig& cfg);

}  // namespace coladiff
