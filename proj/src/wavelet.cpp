#include "coladiff/wavelet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coladiff {
namespace {

using torch::indexing::None;
using torch::indexing::Slice;

void check_grid(const torch::Tensor& g, const char* what) {
  if (g.dim() < 2) throw std::invalid_argument(std::string(what) + ": need at least a 2D grid");
}

// Flattens leading dims so the grid reads [N, 1, h, w].
torch::Tensor as_planes(const torch::Tensor& g) {
  return g.reshape({-1, 1, g.size(-2), g.size(-1)});
}

}  // namespace

WaveletPyramid dwt2(const torch::Tensor& grid, int levels) {
  check_grid(grid, "dwt2");
  if (levels < 1) throw std::invalid_argument("dwt2: levels must be >= 1");
  const std::int64_t div = std::int64_t{1} << levels;
  if (grid.size(-2) % div != 0 || grid.size(-1) % div != 0) {
    throw std::invalid_argument("dwt2: grid " + std::to_string(grid.size(-2)) + "x" +
                                std::to_string(grid.size(-1)) + " is not divisible by 2^" +
                                std::to_string(levels));
  }
  WaveletPyramid pyr;
  torch::Tensor current = grid;
  for (int level = 0; level < levels; ++level) {
    auto a = current.index({"...", Slice(0, None, 2), Slice(0, None, 2)});
    auto b = current.index({"...", Slice(0, None, 2), Slice(1, None, 2)});
    auto c = current.index({"...", Slice(1, None, 2), Slice(0, None, 2)});
    auto d = current.index({"...", Slice(1, None, 2), Slice(1, None, 2)});
    pyr.details.push_back({0.5 * (a + b - c - d), 0.5 * (a - b + c - d), 0.5 * (a - b - c + d)});
    current = 0.5 * (a + b + c + d);
  }
  pyr.approx = current;
  return pyr;
}

torch::Tensor idwt2(const WaveletPyramid& pyramid) {
  if (!pyramid.approx.defined()) throw std::invalid_argument("idwt2: empty pyramid");
  torch::Tensor current = pyramid.approx;
  for (int level = pyramid.levels() - 1; level >= 0; --level) {
    const auto& bands = pyramid.details[static_cast<std::size_t>(level)];
    if (bands.horizontal.sizes() != current.sizes() || bands.vertical.sizes() != current.sizes() ||
        bands.diagonal.sizes() != current.sizes()) {
      throw std::invalid_argument("idwt2: inconsistent band shapes at level " +
                                  std::to_string(level + 1));
    }
    const auto& h = bands.horizontal;
    const auto& v = bands.vertical;
    const auto& d = bands.diagonal;
    auto a = 0.5 * (current + h + v + d);
    auto b = 0.5 * (current + h - v - d);
    auto c = 0.5 * (current - h + v - d);
    auto e = 0.5 * (current - h - v + d);
    auto top = torch::stack({a, b}, -1).flatten(-2);
    auto bottom = torch::stack({c, e}, -1).flatten(-2);
    current = torch::stack({top, bottom}, -2).flatten(-3, -2);
  }
  return current;
}

torch::Tensor soft_threshold(const torch::Tensor& coeffs, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("soft_threshold: lambda must be >= 0");
  return torch::sign(coeffs) * torch::relu(coeffs.abs() - lambda);
}

torch::Tensor soft_threshold(const torch::Tensor& coeffs, const torch::Tensor& lambda) {
  if ((lambda < 0).any().item<bool>()) {
    throw std::invalid_argument("soft_threshold: lambda must be >= 0");
  }
  return torch::sign(coeffs) * torch::relu(coeffs.abs() - lambda);
}

torch::Tensor noise_sigma_estimate(const torch::Tensor& finest_diagonal) {
  check_grid(finest_diagonal, "noise_sigma_estimate");
  auto flat = finest_diagonal.abs().flatten(-2);
  return (torch::quantile(flat, 0.5, -1, true) / 0.6745).unsqueeze(-1);
}

torch::Tensor universal_threshold(const torch::Tensor& sigma, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("universal_threshold: empty subband");
  return sigma * std::sqrt(2.0 * std::log(static_cast<double>(n)));
}

void FilterPolicy::validate() const {
  if (block_size < 1) throw std::invalid_argument("filter policy: block_size must be >= 1");
  if (match_count < 1) throw std::invalid_argument("filter policy: match_count must be >= 1");
  if (threshold && !(*threshold >= 0.0)) {
    throw std::invalid_argument("filter policy: threshold must be >= 0");
  }
}

torch::Tensor block_match_filter(const torch::Tensor& coeffs, const FilterPolicy& policy,
                                 const torch::Tensor& max_distance) {
  check_grid(coeffs, "block_match_filter");
  policy.validate();
  const std::int64_t h = coeffs.size(-2), w = coeffs.size(-1), b = policy.block_size;
  if (h < b || w < b) {
    throw std::invalid_argument("block_match_filter: grid " + std::to_string(h) + "x" +
                                std::to_string(w) + " is smaller than block " + std::to_string(b));
  }
  const std::int64_t patches = (h - b + 1) * (w - b + 1);
  if (policy.match_count > patches) {
    throw std::invalid_argument("block_match_filter: match_count " +
                                std::to_string(policy.match_count) + " exceeds the " +
                                std::to_string(patches) + " available patches");
  }
  if (policy.match_count == 1) return coeffs;

  const auto planes = as_planes(coeffs);
  const std::int64_t n = planes.size(0);
  // [N, P, b*b]
  auto blocks = torch::nn::functional::unfold(planes, torch::nn::functional::UnfoldFuncOptions({b, b}))
                    .transpose(1, 2);
  torch::Tensor nearest, weights;
  {
    torch::NoGradGuard no_grad;
    auto ref = blocks.detach();
    auto sq = ref.pow(2).sum(-1);
    auto dist = sq.unsqueeze(2) + sq.unsqueeze(1) - 2.0 * torch::bmm(ref, ref.transpose(1, 2));
    // Exact zero on the diagonal so each patch is its own first match.
    dist.diagonal(0, 1, 2).zero_();
    auto [d, idx] = dist.clamp_min(0.0).topk(policy.match_count, -1, false, true);
    nearest = idx;
    if (max_distance.defined()) {
      auto bound = max_distance.reshape({-1, 1, 1}).expand({n, 1, 1}).to(d.dtype());
      weights = (d <= bound).to(coeffs.scalar_type());
    } else {
      weights = torch::ones_like(d, coeffs.options());
    }
  }
  const std::int64_t k = policy.match_count;
  auto index = nearest.reshape({n, patches * k, 1}).expand({n, patches * k, b * b});
  auto members = blocks.gather(1, index).reshape({n, patches, k, b * b});
  auto grouped = (members * weights.unsqueeze(-1)).sum(2) / weights.sum(-1, true);

  const auto fold_opts = torch::nn::functional::FoldFuncOptions({h, w}, {b, b});
  auto summed = torch::nn::functional::fold(grouped.transpose(1, 2), fold_opts);
  auto counts = torch::nn::functional::fold(
      torch::ones({1, b * b, patches}, coeffs.options()), fold_opts);
  return (summed / counts).reshape(coeffs.sizes());
}

int coop_filter_levels(const CoopFilterConfig& cfg, std::int64_t height, std::int64_t width) {
  if (cfg.levels > 0) return cfg.levels;
  return std::min(height, width) < 16 ? 1 : 2;
}

torch::Tensor cooperative_filter(const torch::Tensor& feature, const CoopFilterConfig& cfg) {
  check_grid(feature, "cooperative_filter");
  if (!cfg.enabled) return feature;
  const int levels = coop_filter_levels(cfg, feature.size(-2), feature.size(-1));
  WaveletPyramid pyr = dwt2(feature, levels);

  // Noise level of the finest diagonal band; drives the universal threshold
  // and the similarity bound of block matching.
  const auto sigma = noise_sigma_estimate(pyr.details.front().diagonal);
  const auto bound = [&](const FilterPolicy& policy) {
    const double scale = 2.0 * cfg.match_tolerance * policy.block_size * policy.block_size;
    return (scale * sigma.detach().square()).reshape({-1});
  };

  auto match = [&](const torch::Tensor& band, const FilterPolicy& policy) {
    const std::int64_t h = band.size(-2), w = band.size(-1);
    if (h < policy.block_size || w < policy.block_size) return band;
    FilterPolicy capped = policy;
    const std::int64_t patches = (h - policy.block_size + 1) * (w - policy.block_size + 1);
    capped.match_count = static_cast<int>(std::min<std::int64_t>(policy.match_count, patches));
    return block_match_filter(band, capped, bound(policy));
  };

  pyr.approx = match(pyr.approx, cfg.approx_policy);
  for (auto& bands : pyr.details) {
    bands.diagonal = match(bands.diagonal, cfg.diagonal_policy);
    const std::int64_t n = bands.horizontal.size(-2) * bands.horizontal.size(-1);
    if (cfg.threshold) {
      bands.horizontal = soft_threshold(bands.horizontal, *cfg.threshold);
      bands.vertical = soft_threshold(bands.vertical, *cfg.threshold);
    } else {
      const auto lambda = universal_threshold(sigma, n);
      bands.horizontal = soft_threshold(bands.horizontal, lambda);
      bands.vertical = soft_threshold(bands.vertical, lambda);
    }
  }
  return idwt2(pyr);
}

}  // namespace coladiff
