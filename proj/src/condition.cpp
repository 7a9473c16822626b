#include "coladiff/condition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coladiff {

std::vector<std::string> source_modalities(std::vector<std::string> all, const std::string& target) {
  std::erase(all, target);
  std::sort(all.begin(), all.end());
  return all;
}

std::int64_t condition_channels(std::int64_t n_sources, std::int64_t latent_channels,
                                bool structural_guidance) {
  return n_sources * latent_channels + (structural_guidance ? 5 : 0);
}

torch::Tensor area_pool(const torch::Tensor& grid, std::int64_t factor) {
  if (factor < 1 || grid.size(-2) % factor != 0 || grid.size(-1) % factor != 0) {
    throw std::invalid_argument("area_pool: grid is not divisible by the pooling factor");
  }
  std::vector<std::int64_t> shape(grid.sizes().begin(), grid.sizes().end() - 2);
  shape.insert(shape.end(), {grid.size(-2) / factor, factor, grid.size(-1) / factor, factor});
  return grid.reshape(shape).mean({-1, -3});
}

torch::Tensor tissue_masks(const TissueMap& tissue, std::int64_t factor) {
  auto one_hot = torch::one_hot(tissue.labels, kTissueClasses).permute({2, 0, 1}).to(torch::kFloat32);
  return area_pool(one_hot.slice(0, 1, kTissueClasses), factor);
}

ConditionSet build_structural_condition(const SliceSample& sample, const std::string& target,
                                        const std::vector<std::string>& sources, LatentCodec& codec,
                                        const ConditionOptions& options) {
  if (sources.empty()) throw std::invalid_argument("condition needs at least one source modality");
  if (std::find(sources.begin(), sources.end(), target) != sources.end()) {
    throw std::invalid_argument("target modality '" + target + "' cannot also be a condition");
  }
  std::vector<std::string> ordered = sources;
  std::sort(ordered.begin(), ordered.end());
  if (std::adjacent_find(ordered.begin(), ordered.end()) != ordered.end()) {
    throw std::invalid_argument("duplicate source modality");
  }
  const std::int64_t factor = CodecSpec::downsample_factor();
  if (sample.size() % factor != 0) {
    throw std::invalid_argument("sample resolution is not divisible by the codec factor");
  }

  ConditionSet set;
  set.sources = ordered;
  std::vector<torch::Tensor> parts;
  {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> images;
    for (const auto& name : ordered) images.push_back(sample.image(name).unsqueeze(0));
    auto latents = codec->encode(torch::stack(images));  // [n, lc, h, w]
    parts.push_back(latents.flatten(0, 1));
  }
  set.roles.assign(static_cast<std::size_t>(parts.front().size(0)), ChannelRole::kModalityLatent);

  if (options.structural_guidance) {
    parts.push_back(tissue_masks(sample.tissue, factor));
    set.roles.insert(set.roles.end(), 4, ChannelRole::kMask);
    const std::string& density_source =
        options.density_source.empty() ? ordered.front() : options.density_source;
    if (std::find(ordered.begin(), ordered.end(), density_source) == ordered.end()) {
      throw std::invalid_argument("density source '" + density_source + "' is not an available source");
    }
    parts.push_back(area_pool(density_map(sample, density_source), factor).unsqueeze(0));
    set.roles.push_back(ChannelRole::kDensity);
  }
  set.y = torch::cat(parts, 0);
  return set;
}

double channel_energy(const torch::Tensor& y_c, double mu_c, double varpi) {
  if (!(varpi > 0.0)) throw std::invalid_argument("channel_energy: varpi must be > 0");
  const double sq = y_c.to(torch::kFloat64).pow(2).sum().item<double>();
  if (!std::isfinite(sq) || !std::isfinite(mu_c)) {
    throw std::invalid_argument("channel_energy: non-finite input");
  }
  return mu_c * std::sqrt(sq + varpi);
}

torch::Tensor channel_energies(const torch::Tensor& y, const torch::Tensor& mu, double varpi) {
  if (!(varpi > 0.0)) throw std::invalid_argument("channel_energies: varpi must be > 0");
  if (y.dim() != 4 || y.size(1) != mu.size(0)) {
    throw std::invalid_argument("channel_energies: expected y [B, c, h, w] with c = len(mu)");
  }
  return mu * torch::sqrt(y.pow(2).sum({2, 3}) + varpi);
}

torch::Tensor normalize_energies(const torch::Tensor& energies, double varpi) {
  if (energies.dim() < 1 || energies.size(-1) < 1) {
    throw std::invalid_argument("normalize_energies: empty energy vector");
  }
  const double scale = std::sqrt(static_cast<double>(energies.size(-1)));
  return scale * energies / torch::sqrt(energies.pow(2).sum(-1, true) + varpi);
}

GateParams GateParams::identity_start(std::int64_t channels, double varpi) {
  return {torch::ones({channels}), torch::zeros({channels}), torch::zeros({channels}), varpi};
}

torch::Tensor gate_factors(const torch::Tensor& y, const GateParams& params) {
  const bool single = y.dim() == 3;
  const auto batched = single ? y.unsqueeze(0) : y;
  if (batched.dim() != 4 || batched.size(1) != params.channels() ||
      params.nu.size(0) != params.channels() || params.o.size(0) != params.channels()) {
    throw std::invalid_argument("gate_channels: parameter length does not match channel count");
  }
  auto g_hat = normalize_energies(channel_energies(batched, params.mu, params.varpi), params.varpi);
  return 1.0 + torch::sigmoid(params.nu * g_hat + params.o);
}

torch::Tensor gate_channels(const torch::Tensor& y, const GateParams& params) {
  const bool single = y.dim() == 3;
  auto factors = gate_factors(y, params).unsqueeze(-1).unsqueeze(-1);
  return single ? y * factors.squeeze(0) : y * factors;
}

AutoWeightImpl::AutoWeightImpl(std::int64_t channels, double varpi) : varpi_(varpi) {
  if (channels < 1) throw std::invalid_argument("AutoWeight needs at least one channel");
  if (!(varpi > 0.0)) throw std::invalid_argument("AutoWeight: varpi must be > 0");
  const auto start = GateParams::identity_start(channels, varpi);
  mu_ = register_parameter("mu", start.mu);
  nu_ = register_parameter("nu", start.nu);
  o_ = register_parameter("o", start.o);
}

torch::Tensor AutoWeightImpl::forward(const torch::Tensor& y) { return gate_channels(y, params()); }

GateParams AutoWeightImpl::params() const { return {mu_, nu_, o_, varpi_}; }

}  // namespace coladiff
