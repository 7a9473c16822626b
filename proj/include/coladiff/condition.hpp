#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "coladiff/codec.hpp"
#include "coladiff/phantom.hpp"

namespace coladiff {

enum class ChannelRole { kModalityLatent, kMask, kDensity };

/// Encoded multi-condition y, [c, h, w] at latent resolution.
///
/// Channel order: for each source modality in ascending name order its
/// latent_channels encoder channels; then (with structural guidance) the
/// area-pooled one-hot masks for WM, GM, CSF and tumor; then the area-pooled
/// density map.
struct ConditionSet {
  torch::Tensor y;
  std::vector<ChannelRole> roles;
  std::vector<std::string> sources;

  std::int64_t channels() const { return y.size(0); }
};

struct ConditionOptions {
  bool structural_guidance = true;
  /// Modality feeding the density map; empty selects the first source by name.
  std::string density_source;
};

/// Every modality of `all` except `target`, sorted by name.
std::vector<std::string> source_modalities(std::vector<std::string> all, const std::string& target);

std::int64_t condition_channels(std::int64_t n_sources, std::int64_t latent_channels,
                                bool structural_guidance);

/// Mean over non-overlapping factor x factor windows of the trailing two dims.
torch::Tensor area_pool(const torch::Tensor& grid, std::int64_t factor);

/// One-hot masks of labels 1..4, area-pooled: [4, H / factor, W / factor].
torch::Tensor tissue_masks(const TissueMap& tissue, std::int64_t factor);

ConditionSet build_structural_condition(const SliceSample& sample, const std::string& target,
                                        const std::vector<std::string>& sources, LatentCodec& codec,
                                        const ConditionOptions& options = {});

/// mu_c * sqrt(sum(y_c^2) + varpi) for a single channel grid.
double channel_energy(const torch::Tensor& y_c, double mu_c, double varpi);

/// Batched channel energies: y [B, c, h, w], mu [c] -> [B, c].
torch::Tensor channel_energies(const torch::Tensor& y, const torch::Tensor& mu, double varpi);

/// sqrt(S) * G_c / sqrt(sum_c G_c^2 + varpi) along the last dim, S its length.
torch::Tensor normalize_energies(const torch::Tensor& energies, double varpi);

struct GateParams {
  torch::Tensor mu;
  torch::Tensor nu;
  torch::Tensor o;
  double varpi = 1e-4;

  std::int64_t channels() const { return mu.size(0); }
  /// mu = 1, nu = 0, o = 0.
  static GateParams identity_start(std::int64_t channels, double varpi = 1e-4);
};

/// y_c * (1 + sigmoid(nu_c * Ghat_c + o_c)) per channel. y is [c, h, w] or
/// [B, c, h, w].
torch::Tensor gate_channels(const torch::Tensor& y, const GateParams& params);

/// Per-channel gate factors 1 + sigmoid(...), [B, c].
torch::Tensor gate_factors(const torch::Tensor& y, const GateParams& params);

/// Learnable auto-weight block holding mu, nu and o.
class AutoWeightImpl : public torch::nn::Module {
 public:
  explicit AutoWeightImpl(std::int64_t channels, double varpi = 1e-4);
  torch::Tensor forward(const torch::Tensor& y);
  GateParams params() const;

 private:
  torch::Tensor mu_, nu_, o_;
  double varpi_;
};
TORCH_MODULE(AutoWeight);

}  // namespace coladiff
