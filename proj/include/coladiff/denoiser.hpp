#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "coladiff/condition.hpp"
#include "coladiff/wavelet.hpp"

namespace coladiff {

struct DenoiserSpec {
  std::int64_t latent_channels = 4;
  /// Spatial size of the latent grid the network runs on.
  std::int64_t latent_size = 8;
  std::int64_t cond_channels = 17;
  std::int64_t base_width = 64;
  /// Width multiplier per down stage; its length is the depth.
  std::vector<std::int64_t> channel_mult{1, 2};
  /// Spatial sizes where transformer blocks run; empty selects the three
  /// coarsest rungs of the resolution ladder.
  std::set<std::int64_t> attention_resolutions;
  std::int64_t n_transformer_blocks = 1;
  std::int64_t heads = 4;
  std::int64_t time_embed_dim = 128;

  /// Residual bottleneck blocks plus 5x5/7x7 fusion; false swaps both for
  /// plain 3x3 convolution blocks.
  bool modified_network = true;
  /// Also concatenate the gated condition to the noisy latent at the input.
  bool cond_concat = false;
  bool autoweight = true;
  CoopFilterConfig coop_filter{};
  /// Wrap-around padding; used to probe translation consistency.
  bool circular_padding = false;

  std::int64_t depth() const { return static_cast<std::int64_t>(channel_mult.size()); }
  /// latent_size, latent_size / 2, ..., latent_size / 2^depth.
  std::vector<std::int64_t> ladder() const;
  std::set<std::int64_t> effective_attention() const;
  void validate() const;

  nlohmann::json to_json() const;
  static DenoiserSpec from_json(const nlohmann::json& j);
};

/// 1x1 -> 3x3 -> 1x1 convolutions with a residual join; the timestep
/// embedding is added after the first convolution. The last convolution is
/// zero-initialised, so a fresh block passes its (projected) input through.
class ResBottleneckImpl : public torch::nn::Module {
 public:
  ResBottleneckImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim, bool circular);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr};
  torch::nn::Conv2d reduce_{nullptr}, spatial_{nullptr}, expand_{nullptr}, skip_{nullptr};
  torch::nn::Linear temb_proj_{nullptr};
};
TORCH_MODULE(ResBottleneck);

/// Two 3x3 convolutions, no residual join.
class PlainBlockImpl : public torch::nn::Module {
 public:
  PlainBlockImpl(std::int64_t in, std::int64_t out, std::int64_t temb_dim, bool circular);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::Linear temb_proj_{nullptr};
};
TORCH_MODULE(PlainBlock);

/// Parallel 5x5 and 7x7 branches merged by attentional feature fusion: a
/// local (pointwise) plus global (pooled) channel-attention unit over the
/// branch sum yields a blend in [0, 1]; output x + blend * b5 + (1 - blend) * b7.
class FusionBlockImpl : public torch::nn::Module {
 public:
  FusionBlockImpl(std::int64_t channels, bool circular);
  torch::Tensor forward(const torch::Tensor& x);
  /// Per-element blend weights for the given input (for inspection).
  torch::Tensor blend(const torch::Tensor& x);

 private:
  std::pair<torch::Tensor, torch::Tensor> branches(const torch::Tensor& x);
  torch::Tensor mix_weights(const torch::Tensor& sum);

  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Conv2d branch5_{nullptr}, branch7_{nullptr};
  torch::nn::Sequential local_{nullptr}, global_{nullptr};
};
TORCH_MODULE(FusionBlock);

/// Pre-norm transformer block on the feature tokens: self-attention,
/// cross-attention from feature tokens to condition tokens, position-wise MLP.
class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(std::int64_t channels, std::int64_t cond_channels, std::int64_t heads);
  /// x [B, C, h, w]; cond [B, cond_channels, h, w] at the same resolution.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

 private:
  torch::Tensor attend(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) const;

  std::int64_t heads_;
  torch::nn::LayerNorm norm_self_{nullptr}, norm_cross_{nullptr}, norm_mlp_{nullptr};
  torch::nn::Linear self_qkv_{nullptr}, self_out_{nullptr};
  torch::nn::Linear cross_q_{nullptr}, cross_kv_{nullptr}, cross_out_{nullptr}, cond_proj_{nullptr};
  torch::nn::Linear mlp_in_{nullptr}, mlp_out_{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// Fixed 2D sinusoidal position codes, [h * w, channels].
torch::Tensor position_codes(std::int64_t h, std::int64_t w, std::int64_t channels);

/// Sinusoidal timestep features, [B, dim].
torch::Tensor timestep_features(const torch::Tensor& t, std::int64_t dim);

/// Noise predictor eps_theta(k_t, t, y~). Skip features from below the input
/// resolution pass through the cooperative filter on their way to the up path;
/// the full-resolution skip is carried over unfiltered.
class DenoiserImpl : public torch::nn::Module {
 public:
  explicit DenoiserImpl(DenoiserSpec spec);

  /// Auto-weight gating of the raw condition (identity when disabled).
  torch::Tensor gate(const torch::Tensor& y);
  /// kappa_t [B, latent_channels, L, L]; t [B] steps; y_gated [B, cond_channels, L, L].
  torch::Tensor forward(const torch::Tensor& kappa_t, const torch::Tensor& t,
                        const torch::Tensor& y_gated);

  const DenoiserSpec& spec() const { return spec_; }

 private:
  struct Stage {
    ResBottleneck res{nullptr};
    PlainBlock plain{nullptr};
    FusionBlock fusion{nullptr};
    std::vector<TransformerBlock> attention;
  };

  torch::Tensor run_block(Stage& stage, torch::Tensor h, const torch::Tensor& temb,
                          const torch::Tensor& y, std::int64_t resolution);
  torch::Tensor cond_at(const torch::Tensor& y, std::int64_t resolution) const;
  Stage make_stage(const std::string& name, std::int64_t in, std::int64_t out,
                   std::int64_t resolution, bool with_fusion);

  DenoiserSpec spec_;
  AutoWeight autoweight_{nullptr};
  torch::nn::Linear time_in_{nullptr}, time_out_{nullptr};
  torch::nn::Conv2d conv_in_{nullptr};
  std::vector<Stage> down_;
  std::vector<torch::nn::Conv2d> downsample_;
  Stage mid1_, mid2_;
  std::vector<torch::nn::Conv2d> upsample_;
  std::vector<Stage> up_;
  torch::nn::GroupNorm norm_out_{nullptr};
  torch::nn::Conv2d conv_out_{nullptr};
};
TORCH_MODULE(Denoiser);

/// Learned parameters plus their exponential-moving-average shadow. The shadow
/// is only read at sampling time.
struct DenoiserState {
  DenoiserSpec spec;
  Denoiser model{nullptr};
  Denoiser shadow{nullptr};
  std::int64_t step_count = 0;
  /// Largest |kappa_0| entry seen in training; 0 when unknown.
  double latent_bound = 0.0;

  std::int64_t parameter_count() const;
};

/// Deterministic under seed; the final projection is zero so the fresh net
/// predicts exactly 0.
DenoiserState build_denoiser(const DenoiserSpec& spec, std::uint64_t seed);

/// Noise prediction with the raw (default) or shadow parameters.
torch::Tensor predict_noise(DenoiserState& state, const torch::Tensor& kappa_t,
                            const torch::Tensor& t, const torch::Tensor& y_gated,
                            bool use_shadow = false);

/// shadow <- rate * shadow + (1 - rate) * parameters; requires 0 <= rate < 1.
void ema_update(DenoiserState& state, double rate);

void save_denoiser(DenoiserState& state, const std::filesystem::path& file,
                   const std::string& config_hash = "");
DenoiserState load_denoiser(const std::filesystem::path& file);

}  // namespace coladiff
