#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "coladiff/dataset.hpp"

namespace coladiff {

struct CodecSpec {
  std::int64_t latent_channels = 4;
  std::int64_t width_high = 32;  // channels at full resolution
  std::int64_t width_low = 64;   // channels after the first downsample
  double kl_weight = 1e-6;

  /// Two stride-2 stages.
  static constexpr std::int64_t downsample_factor() { return 4; }

  nlohmann::json to_json() const;
  static CodecSpec from_json(const nlohmann::json& j);
};

/// Pre-activation residual block with GroupNorm; a 1x1 projection handles a
/// change of width.
class CodecResBlockImpl : public torch::nn::Module {
 public:
  CodecResBlockImpl(std::int64_t in_channels, std::int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(CodecResBlock);

/// Encoder E / decoder D pair. Images are [B, 1, H, W] in [0, 1]; latents are
/// [B, latent_channels, H / 4, W / 4].
class LatentCodecImpl : public torch::nn::Module {
 public:
  explicit LatentCodecImpl(CodecSpec spec = {});

  /// Mean and log-variance of the diagonal Gaussian posterior.
  std::pair<torch::Tensor, torch::Tensor> posterior(const torch::Tensor& images);
  /// Posterior mean. Accepts [H, W], [1, H, W] or [B, 1, H, W].
  torch::Tensor encode(const torch::Tensor& images);
  /// Sigmoid-squashed reconstruction, [B, 1, H, W].
  torch::Tensor decode(const torch::Tensor& latent);

  /// Zeroes the output projection and sets its bias so the untrained decoder
  /// emits the constant `intensity`.
  void reset_output(double intensity);

  const CodecSpec& spec() const { return spec_; }

 private:
  torch::Tensor check_images(const torch::Tensor& images) const;

  CodecSpec spec_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
  torch::nn::Conv2d to_moments_{nullptr};
  torch::nn::Conv2d to_image_{nullptr};
};
TORCH_MODULE(LatentCodec);

struct CodecLoss {
  torch::Tensor total;
  torch::Tensor reconstruction;
  torch::Tensor kl;
};

/// Reconstruction MSE + kl_weight * KL(posterior || N(0, I)), both element
/// means accumulated in double precision. `noise` drives the reparameterised
/// latent sample and must match the latent shape.
CodecLoss codec_loss(LatentCodec& codec, const torch::Tensor& images, const torch::Tensor& noise,
                     double kl_weight);

struct CodecTrainConfig {
  std::int64_t steps = 2000;
  std::int64_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 100;
};

struct CodecTrainResult {
  LatentCodec codec{nullptr};
  std::vector<double> loss_trace;
  double best_val_mse = 0.0;
  std::int64_t best_step = 0;
};

/// Stacks every modality image of the samples into [N, 1, H, W].
torch::Tensor stack_images(const std::vector<SliceSample>& samples);

/// Trains on all modality images of `train`; keeps the parameters with the
/// best validation reconstruction MSE (train is used when val is empty).
CodecTrainResult train_codec(const std::vector<SliceSample>& train,
                             const std::vector<SliceSample>& val, const CodecSpec& spec,
                             const CodecTrainConfig& config);
CodecTrainResult train_codec(const Dataset& data, const CodecSpec& spec,
                             const CodecTrainConfig& config);

void save_codec(LatentCodec& codec, const std::filesystem::path& file,
                const std::string& config_hash = "");
LatentCodec load_codec(const std::filesystem::path& file);

}  // namespace coladiff
