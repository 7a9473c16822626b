#include "coladiff/codec.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace coladiff {
namespace nn = torch::nn;

namespace {

constexpr const char* kCodecFormat = "coladiff-codec";

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

std::int64_t groups_for(std::int64_t channels) { return std::min<std::int64_t>(8, channels); }

}  // namespace

nlohmann::json CodecSpec::to_json() const {
  return {{"latent_channels", latent_channels},
          {"width_high", width_high},
          {"width_low", width_low},
          {"kl_weight", kl_weight},
          {"downsample_factor", downsample_factor()}};
}

CodecSpec CodecSpec::from_json(const nlohmann::json& j) {
  CodecSpec s;
  s.latent_channels = j.at("latent_channels").get<std::int64_t>();
  s.width_high = j.at("width_high").get<std::int64_t>();
  s.width_low = j.at("width_low").get<std::int64_t>();
  s.kl_weight = j.at("kl_weight").get<double>();
  if (j.value("downsample_factor", downsample_factor()) != downsample_factor()) {
    throw std::runtime_error("codec checkpoint has an unsupported downsample factor");
  }
  return s;
}

CodecResBlockImpl::CodecResBlockImpl(std::int64_t in_channels, std::int64_t out_channels) {
  norm1_ = register_module("norm1", nn::GroupNorm(groups_for(in_channels), in_channels));
  conv1_ = register_module("conv1", conv(in_channels, out_channels, 3));
  norm2_ = register_module("norm2", nn::GroupNorm(groups_for(out_channels), out_channels));
  conv2_ = register_module("conv2", conv(out_channels, out_channels, 3));
  if (in_channels != out_channels) {
    skip_ = register_module("skip", conv(in_channels, out_channels, 1));
  }
}

torch::Tensor CodecResBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1_(torch::silu(norm1_(x)));
  h = conv2_(torch::silu(norm2_(h)));
  return (skip_ ? skip_(x) : x) + h;
}

LatentCodecImpl::LatentCodecImpl(CodecSpec spec) : spec_(spec) {
  if (spec_.latent_channels < 1 || spec_.width_high < 1 || spec_.width_low < 1 ||
      !(spec_.kl_weight >= 0.0)) {
    throw std::invalid_argument("invalid codec spec");
  }
  const auto hi = spec_.width_high, lo = spec_.width_low, c = spec_.latent_channels;
  encoder_ = register_module(
      "encoder", nn::Sequential(conv(1, hi, 3), CodecResBlock(hi, hi), conv(hi, lo, 3, 2),
                                CodecResBlock(lo, lo), conv(lo, lo, 3, 2), CodecResBlock(lo, lo),
                                nn::GroupNorm(groups_for(lo), lo), nn::SiLU()));
  to_moments_ = register_module("to_moments", conv(lo, 2 * c, 3));
  decoder_ = register_module(
      "decoder",
      nn::Sequential(conv(c, lo, 3), CodecResBlock(lo, lo),
                     nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)),
                     conv(lo, lo, 3), CodecResBlock(lo, lo),
                     nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest)),
                     conv(lo, hi, 3), CodecResBlock(hi, hi), nn::GroupNorm(groups_for(hi), hi),
                     nn::SiLU()));
  to_image_ = register_module("to_image", conv(hi, 1, 3));
}

torch::Tensor LatentCodecImpl::check_images(const torch::Tensor& images) const {
  torch::Tensor x = images;
  if (x.dim() == 2) x = x.unsqueeze(0).unsqueeze(0);
  if (x.dim() == 3) x = x.unsqueeze(0);
  if (x.dim() != 4 || x.size(1) != 1) {
    throw std::invalid_argument("codec expects single-channel images [B, 1, H, W]");
  }
  const auto f = CodecSpec::downsample_factor();
  if (x.size(2) % f != 0 || x.size(3) % f != 0) {
    throw std::invalid_argument("image size " + std::to_string(x.size(2)) + "x" +
                                std::to_string(x.size(3)) + " is not divisible by " +
                                std::to_string(f));
  }
  return x;
}

std::pair<torch::Tensor, torch::Tensor> LatentCodecImpl::posterior(const torch::Tensor& images) {
  auto moments = to_moments_(encoder_->forward(check_images(images)));
  auto parts = moments.chunk(2, 1);
  return {parts[0], parts[1].clamp(-30.0, 20.0)};
}

torch::Tensor LatentCodecImpl::encode(const torch::Tensor& images) { return posterior(images).first; }

torch::Tensor LatentCodecImpl::decode(const torch::Tensor& latent) {
  if (latent.dim() != 4 || latent.size(1) != spec_.latent_channels) {
    throw std::invalid_argument("codec expects latents [B, " + std::to_string(spec_.latent_channels) +
                                ", h, w]");
  }
  return torch::sigmoid(to_image_(decoder_->forward(latent)));
}

void LatentCodecImpl::reset_output(double intensity) {
  torch::NoGradGuard no_grad;
  const double p = std::clamp(intensity, 1e-3, 1.0 - 1e-3);
  to_image_->weight.zero_();
  to_image_->bias.fill_(std::log(p / (1.0 - p)));
}

CodecLoss codec_loss(LatentCodec& codec, const torch::Tensor& images, const torch::Tensor& noise,
                     double kl_weight) {
  auto [mean, logvar] = codec->posterior(images);
  if (noise.sizes() != mean.sizes()) throw std::invalid_argument("codec_loss: noise shape mismatch");
  auto z = mean + torch::exp(0.5 * logvar) * noise;
  auto recon = codec->decode(z);
  CodecLoss loss;
  loss.reconstruction = (recon - images).pow(2).mean(torch::kFloat64);
  loss.kl = 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).mean(torch::kFloat64);
  loss.total = loss.reconstruction + kl_weight * loss.kl;
  return loss;
}

torch::Tensor stack_images(const std::vector<SliceSample>& samples) {
  std::vector<torch::Tensor> images;
  for (const auto& s : samples) {
    for (const auto& [_, image] : s.images) images.push_back(image.unsqueeze(0));
  }
  if (images.empty()) throw std::invalid_argument("no images to stack");
  return torch::stack(images);
}

CodecTrainResult train_codec(const std::vector<SliceSample>& train,
                             const std::vector<SliceSample>& val, const CodecSpec& spec,
                             const CodecTrainConfig& config) {
  if (train.empty()) throw std::invalid_argument("train_codec: empty training split");
  if (config.steps < 0 || config.batch_size < 1 || config.eval_every < 1) {
    throw std::invalid_argument("train_codec: invalid schedule");
  }
  const torch::Tensor train_images = stack_images(train);
  const torch::Tensor val_images = val.empty() ? train_images : stack_images(val);

  torch::manual_seed(config.seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  CodecTrainResult result;
  result.codec = LatentCodec(spec);
  auto& codec = result.codec;
  codec->reset_output(train_images.mean().item<double>());

  torch::optim::Adam optim(codec->parameters(), torch::optim::AdamOptions(config.learning_rate));
  const auto n = train_images.size(0);
  const auto f = CodecSpec::downsample_factor();
  const std::vector<std::int64_t> latent_shape{config.batch_size, spec.latent_channels,
                                               train_images.size(2) / f, train_images.size(3) / f};

  auto evaluate = [&] {
    torch::NoGradGuard no_grad;
    double sum = 0.0;
    for (std::int64_t i = 0; i < val_images.size(0); i += 64) {
      auto batch = val_images.slice(0, i, std::min(i + 64, val_images.size(0)));
      sum += (codec->decode(codec->encode(batch)) - batch).pow(2).sum().item<double>();
    }
    return sum / static_cast<double>(val_images.numel());
  };

  std::vector<torch::Tensor> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : codec->parameters()) best.push_back(p.detach().clone());
  };
  result.best_val_mse = evaluate();
  result.best_step = 0;
  snapshot();

  for (std::int64_t step = 1; step <= config.steps; ++step) {
    auto idx = torch::randint(n, {config.batch_size}, gen, torch::kInt64);
    auto batch = train_images.index_select(0, idx);
    auto noise = torch::randn(latent_shape, gen, torch::kFloat32);
    auto loss = codec_loss(codec, batch, noise, spec.kl_weight);
    const double value = loss.total.item<double>();
    if (!std::isfinite(value)) {
      throw std::runtime_error("codec training diverged at step " + std::to_string(step) +
                               " (reconstruction " +
                               std::to_string(loss.reconstruction.item<double>()) + ", kl " +
                               std::to_string(loss.kl.item<double>()) + ")");
    }
    result.loss_trace.push_back(value);
    optim.zero_grad();
    loss.total.backward();
    optim.step();

    if (step % config.eval_every == 0 || step == config.steps) {
      const double mse = evaluate();
      if (mse < result.best_val_mse) {
        result.best_val_mse = mse;
        result.best_step = step;
        snapshot();
      }
    }
  }

  torch::NoGradGuard no_grad;
  auto params = codec->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(best[i]);
  codec->eval();
  return result;
}

CodecTrainResult train_codec(const Dataset& data, const CodecSpec& spec,
                             const CodecTrainConfig& config) {
  return train_codec(data.load_split(Split::kTrain), data.load_split(Split::kVal), spec, config);
}

void save_codec(LatentCodec& codec, const std::filesystem::path& file,
                const std::string& config_hash) {
  nlohmann::json header;
  header["format"] = kCodecFormat;
  header["version"] = 1;
  header["spec"] = codec->spec().to_json();
  header["config_hash"] = config_hash;
  torch::serialize::OutputArchive archive;
  archive.write("header", c10::IValue(header.dump()));
  torch::serialize::OutputArchive model;
  codec->save(model);
  archive.write("model", model);
  archive.save_to(file.string());
}

LatentCodec load_codec(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw std::runtime_error("missing codec checkpoint " + file.string());
  torch::serialize::InputArchive archive;
  archive.load_from(file.string());
  c10::IValue header_value;
  archive.read("header", header_value);
  const auto header = nlohmann::json::parse(header_value.toStringRef());
  if (header.value("format", "") != kCodecFormat) {
    throw std::runtime_error(file.string() + " is not a codec checkpoint");
  }
  LatentCodec codec(CodecSpec::from_json(header.at("spec")));
  torch::serialize::InputArchive model;
  archive.read("model", model);
  codec->load(model);
  codec->eval();
  return codec;
}

}  // namespace coladiff
